#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gppi/gp/kernel.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

/// Log marginal likelihood of one output column:
///   L = -1/2 y' (K + s_n^2 I)^-1 y - 1/2 log|K + s_n^2 I| - N/2 log 2pi.
inline double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Hyperparams& p) {
    const int n = static_cast<int>(y.size());
    CholeskyResult chol = jittered_cholesky(gram_matrix(p, x));
    Eigen::VectorXd alpha = chol.llt.solve(y);
    return -0.5 * y.dot(alpha) - 0.5 * log_det_from_llt(chol.llt) -
           0.5 * n * std::log(2.0 * M_PI);
}

struct LmlWithGrad {
    double value = 0.0;
    // gradient w.r.t. (log l_1, ..., log l_D, log s_s, log s_n)
    Eigen::VectorXd grad;
};

inline LmlWithGrad log_marginal_likelihood_with_grad(const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXd& y,
                                                     const Hyperparams& p) {
    const int n = static_cast<int>(y.size());
    const int d = static_cast<int>(p.lengthscales.size());
    Eigen::MatrixXd k = gram_matrix(p, x);
    CholeskyResult chol = jittered_cholesky(k);
    Eigen::VectorXd alpha = chol.llt.solve(y);
    Eigen::MatrixXd kinv = chol.llt.solve(Eigen::MatrixXd::Identity(n, n));

    LmlWithGrad out;
    out.value = -0.5 * y.dot(alpha) - 0.5 * log_det_from_llt(chol.llt) -
                0.5 * n * std::log(2.0 * M_PI);
    out.grad.resize(d + 2);

    // dL/dtheta = 1/2 tr((alpha alpha' - K^-1) dK/dtheta)
    Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;
    const double sn2 = p.noise_std * p.noise_std;
    Eigen::MatrixXd ks = k;  // noise-free part
    ks.diagonal().array() -= sn2 + chol.jitter;

    for (int j = 0; j < d; ++j) {
        // dK/dlog l_j = Ks .* D_j,  (D_j)_ik = (x_ij - x_kj)^2 / l_j^2
        Eigen::VectorXd col = x.col(j) / p.lengthscales(j);
        Eigen::MatrixXd diff = col.replicate(1, n) - col.transpose().replicate(n, 1);
        out.grad(j) = 0.5 * (w.array() * ks.array() * diff.array().square()).sum();
    }
    out.grad(d) = (w.array() * ks.array()).sum();             // dK/dlog s_s = 2 Ks
    out.grad(d + 1) = sn2 * w.diagonal().sum();               // dK/dlog s_n = 2 s_n^2 I
    return out;
}

}  // namespace gppi
