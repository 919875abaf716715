#pragma once

#include <Eigen/Core>
#include <cmath>

#include "gppi/util/errors.hpp"

namespace gppi {

/// Squared-exponential ARD kernel parameters for one output dimension:
///   k(a,b) = signal_std^2 * exp(-1/2 sum_d ((a_d-b_d)/lengthscale_d)^2)
/// i.e. the precision matrix in the exponent is W = diag(lengthscales)^-2.
/// Noise variance contributes to same-record (diagonal) Gram entries only.
struct Hyperparams {
    double signal_std = 1.0;
    double noise_std = 0.1;
    Eigen::VectorXd lengthscales;

    void validate() const {
        if (!(signal_std > 0.0) || !(noise_std > 0.0))
            throw ShapeError("hyperparams: signal and noise std must be positive");
        if (lengthscales.size() < 1 || (lengthscales.array() <= 0.0).any())
            throw ShapeError("hyperparams: lengthscales must be positive");
    }

    Eigen::VectorXd precision_diag() const {
        return lengthscales.array().square().inverse();
    }
};

inline double kernel_eval(const Hyperparams& p, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b, bool same_record_noise = false) {
    if (a.size() != b.size() || a.size() != p.lengthscales.size())
        throw ShapeError("kernel_eval: dimension mismatch");
    const double d2 = ((a - b).array() / p.lengthscales.array()).square().sum();
    double k = p.signal_std * p.signal_std * std::exp(-0.5 * d2);
    if (same_record_noise) k += p.noise_std * p.noise_std;
    return k;
}

/// Gram matrix of the training inputs (rows of X), noise on the diagonal.
inline Eigen::MatrixXd gram_matrix(const Hyperparams& p, const Eigen::MatrixXd& x) {
    const int n = static_cast<int>(x.rows());
    const double s2 = p.signal_std * p.signal_std;
    Eigen::MatrixXd scaled = x.array().rowwise() / p.lengthscales.transpose().array();
    Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
    Eigen::MatrixXd k = -2.0 * scaled * scaled.transpose();
    k.colwise() += sq;
    k.rowwise() += sq.transpose();
    k = s2 * (-0.5 * k.array()).exp();
    k.diagonal().array() = s2 + p.noise_std * p.noise_std;
    return k;
}

inline Eigen::VectorXd kernel_vector(const Hyperparams& p, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& q) {
    Eigen::MatrixXd diff = x.rowwise() - q.transpose();
    Eigen::VectorXd d2 =
        (diff.array().rowwise() / p.lengthscales.transpose().array()).square().rowwise().sum();
    return p.signal_std * p.signal_std * (-0.5 * d2.array()).exp();
}

}  // namespace gppi
