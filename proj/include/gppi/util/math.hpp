#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "gppi/util/errors.hpp"

namespace gppi {

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

/// Symmetrize and clip tiny negative eigenvalues to zero. Eigenvalues below
/// -hard_floor are treated as a genuine failure, not round-off.
inline Eigen::MatrixXd make_psd(const Eigen::MatrixXd& m, double hard_floor = 1e-8) {
    Eigen::MatrixXd s = symmetrized(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw PropagationError("eigendecomposition failed");
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig >= 0.0) return s;
    if (min_eig < -hard_floor) {
        throw PropagationError("covariance indefinite: min eigenvalue " + std::to_string(min_eig));
    }
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

struct CholeskyResult {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;  // amount added to the diagonal
};

/// Cholesky with jitter escalation: start at 1e-8 of the mean diagonal,
/// escalate x10 up to 1e-4 before giving up.
inline CholeskyResult jittered_cholesky(const Eigen::MatrixXd& k) {
    const double scale = std::max(k.diagonal().mean(), 1e-300);
    CholeskyResult out;
    out.llt.compute(k);
    if (out.llt.info() == Eigen::Success) return out;
    for (double rel = 1e-8; rel <= 1e-4 * (1.0 + 1e-12); rel *= 10.0) {
        const double jitter = rel * scale;
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += jitter;
        out.llt.compute(kj);
        if (out.llt.info() == Eigen::Success) {
            out.jitter = jitter;
            return out;
        }
    }
    throw ConditioningError("Gram matrix not positive definite after maximum jitter");
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below
/// rel_tol times the largest.
inline Eigen::MatrixXd pseudo_inverse_psd(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(m));
    const double cutoff = rel_tol * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd inv = es.eigenvalues();
    for (int i = 0; i < inv.size(); ++i) inv(i) = inv(i) > cutoff ? 1.0 / inv(i) : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// --- half-vectorization of symmetric matrices -------------------------------
//
// Storage order: (0,0),(1,0),...,(n-1,0),(1,1),(2,1),... (lower triangle by
// columns). Reading convention: component (i,j) holds the matrix entry value.
// Basis convention: perturbing component (i,j), i!=j, means adding
// e_i e_j' + e_j e_i' to the matrix. Gradients w.r.t. vech components are the
// sums of the two full-matrix partials off the diagonal.

inline int vech_size(int n) { return n * (n + 1) / 2; }

inline int vech_index(int i, int j, int n) {
    if (i < j) std::swap(i, j);
    return j * n - j * (j - 1) / 2 + (i - j);
}

inline Eigen::VectorXd vech(const Eigen::MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    Eigen::VectorXd v(vech_size(n));
    for (int j = 0, k = 0; j < n; ++j)
        for (int i = j; i < n; ++i) v(k++) = m(i, j);
    return v;
}

inline Eigen::MatrixXd unvech(const Eigen::VectorXd& v, int n) {
    Eigen::MatrixXd m(n, n);
    for (int j = 0, k = 0; j < n; ++j)
        for (int i = j; i < n; ++i) {
            m(i, j) = v(k);
            m(j, i) = v(k);
            ++k;
        }
    return m;
}

/// Gradient of a scalar w.r.t. vech components from the full-matrix gradient.
inline Eigen::VectorXd vech_gradient(const Eigen::MatrixXd& full_grad) {
    const int n = static_cast<int>(full_grad.rows());
    Eigen::VectorXd g(vech_size(n));
    for (int j = 0, k = 0; j < n; ++j)
        for (int i = j; i < n; ++i) {
            g(k++) = (i == j) ? full_grad(i, i) : full_grad(i, j) + full_grad(j, i);
        }
    return g;
}

}  // namespace gppi
