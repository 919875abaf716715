#pragma once

#include <Eigen/Dense>

#include "gppi/util/errors.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

/// Gaussian over a state (or joint state-control) vector. The covariance is
/// symmetrized on construction; eigenvalues in (-1e-8, 0) are clipped to zero,
/// anything lower is rejected as indefinite.
struct GaussianBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double time = 0.0;

    GaussianBelief() = default;
    GaussianBelief(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double t = 0.0)
        : mean(std::move(mu)), time(t) {
        if (sigma.rows() != sigma.cols() || sigma.rows() != mean.size())
            throw ShapeError("GaussianBelief: covariance shape mismatch");
        if (!mean.allFinite() || !sigma.allFinite())
            throw ShapeError("GaussianBelief: non-finite entries");
        cov = make_psd(sigma, 1e-8);
    }

    int dim() const { return static_cast<int>(mean.size()); }

    static GaussianBelief delta(const Eigen::VectorXd& x, double t = 0.0) {
        return GaussianBelief(x, Eigen::MatrixXd::Zero(x.size(), x.size()), t);
    }
};

/// First/second moments of the one-step transition dx under a Gaussian joint
/// input: d_mean/d_cov are the transition moments, cross_cov is COV[x~, dx]
/// over the full joint input.
struct MomentPrediction {
    Eigen::VectorXd d_mean;    // n
    Eigen::MatrixXd d_cov;     // n x n
    Eigen::MatrixXd cross_cov; // (n+m) x n
};

/// Dense Jacobian blocks of one propagation step in (mean, vech cov)
/// coordinates. Off-diagonal vech components follow the symmetrized-pair
/// basis (perturbing (i,j) adds e_i e_j' + e_j e_i').
struct MomentSensitivities {
    Eigen::MatrixXd dmu_dmu;    // n x n
    Eigen::MatrixXd dmu_dcov;   // n x vech(n)
    Eigen::MatrixXd dcov_dmu;   // vech(n) x n
    Eigen::MatrixXd dcov_dcov;  // vech(n) x vech(n)

    /// Full Jacobian in stacked (mean, vech cov) coordinates.
    Eigen::MatrixXd stacked() const {
        const int n = static_cast<int>(dmu_dmu.rows());
        const int v = static_cast<int>(dmu_dcov.cols());
        Eigen::MatrixXd j(n + v, n + v);
        j.topLeftCorner(n, n) = dmu_dmu;
        j.topRightCorner(n, v) = dmu_dcov;
        j.bottomLeftCorner(v, n) = dcov_dmu;
        j.bottomRightCorner(v, v) = dcov_dcov;
        return j;
    }
};

/// Jacobians of the transition moments consumed by step():
/// d_mean and the covariance growth U = d_cov + COV[x,dx] + COV[x,dx]',
/// both w.r.t. the state belief (mean, vech cov). Controls are deterministic.
struct TransitionJacobians {
    Eigen::MatrixXd dmean_dmu;   // n x n
    Eigen::MatrixXd dmean_dcov;  // n x vech(n)
    Eigen::MatrixXd dgrow_dmu;   // vech(n) x n
    Eigen::MatrixXd dgrow_dcov;  // vech(n) x vech(n)
};

}  // namespace gppi
