#pragma once

#include <Eigen/Dense>
#include <utility>

#include "gppi/belief/dynamics_model.hpp"
#include "gppi/belief/gaussian_belief.hpp"

namespace gppi {

enum class SensitivityMode { Analytic, FiniteDifference };

namespace detail {

/// Belief update without symmetrization/PSD repair (used by finite
/// differences, where repair would destroy smoothness).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> raw_step(
    const TransitionModel& model, const Eigen::VectorXd& mean,
    const Eigen::MatrixXd& cov, const Eigen::VectorXd& u) {
    const int n = model.state_dim();
    MomentPrediction mp;
    model.evaluate(mean, cov, u, mp, nullptr);
    Eigen::MatrixXd x = mp.cross_cov.topRows(n);  // COV[x, dx]
    return {mean + mp.d_mean, cov + mp.d_cov + x + x.transpose()};
}

}  // namespace detail

/// Propagate a Gaussian state belief one step under a deterministic control:
///   mu'  = mu + dmu
///   cov' = cov + dcov + COV[x,dx] + COV[x,dx]'   (symmetrized, PSD-clipped)
inline GaussianBelief step(const TransitionModel& model, const GaussianBelief& belief,
                           const Eigen::VectorXd& u, double dt = 0.0) {
    auto [mean, cov] = detail::raw_step(model, belief.mean, belief.cov, u);
    return GaussianBelief(std::move(mean), std::move(cov), belief.time + dt);
}

inline GaussianBelief step(const GpModel& model, const GaussianBelief& belief,
                           const Eigen::VectorXd& u, double dt = 0.0) {
    return step(GpDynamicsModel(model), belief, u, dt);
}

/// Jacobians of step() w.r.t. (mean, vech cov) of the input belief.
inline MomentSensitivities step_sensitivities(const TransitionModel& model,
                                              const GaussianBelief& belief,
                                              const Eigen::VectorXd& u,
                                              SensitivityMode mode = SensitivityMode::Analytic) {
    const int n = model.state_dim();
    const int nv = vech_size(n);
    MomentSensitivities sens;
    if (mode == SensitivityMode::Analytic) {
        MomentPrediction mp;
        TransitionJacobians tj;
        model.evaluate(belief.mean, belief.cov, u, mp, &tj);
        sens.dmu_dmu = Eigen::MatrixXd::Identity(n, n) + tj.dmean_dmu;
        sens.dmu_dcov = tj.dmean_dcov;
        sens.dcov_dmu = tj.dgrow_dmu;
        sens.dcov_dcov = Eigen::MatrixXd::Identity(nv, nv) + tj.dgrow_dcov;
        return sens;
    }

    // central finite differences on the raw (unrepaired) step
    sens.dmu_dmu.resize(n, n);
    sens.dmu_dcov.resize(n, nv);
    sens.dcov_dmu.resize(nv, n);
    sens.dcov_dcov.resize(nv, nv);
    const double h = 1e-5;
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd mp = belief.mean, mm = belief.mean;
        mp(k) += h;
        mm(k) -= h;
        auto [mu_p, cov_p] = detail::raw_step(model, mp, belief.cov, u);
        auto [mu_m, cov_m] = detail::raw_step(model, mm, belief.cov, u);
        sens.dmu_dmu.col(k) = (mu_p - mu_m) / (2 * h);
        sens.dcov_dmu.col(k) = vech((cov_p - cov_m) / (2 * h));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(n, n);
            delta(i, j) = h;
            delta(j, i) = h;
            auto [mu_p, cov_p] = detail::raw_step(model, belief.mean, belief.cov + delta, u);
            auto [mu_m, cov_m] = detail::raw_step(model, belief.mean, belief.cov - delta, u);
            const int col = vech_index(i, j, n);
            sens.dmu_dcov.col(col) = (mu_p - mu_m) / (2 * h);
            sens.dcov_dcov.col(col) = vech((cov_p - cov_m) / (2 * h));
        }
    }
    return sens;
}

inline MomentSensitivities step_sensitivities(const GpModel& model,
                                              const GaussianBelief& belief,
                                              const Eigen::VectorXd& u,
                                              SensitivityMode mode = SensitivityMode::Analytic) {
    return step_sensitivities(GpDynamicsModel(model), belief, u, mode);
}

/// Apply step() once per row of the control schedule.
inline GaussianBelief propagate_chain(const TransitionModel& model,
                                      GaussianBelief belief,
                                      const Eigen::MatrixXd& controls, double dt = 0.0) {
    for (int k = 0; k < controls.rows(); ++k)
        belief = step(model, belief, controls.row(k).transpose(), dt);
    return belief;
}

}  // namespace gppi
