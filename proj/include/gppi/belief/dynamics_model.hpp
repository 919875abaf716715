#pragma once

#include <Eigen/Dense>

#include "gppi/belief/gaussian_belief.hpp"
#include "gppi/belief/moment_matching.hpp"
#include "gppi/gp/model.hpp"

namespace gppi {

/// One-step transition model used by the planner: produces the moments of dx
/// given a Gaussian state belief and a deterministic control, and the
/// Jacobians of the induced belief update. Implementations must be safe for
/// concurrent evaluation.
class TransitionModel {
public:
    virtual ~TransitionModel() = default;
    virtual int state_dim() const = 0;
    virtual int control_dim() const = 0;

    /// Moments of dx; jacobians filled only when non-null.
    virtual void evaluate(const Eigen::VectorXd& x_mean, const Eigen::MatrixXd& x_cov,
                          const Eigen::VectorXd& u, MomentPrediction& mp,
                          TransitionJacobians* tj) const = 0;
};

/// GP-backed transition model. The latent moment-matched prediction is
/// augmented with the fitted noise variance on the diagonal: the learned
/// noise is the model's estimate of the process noise, so it belongs in
/// p(x_{t+dt} | x_t).
class GpDynamicsModel : public TransitionModel {
public:
    explicit GpDynamicsModel(const GpModel& model, bool include_process_noise = true)
        : model_(&model), include_noise_(include_process_noise) {}

    int state_dim() const override { return model_->state_dim(); }
    int control_dim() const override { return model_->control_dim(); }

    void evaluate(const Eigen::VectorXd& x_mean, const Eigen::MatrixXd& x_cov,
                  const Eigen::VectorXd& u, MomentPrediction& mp,
                  TransitionJacobians* tj) const override {
        const int n = state_dim(), m = control_dim();
        if (x_mean.size() != n || u.size() != m)
            throw ShapeError("GpDynamicsModel: dimension mismatch");
        Eigen::VectorXd joint_mean(n + m);
        joint_mean << x_mean, u;
        Eigen::MatrixXd joint_cov = Eigen::MatrixXd::Zero(n + m, n + m);
        joint_cov.topLeftCorner(n, n) = x_cov;
        MomentWorkspace ws(*model_, joint_mean, joint_cov, tj != nullptr);
        mp = ws.prediction();
        if (include_noise_)
            for (int a = 0; a < n; ++a) mp.d_cov(a, a) += model_->noise_variance(a);
        if (tj) *tj = ws.state_jacobians();
    }

    const GpModel& gp() const { return *model_; }

private:
    const GpModel* model_;
    bool include_noise_;
};

/// Exact linear-Gaussian transition: dx = (A x + Bc u) dt + B_n e sqrt(dt).
/// Injects the exact moments in place of a learned model, isolating the
/// control math from model error.
class PerfectLinearModel : public TransitionModel {
public:
    PerfectLinearModel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& bc,
                       const Eigen::MatrixXd& bnoise, const Eigen::MatrixXd& noise_cov,
                       double dt)
        : m_(a * dt), bd_(bc * dt),
          noise_(bnoise * noise_cov * bnoise.transpose() * dt) {}

    int state_dim() const override { return static_cast<int>(m_.rows()); }
    int control_dim() const override { return static_cast<int>(bd_.cols()); }

    void evaluate(const Eigen::VectorXd& x_mean, const Eigen::MatrixXd& x_cov,
                  const Eigen::VectorXd& u, MomentPrediction& mp,
                  TransitionJacobians* tj) const override {
        const int n = state_dim(), m = control_dim();
        mp.d_mean = m_ * x_mean + bd_ * u;
        mp.d_cov = m_ * x_cov * m_.transpose() + noise_;
        mp.cross_cov = Eigen::MatrixXd::Zero(n + m, n);
        mp.cross_cov.topRows(n) = x_cov * m_.transpose();
        if (!tj) return;
        const int nv = vech_size(n);
        tj->dmean_dmu = m_;
        tj->dmean_dcov = Eigen::MatrixXd::Zero(n, nv);
        tj->dgrow_dmu = Eigen::MatrixXd::Zero(nv, n);
        tj->dgrow_dcov.resize(nv, nv);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(n, n);
                ds(i, j) = 1.0;
                ds(j, i) = 1.0;
                Eigen::MatrixXd du =
                    m_ * ds * m_.transpose() + ds * m_.transpose() + m_ * ds;
                tj->dgrow_dcov.col(vech_index(i, j, n)) = vech(du);
            }
        }
    }

private:
    Eigen::MatrixXd m_;      // A dt
    Eigen::MatrixXd bd_;     // Bc dt
    Eigen::MatrixXd noise_;  // B_n S_w B_n' dt
};

}  // namespace gppi
