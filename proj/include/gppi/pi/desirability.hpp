#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gppi/belief/propagate.hpp"
#include "gppi/pi/cost.hpp"

namespace gppi {

// The desirability of a state is evaluated by cost-tilted forward filtering:
// starting from a delta belief at x, each step propagates the belief through
// the transition model and folds the exponentiated state cost
// exp(-(x-g)'M(x-g)), M = (dt/lambda) Q (+ terminal weight / lambda at the
// horizon end), as a Gaussian reweighting. Folding a weight into N(mu, S)
// gives the one-step factor
//
//   psi = |I + 2 S M|^-1/2 exp(-1/2 (mu-g)' Qm (mu-g)),
//   Qm  = 2 M (I + 2 S M)^-1,
//
// and the reweighted belief mu <- mu - S Qm (mu-g), S <- S - S Qm S, from
// which the next step continues. The product of the per-step factors is the
// desirability; in the linear-Gaussian case every integral is exact. The
// gradient with respect to the start state chains the per-step propagation
// Jacobians with the tilt Jacobians in one backward (adjoint) pass, entirely
// in log domain.

struct OneStepDesirability {
    double psi = 1.0;
    double log_psi = 0.0;
    double log_scale = 0.0;      // ln S (determinant factor)
    Eigen::MatrixXd precision;   // Qm
};

namespace detail {

inline Eigen::MatrixXd tilt_weight(const CostSpec& cost, int local_step, int local_horizon) {
    Eigen::MatrixXd m = (cost.dt / cost.temperature) * cost.state_weight;
    if (local_step == local_horizon) m += cost.terminal_weight / cost.temperature;
    return symmetrized(m);
}

struct TiltResult {
    OneStepDesirability one_step;
    Eigen::VectorXd mean;    // reweighted belief
    Eigen::MatrixXd cov;
    Eigen::MatrixXd c;       // (I + 2 S M)^-1 = I - S Qm
    Eigen::VectorXd qd;      // Qm (mu - g)
};

inline TiltResult tilt(const Eigen::VectorXd& mu, const Eigen::MatrixXd& s,
                       const Eigen::MatrixXd& m, const Eigen::VectorXd& goal) {
    const int n = static_cast<int>(mu.size());
    TiltResult out;
    Eigen::MatrixXd x = Eigen::MatrixXd::Identity(n, n) + 2.0 * s * m;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(x);
    out.c = lu.inverse();
    Eigen::MatrixXd qm = symmetrized(2.0 * m * out.c);
    Eigen::VectorXd d = mu - goal;
    out.qd = qm * d;
    out.one_step.log_scale = -0.5 * std::log(std::abs(lu.determinant()));
    out.one_step.log_psi = out.one_step.log_scale - 0.5 * d.dot(out.qd);
    out.one_step.psi = std::exp(out.one_step.log_psi);
    out.one_step.precision = qm;
    out.mean = mu - s * out.qd;
    out.cov = symmetrized(s - s * qm * s);
    return out;
}

}  // namespace detail

/// Exact Gaussian integral of the exponentiated state cost against a belief:
/// returns psi in (0, 1], the scale factor S and precision Qm. The step index
/// selects the goal row and whether the terminal weight applies
/// (local_step == cost.horizon_steps).
inline OneStepDesirability one_step_desirability(const GaussianBelief& belief,
                                                 const CostSpec& cost, int local_step) {
    Eigen::MatrixXd m = detail::tilt_weight(cost, local_step, cost.horizon_steps);
    return detail::tilt(belief.mean, belief.cov, m, cost.goal_at(local_step)).one_step;
}

/// Desirability of a start state with its per-step factors, optionally the
/// analytic gradient, all in log domain.
struct DesirabilityEval {
    double log_psi = 0.0;
    Eigen::VectorXd grad_log_psi;  // empty unless gradient was requested
    bool has_gradient = false;
    std::vector<double> step_log_scales;
    std::vector<Eigen::MatrixXd> step_precisions;

    double psi() const { return std::exp(log_psi); }
    Eigen::VectorXd grad() const { return psi() * grad_log_psi; }
    double value(double lambda) const { return -lambda * log_psi; }

    static DesirabilityEval from_psi_and_grad(double psi_value, const Eigen::VectorXd& grad) {
        if (!(psi_value > 0.0))
            throw ShapeError("DesirabilityEval: psi must be positive");
        DesirabilityEval e;
        e.log_psi = std::log(psi_value);
        e.grad_log_psi = grad / psi_value;
        e.has_gradient = true;
        return e;
    }
};

struct ChainTrace {
    std::vector<GaussianBelief> predicted;  // beliefs before the cost fold
    std::vector<GaussianBelief> tilted;     // beliefs after the cost fold
};

struct DesirabilityOptions {
    SensitivityMode sensitivity = SensitivityMode::Analytic;
    int horizon_override = -1;  // < 0: use cost.horizon_steps
    int goal_offset = 0;        // shift of the goal/terminal indexing (suffix evals)
    ChainTrace* trace = nullptr;
};

inline DesirabilityEval evaluate_desirability(const TransitionModel& model,
                                              const Eigen::VectorXd& x,
                                              const CostSpec& cost,
                                              const Eigen::MatrixXd* schedule,
                                              bool with_gradient,
                                              const DesirabilityOptions& opts = {}) {
    const int n = model.state_dim();
    const int m = model.control_dim();
    const int nv = vech_size(n);
    const int horizon =
        opts.horizon_override > 0 ? opts.horizon_override : cost.horizon_steps;
    if (horizon < 1) throw ShapeError("desirability: horizon must be >= 1 step");
    if (x.size() != n) throw ShapeError("desirability: state dimension mismatch");
    if (schedule && schedule->rows() < horizon)
        throw ShapeError("desirability: schedule shorter than the horizon");

    DesirabilityEval eval;
    eval.step_log_scales.reserve(horizon);
    eval.step_precisions.reserve(horizon);

    std::vector<MomentSensitivities> sens;
    std::vector<detail::TiltResult> tilts;
    if (with_gradient) {
        sens.reserve(horizon);
        tilts.reserve(horizon);
    }

    GaussianBelief belief = GaussianBelief::delta(x);
    const int full_horizon = cost.horizon_steps;
    for (int j = 1; j <= horizon; ++j) {
        Eigen::VectorXd u = schedule ? Eigen::VectorXd(schedule->row(j - 1).transpose())
                                     : Eigen::VectorXd::Zero(m);
        if (with_gradient)
            sens.push_back(step_sensitivities(model, belief, u, opts.sensitivity));
        GaussianBelief pred = step(model, belief, u, cost.dt);
        if (opts.trace) opts.trace->predicted.push_back(pred);

        const int global_step = std::min(j + opts.goal_offset, full_horizon);
        Eigen::MatrixXd mw = detail::tilt_weight(cost, j, horizon);
        detail::TiltResult tr =
            detail::tilt(pred.mean, pred.cov, mw, cost.goal_at(global_step));
        eval.log_psi += tr.one_step.log_psi;
        eval.step_log_scales.push_back(tr.one_step.log_scale);
        eval.step_precisions.push_back(tr.one_step.precision);

        belief = GaussianBelief(tr.mean, tr.cov, pred.time);
        if (opts.trace) opts.trace->tilted.push_back(belief);
        if (with_gradient) tilts.push_back(std::move(tr));
    }

    if (!with_gradient) return eval;

    // Backward adjoint pass in (mean, vech cov) coordinates. a_j is the
    // gradient of ln Psi w.r.t. the predicted belief at step j.
    auto tilt_jacobian = [&](const detail::TiltResult& tr) {
        Eigen::MatrixXd tj = Eigen::MatrixXd::Zero(n + nv, n + nv);
        tj.topLeftCorner(n, n) = tr.c;
        for (int i = 0; i < n; ++i) {
            for (int j2 = 0; j2 <= i; ++j2) {
                const int col = vech_index(i, j2, n);
                Eigen::VectorXd dmu;
                Eigen::MatrixXd dcov;
                if (i == j2) {
                    dmu = -tr.c.col(i) * tr.qd(i);
                    dcov = tr.c.col(i) * tr.c.col(i).transpose();
                } else {
                    dmu = -(tr.c.col(i) * tr.qd(j2) + tr.c.col(j2) * tr.qd(i));
                    dcov = tr.c.col(i) * tr.c.col(j2).transpose() +
                           tr.c.col(j2) * tr.c.col(i).transpose();
                }
                tj.block(0, n + col, n, 1) = dmu;
                tj.block(n, n + col, nv, 1) = vech(dcov);
            }
        }
        return tj;
    };

    Eigen::VectorXd adj;
    for (int j = horizon; j >= 1; --j) {
        const detail::TiltResult& tr = tilts[j - 1];
        Eigen::VectorXd direct(n + nv);
        direct.head(n) = -tr.qd;
        direct.tail(nv) = vech_gradient(-0.5 * tr.one_step.precision +
                                        0.5 * tr.qd * tr.qd.transpose());
        if (j == horizon) {
            adj = direct;
        } else {
            adj = direct + tilt_jacobian(tr).transpose() *
                               (sens[j].stacked().transpose() * adj);
        }
    }
    eval.grad_log_psi =
        sens[0].dmu_dmu.transpose() * adj.head(n) +
        sens[0].dcov_dmu.transpose() * adj.tail(nv);
    eval.has_gradient = true;
    return eval;
}

/// Desirability under the uncontrolled process (or a fixed control schedule).
inline DesirabilityEval desirability(const TransitionModel& model, const Eigen::VectorXd& x,
                                     const CostSpec& cost,
                                     const Eigen::MatrixXd* schedule = nullptr,
                                     const DesirabilityOptions& opts = {}) {
    return evaluate_desirability(model, x, cost, schedule, false, opts);
}

inline DesirabilityEval desirability_gradient(const TransitionModel& model,
                                              const Eigen::VectorXd& x, const CostSpec& cost,
                                              const Eigen::MatrixXd* schedule = nullptr,
                                              const DesirabilityOptions& opts = {}) {
    return evaluate_desirability(model, x, cost, schedule, true, opts);
}

inline DesirabilityEval desirability(const GpModel& model, const Eigen::VectorXd& x,
                                     const CostSpec& cost,
                                     const Eigen::MatrixXd* schedule = nullptr,
                                     const DesirabilityOptions& opts = {}) {
    return desirability(GpDynamicsModel(model), x, cost, schedule, opts);
}

inline DesirabilityEval desirability_gradient(const GpModel& model, const Eigen::VectorXd& x,
                                              const CostSpec& cost,
                                              const Eigen::MatrixXd* schedule = nullptr,
                                              const DesirabilityOptions& opts = {}) {
    return desirability_gradient(GpDynamicsModel(model), x, cost, schedule, opts);
}

}  // namespace gppi
