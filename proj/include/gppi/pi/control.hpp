#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "gppi/pi/desirability.hpp"
#include "gppi/plants/plants.hpp"

namespace gppi {

/// Explicit optimal control u = lambda R^-1 G' (grad Psi / Psi), evaluated in
/// log domain. Throws once the desirability has left the representable range.
inline Eigen::VectorXd optimal_control(const DesirabilityEval& eval,
                                       const Eigen::MatrixXd& g_matrix,
                                       const CostSpec& cost) {
    if (!eval.has_gradient)
        throw ShapeError("optimal_control: evaluation carries no gradient");
    if (eval.log_psi < std::log(1e-300))
        throw DesirabilityUnderflowError(
            "desirability underflow (psi < 1e-300); increase lambda or shorten the horizon");
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(cost.control_weight));
    return cost.temperature * llt.solve(g_matrix.transpose() * eval.grad_log_psi);
}

/// Diagnostic for the temperature assumption R = lambda * S_w,eff^-1 with the
/// noise entering through the actuated channel (B = G C for some C).
struct PiAssumptionReport {
    bool pass = false;
    double channel_residual = 0.0;      // ||G C - B|| / ||B||
    double weight_residual = 0.0;       // ||R - lambda Sw_eff^-1|| / ||R||
    Eigen::MatrixXd implied_control_weight;  // lambda (C S_w C')^-1
    std::string message;
};

inline PiAssumptionReport validate_pi_assumption(const CostSpec& cost,
                                                 const Eigen::MatrixXd& noise_cov,
                                                 const Eigen::MatrixXd& g_matrix,
                                                 const Eigen::MatrixXd& b_matrix,
                                                 double tol = 1e-6) {
    PiAssumptionReport rep;
    Eigen::MatrixXd c =
        g_matrix.completeOrthogonalDecomposition().pseudoInverse() * b_matrix;
    const double bnorm = std::max(b_matrix.norm(), 1e-300);
    rep.channel_residual = (g_matrix * c - b_matrix).norm() / bnorm;

    Eigen::MatrixXd sw_eff = c * noise_cov * c.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(sw_eff));
    if (llt.info() != Eigen::Success) {
        rep.message = "effective control-channel noise covariance is singular";
        return rep;
    }
    rep.implied_control_weight =
        cost.temperature *
        llt.solve(Eigen::MatrixXd::Identity(sw_eff.rows(), sw_eff.cols()));
    rep.weight_residual = (cost.control_weight - rep.implied_control_weight).norm() /
                          std::max(cost.control_weight.norm(), 1e-300);
    rep.pass = rep.channel_residual <= tol && rep.weight_residual <= tol;
    rep.message = rep.pass ? "R = lambda * Sw_eff^-1 holds"
                           : "temperature assumption violated; residual " +
                                 std::to_string(rep.weight_residual);
    return rep;
}

enum class HorizonMode { Rolling, ToEpisodeEnd };

struct RecedingHorizonOptions {
    HorizonMode mode = HorizonMode::Rolling;
    double u_max = 0.0;  // clamp per control dimension when > 0
    SensitivityMode sensitivity = SensitivityMode::Analytic;
};

/// Closed-loop run: at every step, evaluate the desirability gradient from the
/// current true state, apply the explicit optimal control for one dt, re-plan.
inline Episode receding_horizon_run(const PlantSpec& plant, const TransitionModel& model,
                                    const CostSpec& cost, const Eigen::VectorXd& x0,
                                    int episode_steps, std::uint64_t seed,
                                    const RecedingHorizonOptions& opts = {}) {
    const int n = plant.state_dim, m = plant.control_dim;
    Episode ep;
    ep.dt = cost.dt;
    ep.seed = seed;
    ep.states.resize(episode_steps + 1, n);
    ep.controls.resize(episode_steps, m);
    ep.transitions.resize(episode_steps, n);
    ep.noises.resize(episode_steps, plant.noise_dim);
    ep.step_costs = Eigen::VectorXd::Zero(episode_steps);
    ep.psi.resize(episode_steps);
    Rng rng(seed);
    Eigen::VectorXd x = x0;
    ep.states.row(0) = x.transpose();
    for (int k = 0; k < episode_steps; ++k) {
        DesirabilityOptions dopts;
        dopts.sensitivity = opts.sensitivity;
        if (opts.mode == HorizonMode::ToEpisodeEnd) {
            dopts.horizon_override = std::min(cost.horizon_steps, episode_steps - k);
            dopts.goal_offset = k;
        }
        Eigen::VectorXd u;
        DesirabilityEval eval;
        try {
            eval = desirability_gradient(model, x, cost, nullptr, dopts);
            u = optimal_control(eval, plant.control_matrix(x), cost);
        } catch (const DesirabilityUnderflowError& e) {
            throw DesirabilityUnderflowError(std::string(e.what()) + " at step " +
                                             std::to_string(k));
        }
        if (opts.u_max > 0.0)
            u = u.cwiseMax(-opts.u_max).cwiseMin(opts.u_max);
        EmStep s = em_step(plant, x, u, cost.dt, rng);
        ep.controls.row(k) = u.transpose();
        ep.transitions.row(k) = s.dx.transpose();
        ep.noises.row(k) = s.noise.transpose();
        ep.psi[k] = eval.psi();
        ep.step_costs(k) = cost.state_cost(x, std::min(k + 1, cost.horizon_steps)) +
                           cost.control_cost(u);
        ep.cumulative_cost += ep.step_costs(k) * cost.dt;
        x = s.x_next;
        ep.states.row(k + 1) = x.transpose();
    }
    ep.cumulative_cost += cost.terminal_cost(x);
    return ep;
}

}  // namespace gppi
