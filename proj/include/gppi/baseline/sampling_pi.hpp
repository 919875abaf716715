#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "gppi/pi/cost.hpp"
#include "gppi/plants/plants.hpp"

namespace gppi {

// Model-free sampling baseline: forward-simulate noisy rollouts on the plant
// under the current schedule, weight them by exponentiated path cost, and move
// each schedule entry by the weighted noise mapped through the control
// channel. The update rule follows the standard iterative path-integral
// literature; this paper's figures only reference it.

struct SampledPathBatch {
    std::vector<Eigen::MatrixXd> states;   // per path, (steps+1) x n
    std::vector<Eigen::MatrixXd> noises;   // per path, steps x p (raw draws)
    std::vector<Eigen::MatrixXd> mapped_du;  // per path, steps x m: pinv(G) B e / sqrt(dt)
    Eigen::MatrixXd step_costs;            // K x steps (state-cost rate at arrival)
    Eigen::VectorXd terminal_costs;        // K
    Eigen::VectorXd total_costs;           // K: integral + terminal
    Eigen::VectorXd weights;               // softmin of total costs
    double dt = 0.0;

    int paths() const { return static_cast<int>(states.size()); }
    int steps() const { return static_cast<int>(step_costs.cols()); }
};

namespace detail {

inline Eigen::VectorXd softmin_weights(const Eigen::VectorXd& costs, double lambda) {
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < costs.size(); ++i)
        if (std::isfinite(costs(i))) lo = std::min(lo, costs(i));
    if (!std::isfinite(lo))
        throw TemperatureError(
            "all sampled path costs are non-finite; increase lambda or check the plant");
    Eigen::VectorXd w = (-(costs.array() - lo) / lambda).exp();
    for (int i = 0; i < costs.size(); ++i)
        if (!std::isfinite(costs(i))) w(i) = 0.0;
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total))
        throw TemperatureError("sampling weights degenerate; increase lambda");
    return w / total;
}

}  // namespace detail

/// Simulate `count` noisy rollouts under the schedule and record everything
/// the weighting step needs.
inline SampledPathBatch sample_paths(const PlantSpec& plant, const CostSpec& cost,
                                     const Eigen::VectorXd& x0,
                                     const Eigen::MatrixXd& schedule, int count,
                                     int horizon, std::uint64_t seed) {
    if (count < 1 || horizon < 1)
        throw ShapeError("sample_paths: count and horizon must be >= 1");
    if (schedule.rows() < horizon)
        throw ShapeError("sample_paths: schedule shorter than the horizon");
    const int n = plant.state_dim, m = plant.control_dim, p = plant.noise_dim;
    SampledPathBatch batch;
    batch.dt = cost.dt;
    batch.states.reserve(count);
    batch.noises.reserve(count);
    batch.mapped_du.reserve(count);
    batch.step_costs.resize(count, horizon);
    batch.terminal_costs.resize(count);
    batch.total_costs.resize(count);
    Rng root(seed);
    const double sqrt_dt = std::sqrt(cost.dt);
    for (int i = 0; i < count; ++i) {
        Rng stream = root.child(i);
        Eigen::MatrixXd states(horizon + 1, n), noises(horizon, p), du(horizon, m);
        Eigen::VectorXd x = x0;
        states.row(0) = x.transpose();
        for (int t = 0; t < horizon; ++t) {
            Eigen::VectorXd u = schedule.row(t).transpose();
            Eigen::MatrixXd g = plant.control_matrix(x);
            EmStep s = em_step(plant, x, u, cost.dt, stream);
            noises.row(t) = s.noise.transpose();
            du.row(t) = (g.completeOrthogonalDecomposition().pseudoInverse() *
                         plant.diffusion(x) * s.noise / sqrt_dt)
                            .transpose();
            x = s.x_next;
            states.row(t + 1) = x.transpose();
            batch.step_costs(i, t) =
                cost.state_cost(x, std::min(t + 1, cost.horizon_steps));
        }
        batch.terminal_costs(i) = cost.terminal_cost(x);
        batch.total_costs(i) =
            batch.step_costs.row(i).sum() * cost.dt + batch.terminal_costs(i);
        batch.states.push_back(std::move(states));
        batch.noises.push_back(std::move(noises));
        batch.mapped_du.push_back(std::move(du));
    }
    batch.weights = detail::softmin_weights(batch.total_costs, cost.temperature);
    return batch;
}

/// Schedule increment at one grid step: softmin weights over the cost-to-go
/// from that step, applied to the noise-equivalent control perturbations.
inline Eigen::VectorXd control_estimate(const SampledPathBatch& batch, double lambda,
                                        int step_index) {
    const int k = batch.paths(), steps = batch.steps();
    if (step_index < 0 || step_index >= steps)
        throw ShapeError("control_estimate: step index out of range");
    Eigen::VectorXd ctg(k);
    for (int i = 0; i < k; ++i)
        ctg(i) = batch.step_costs.row(i).tail(steps - step_index).sum() * batch.dt +
                 batch.terminal_costs(i);
    Eigen::VectorXd w = detail::softmin_weights(ctg, lambda);
    const int m = static_cast<int>(batch.mapped_du[0].cols());
    Eigen::VectorXd update = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < k; ++i)
        update += w(i) * batch.mapped_du[i].row(step_index).transpose();
    return update;
}

struct BaselineRunResult {
    Episode episode;
    long long sampled_transitions = 0;  // paths x horizon x updates, exactly
    int updates = 0;
};

struct BaselineOptions {
    int paths = 1000;
    double u_max = 0.0;
};

/// Receding-horizon baseline: every step samples a fresh batch on the plant,
/// updates the whole schedule, applies its first control, then shifts.
inline BaselineRunResult baseline_run(const PlantSpec& plant, const CostSpec& cost,
                                      const Eigen::VectorXd& x0, int episode_steps,
                                      std::uint64_t seed, const BaselineOptions& opts = {}) {
    const int n = plant.state_dim, m = plant.control_dim, h = cost.horizon_steps;
    BaselineRunResult out;
    Episode& ep = out.episode;
    ep.dt = cost.dt;
    ep.seed = seed;
    ep.states.resize(episode_steps + 1, n);
    ep.controls.resize(episode_steps, m);
    ep.transitions.resize(episode_steps, n);
    ep.noises.resize(episode_steps, plant.noise_dim);
    ep.step_costs = Eigen::VectorXd::Zero(episode_steps);
    Rng root(seed);
    Rng actuation = root.child(0xA11CE);
    Eigen::MatrixXd schedule = Eigen::MatrixXd::Zero(h, m);
    Eigen::VectorXd x = x0;
    ep.states.row(0) = x.transpose();
    for (int k = 0; k < episode_steps; ++k) {
        SampledPathBatch batch =
            sample_paths(plant, cost, x, schedule, opts.paths, h, root.child(k).seed());
        out.sampled_transitions += static_cast<long long>(opts.paths) * h;
        out.updates += 1;
        for (int t = 0; t < h; ++t)
            schedule.row(t) += control_estimate(batch, cost.temperature, t).transpose();
        Eigen::VectorXd u = schedule.row(0).transpose();
        if (opts.u_max > 0.0) u = u.cwiseMax(-opts.u_max).cwiseMin(opts.u_max);
        EmStep s = em_step(plant, x, u, cost.dt, actuation);
        ep.controls.row(k) = u.transpose();
        ep.transitions.row(k) = s.dx.transpose();
        ep.noises.row(k) = s.noise.transpose();
        ep.step_costs(k) = cost.state_cost(x, std::min(k + 1, cost.horizon_steps)) +
                           cost.control_cost(u);
        ep.cumulative_cost += ep.step_costs(k) * cost.dt;
        x = s.x_next;
        ep.states.row(k + 1) = x.transpose();
        // shift: the executed entry leaves the window
        schedule.topRows(h - 1) = schedule.bottomRows(h - 1).eval();
        schedule.row(h - 1).setZero();
    }
    ep.cumulative_cost += cost.terminal_cost(x);
    return out;
}

/// Open-loop refinement used by the linear-plant oracle check: repeated
/// batched updates of a fixed-horizon schedule from one start state.
inline Eigen::MatrixXd baseline_refine_schedule(const PlantSpec& plant, const CostSpec& cost,
                                                const Eigen::VectorXd& x0,
                                                Eigen::MatrixXd schedule, int iterations,
                                                int paths, std::uint64_t seed) {
    Rng root(seed);
    const int h = static_cast<int>(schedule.rows());
    for (int it = 0; it < iterations; ++it) {
        SampledPathBatch batch =
            sample_paths(plant, cost, x0, schedule, paths, h, root.child(it).seed());
        for (int t = 0; t < h; ++t)
            schedule.row(t) += control_estimate(batch, cost.temperature, t).transpose();
    }
    return schedule;
}

}  // namespace gppi
