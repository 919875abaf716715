#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "gppi/gp/fit.hpp"
#include "gppi/pi/control.hpp"
#include "gppi/pi/desirability.hpp"
#include "gppi/plants/plants.hpp"

namespace gppi {

/// Open-loop control schedule on the horizon grid.
struct ControlSchedule {
    Eigen::MatrixXd controls;  // H x m
    int iteration = 0;

    static ControlSchedule zeros(int horizon_steps, int control_dim) {
        return {Eigen::MatrixXd::Zero(horizon_steps, control_dim), 0};
    }
    void validate(const CostSpec& cost) const {
        if (controls.rows() != cost.horizon_steps || !controls.allFinite())
            throw ShapeError("schedule: wrong length or non-finite entries");
    }
};

namespace detail {

/// W_j = G R^-1 G' restricted to the actuated subspace (pseudo-inverse; both
/// benchmark plants have one input, making W rank one).
inline Eigen::MatrixXd actuated_winv(const Eigen::MatrixXd& g, const Eigen::MatrixXd& r) {
    if (g.norm() < 1e-12)
        throw StructuralError("W singular: control matrix vanishes at this state");
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(r));
    Eigen::MatrixXd w = g * llt.solve(g.transpose());
    return pseudo_inverse_psd(w);
}

}  // namespace detail

/// Density ratio between the uncontrolled and controlled path measures for an
/// executed path, evaluated from the recorded noise draws (dw = sqrt(dt) e).
/// Validation artifact: the production update uses the Phi recursion.
inline double radon_nikodym_weight(const Episode& path, const ControlSchedule& schedule,
                                   const PlantSpec& plant, const CostSpec& cost) {
    const int steps = path.steps();
    if (schedule.controls.rows() < steps)
        throw ShapeError("radon_nikodym_weight: schedule shorter than the path");
    double log_xi = 0.0;
    for (int j = 0; j < steps; ++j) {
        Eigen::VectorXd x = path.states.row(j).transpose();
        Eigen::VectorXd u = schedule.controls.row(j).transpose();
        Eigen::MatrixXd g = plant.control_matrix(x);
        Eigen::MatrixXd winv = detail::actuated_winv(g, cost.control_weight);
        Eigen::VectorXd gu = g * u;
        Eigen::VectorXd dw = std::sqrt(path.dt) * plant.diffusion(x) *
                             path.noises.row(j).transpose();
        log_xi += gu.dot(winv * gu) * path.dt + 2.0 * gu.dot(winv * dw);
    }
    return std::exp(-log_xi / (2.0 * cost.temperature));
}

/// Per-step corrected path cost q~_j = q_j + u'G'W^-1 G u / 2 + u'G'W^-1 B dw/dt,
/// with q_j the state cost at the arrival state. Validation artifact.
inline Eigen::VectorXd corrected_path_cost(const Episode& path, const ControlSchedule& schedule,
                                           const PlantSpec& plant, const CostSpec& cost) {
    const int steps = path.steps();
    if (schedule.controls.rows() < steps)
        throw ShapeError("corrected_path_cost: schedule shorter than the path");
    Eigen::VectorXd out(steps);
    for (int j = 0; j < steps; ++j) {
        Eigen::VectorXd x = path.states.row(j).transpose();
        Eigen::VectorXd u = schedule.controls.row(j).transpose();
        Eigen::MatrixXd g = plant.control_matrix(x);
        Eigen::MatrixXd winv = detail::actuated_winv(g, cost.control_weight);
        Eigen::VectorXd gu = g * u;
        Eigen::VectorXd dw = std::sqrt(path.dt) * plant.diffusion(x) *
                             path.noises.row(j).transpose();
        const double q = cost.state_cost(path.states.row(j + 1).transpose(),
                                         std::min(j + 1, cost.horizon_steps));
        out(j) = q + 0.5 * gu.dot(winv * gu) + gu.dot(winv * dw) / path.dt;
    }
    return out;
}

/// Phi under the controlled process: identical machinery to the uncontrolled
/// desirability, with beliefs propagated under the schedule.
inline DesirabilityEval phi_recursion(const TransitionModel& model, const Eigen::VectorXd& x,
                                      const CostSpec& cost, const ControlSchedule& schedule,
                                      const DesirabilityOptions& opts = {}) {
    return desirability_gradient(model, x, cost, &schedule.controls, opts);
}

inline DesirabilityEval phi_recursion(const GpModel& model, const Eigen::VectorXd& x,
                                      const CostSpec& cost, const ControlSchedule& schedule,
                                      const DesirabilityOptions& opts = {}) {
    return phi_recursion(GpDynamicsModel(model), x, cost, schedule, opts);
}

/// One improvement step: u_t <- u_t + damping * lambda R^-1 G_t' (grad Phi_t / Phi_t).
inline ControlSchedule control_update(const ControlSchedule& schedule,
                                      const std::vector<DesirabilityEval>& phi_evals,
                                      const std::vector<Eigen::MatrixXd>& g_mats,
                                      const CostSpec& cost, double damping = 1.0) {
    const int h = static_cast<int>(schedule.controls.rows());
    if (static_cast<int>(phi_evals.size()) != h || static_cast<int>(g_mats.size()) != h)
        throw ShapeError("control_update: need one evaluation and G per grid step");
    ControlSchedule next = schedule;
    for (int t = 0; t < h; ++t) {
        Eigen::VectorXd inc = optimal_control(phi_evals[t], g_mats[t], cost);
        next.controls.row(t) += damping * inc.transpose();
    }
    next.iteration = schedule.iteration + 1;
    return next;
}

struct IterationRecord {
    int iteration = 0;
    double realized_cost = 0.0;        // mean over the iteration's rollouts
    double terminal_state_cost = 0.0;  // mean Q-weighted terminal state cost
    double best_so_far = 0.0;
    double schedule_norm = 0.0;
    std::vector<double> phi_values;    // Phi_t used for the update
};

struct IterationTrace {
    std::vector<IterationRecord> records;
    std::vector<ControlSchedule> schedules;  // schedule executed at each iteration
    ControlSchedule best_schedule;
    double best_cost = 0.0;
    long long total_transitions = 0;
    std::vector<Episode> last_episodes;
};

struct IterateOptions {
    int iterations = 5;
    int rollouts_per_iteration = 2;
    int initial_rollouts = 10;
    int initial_steps = 40;
    int dataset_cap = 2000;
    double damping = 1.0;
    FitOptions fit;
    SensitivityMode sensitivity = SensitivityMode::Analytic;
    std::uint64_t seed = 0;
};

/// Iterative improvement: per iteration, fit the GP on all data so far,
/// evaluate Phi and its gradient along the predicted mean chain under the
/// current schedule, update the schedule, execute it on the plant to collect
/// fresh controlled transitions, and append them (capped, oldest evicted).
inline IterationTrace iterate(const PlantSpec& plant, const CostSpec& cost,
                              const Eigen::VectorXd& x0, const IterateOptions& opts) {
    if (opts.iterations < 1) throw ShapeError("iterate: need at least one iteration");
    const int h = cost.horizon_steps;
    const int m = plant.control_dim;
    Rng root(opts.seed);

    RolloutOptions collect_opts;
    collect_opts.policy = RolloutPolicy::Zero;
    collect_opts.cost_rate = [&cost](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return cost.state_cost(x, 1) + cost.control_cost(u);
    };
    RolloutBatch init = collect_rollouts(plant, x0, opts.initial_rollouts,
                                         opts.initial_steps, cost.dt,
                                         root.child(0).seed(), collect_opts);
    TransitionDataset data = init.dataset;

    IterationTrace trace;
    trace.total_transitions = data.size();
    trace.best_cost = std::numeric_limits<double>::infinity();
    ControlSchedule schedule = ControlSchedule::zeros(h, m);

    for (int k = 0; k < opts.iterations; ++k) {
        FitOptions fit_opts = opts.fit;
        fit_opts.seed = root.child(1000 + k).seed();
        GpModel gp = fit(data, default_init(data), fit_opts);
        GpDynamicsModel model(gp);

        // predicted mean chain under the current schedule
        std::vector<Eigen::VectorXd> means(h);
        GaussianBelief b = GaussianBelief::delta(x0);
        for (int t = 0; t < h; ++t) {
            means[t] = b.mean;
            b = step(model, b, schedule.controls.row(t).transpose(), cost.dt);
        }

        std::vector<DesirabilityEval> evals(h);
        std::vector<Eigen::MatrixXd> gmats(h);
        for (int t = 0; t < h; ++t) {
            DesirabilityOptions dopts;
            dopts.sensitivity = opts.sensitivity;
            dopts.horizon_override = h - t;
            dopts.goal_offset = t;
            Eigen::MatrixXd suffix = schedule.controls.bottomRows(h - t);
            try {
                evals[t] = desirability_gradient(model, means[t], cost, &suffix, dopts);
            } catch (const Error& e) {
                throw FitError("iteration " + std::to_string(k) + ": " + e.what());
            }
            gmats[t] = plant.control_matrix(means[t]);
        }
        schedule = control_update(schedule, evals, gmats, cost, opts.damping);

        // execute the updated schedule; fresh transitions enter the dataset
        RolloutOptions run_opts = collect_opts;
        run_opts.policy = RolloutPolicy::Schedule;
        run_opts.schedule = schedule.controls;
        RolloutBatch batch =
            collect_rollouts(plant, x0, opts.rollouts_per_iteration, h, cost.dt,
                             root.child(2000 + k).seed(), run_opts);
        double realized = 0.0, terminal = 0.0;
        for (const Episode& ep : batch.episodes) {
            realized += ep.cumulative_cost +
                        cost.terminal_cost(ep.states.bottomRows(1).transpose());
            terminal += cost.state_cost(ep.states.bottomRows(1).transpose(), h);
        }
        realized /= batch.episodes.size();
        terminal /= batch.episodes.size();
        data.append(batch.dataset);
        data.truncate_oldest(opts.dataset_cap);
        trace.total_transitions += batch.dataset.size();

        if (realized < trace.best_cost) {
            trace.best_cost = realized;
            trace.best_schedule = schedule;
        }
        IterationRecord rec;
        rec.iteration = k;
        rec.realized_cost = realized;
        rec.terminal_state_cost = terminal;
        rec.best_so_far = trace.best_cost;
        rec.schedule_norm = schedule.controls.norm();
        rec.phi_values.reserve(h);
        for (const auto& e : evals) rec.phi_values.push_back(e.psi());
        trace.records.push_back(std::move(rec));
        trace.schedules.push_back(schedule);
        trace.last_episodes = std::move(batch.episodes);
    }
    return trace;
}

}  // namespace gppi
