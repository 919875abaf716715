#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gppi/gp/likelihood.hpp"
#include "gppi/gp/model.hpp"
#include "gppi/util/rng.hpp"

namespace gppi {

struct FitOptions {
    int restarts = 5;
    int max_iters = 200;
    double grad_tol = 1e-5;
    std::uint64_t seed = 0;
    // log-space box for (lengthscales, signal_std, noise_std) in standardized units;
    // the noise floor matches the jitter ceiling on the standardized Gram diagonal.
    double log_ls_min = std::log(1e-2), log_ls_max = std::log(1e3);
    double log_ss_min = std::log(1e-3), log_ss_max = std::log(1e3);
    double log_sn_min = std::log(1e-4), log_sn_max = std::log(1e3);
};

struct FitOutputReport {
    double init_lml = 0.0;
    double final_lml = 0.0;
    int iterations = 0;
    std::vector<double> accepted_trace;  // non-decreasing by construction
    bool hit_bounds = false;
};

struct FitReport {
    std::vector<FitOutputReport> outputs;
};

namespace detail {

inline Eigen::VectorXd pack_log(const Hyperparams& p) {
    const int d = static_cast<int>(p.lengthscales.size());
    Eigen::VectorXd t(d + 2);
    t.head(d) = p.lengthscales.array().log();
    t(d) = std::log(p.signal_std);
    t(d + 1) = std::log(p.noise_std);
    return t;
}

inline Hyperparams unpack_log(const Eigen::VectorXd& t) {
    const int d = static_cast<int>(t.size()) - 2;
    Hyperparams p;
    p.lengthscales = t.head(d).array().exp();
    p.signal_std = std::exp(t(d));
    p.noise_std = std::exp(t(d + 1));
    return p;
}

inline Eigen::VectorXd clamp_log(Eigen::VectorXd t, const FitOptions& o, bool* hit) {
    const int d = static_cast<int>(t.size()) - 2;
    for (int i = 0; i < d; ++i) {
        double c = std::clamp(t(i), o.log_ls_min, o.log_ls_max);
        if (hit && c != t(i)) *hit = true;
        t(i) = c;
    }
    double c = std::clamp(t(d), o.log_ss_min, o.log_ss_max);
    if (hit && c != t(d)) *hit = true;
    t(d) = c;
    c = std::clamp(t(d + 1), o.log_sn_min, o.log_sn_max);
    if (hit && c != t(d + 1)) *hit = true;
    t(d + 1) = c;
    return t;
}

/// Gradient ascent with backtracking line search on the log-likelihood.
/// Returns the best parameters reached; the accepted-value trace is monotone.
inline std::pair<Eigen::VectorXd, FitOutputReport> ascend(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd theta,
    const FitOptions& opts) {
    FitOutputReport rep;
    theta = clamp_log(std::move(theta), opts, nullptr);
    LmlWithGrad cur = log_marginal_likelihood_with_grad(x, y, unpack_log(theta));
    if (!std::isfinite(cur.value))
        throw FitError("fit: non-finite likelihood at the starting point");
    rep.init_lml = cur.value;
    rep.accepted_trace.push_back(cur.value);
    double step = 0.1;
    for (int it = 0; it < opts.max_iters; ++it) {
        rep.iterations = it + 1;
        if (cur.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) break;
        bool accepted = false;
        for (int bt = 0; bt < 25 && !accepted; ++bt) {
            Eigen::VectorXd cand = clamp_log(theta + step * cur.grad, opts, nullptr);
            double val;
            try {
                val = log_marginal_likelihood(x, y, unpack_log(cand));
            } catch (const ConditioningError&) {
                val = -std::numeric_limits<double>::infinity();
            }
            if (std::isfinite(val) && val > cur.value) {
                theta = cand;
                cur = log_marginal_likelihood_with_grad(x, y, unpack_log(theta));
                rep.accepted_trace.push_back(cur.value);
                step *= 1.5;
                accepted = true;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) break;  // no ascent direction at any feasible step size
    }
    rep.final_lml = cur.value;
    const int d = static_cast<int>(theta.size()) - 2;
    for (int i = 0; i < d; ++i)
        if (theta(i) <= opts.log_ls_min || theta(i) >= opts.log_ls_max) rep.hit_bounds = true;
    if (theta(d) <= opts.log_ss_min || theta(d) >= opts.log_ss_max) rep.hit_bounds = true;
    if (theta(d + 1) <= opts.log_sn_min || theta(d + 1) >= opts.log_sn_max)
        rep.hit_bounds = true;
    return {theta, rep};
}

}  // namespace detail

/// Fit one GP per output dimension by maximizing the standardized-space log
/// marginal likelihood with random restarts. The returned model's likelihood
/// is never below the likelihood of `init`.
inline GpModel fit(const TransitionDataset& data, const std::vector<Hyperparams>& init,
                   const FitOptions& opts = {}, FitReport* report = nullptr) {
    if (data.size() < 2) throw ShapeError("fit: needs at least two records");
    const int n = data.state_dim();
    const int d = data.input_dim();
    if (static_cast<int>(init.size()) != n)
        throw ShapeError("fit: one initial hyperparameter set per output");

    Normalization norm = Normalization::from_data(data.inputs(), data.outputs());
    Eigen::MatrixXd xn =
        (data.inputs().rowwise() - norm.in_mean.transpose()).array().rowwise() /
        norm.in_scale.transpose().array();
    Eigen::MatrixXd yn =
        (data.outputs().rowwise() - norm.out_mean.transpose()).array().rowwise() /
        norm.out_scale.transpose().array();

    Rng root(opts.seed);
    std::vector<Hyperparams> best(n);
    if (report) report->outputs.resize(n);
    for (int a = 0; a < n; ++a) {
        init[a].validate();
        if (init[a].lengthscales.size() != d)
            throw ShapeError("fit: init lengthscale dimension != n+m");
        Eigen::VectorXd theta0 = detail::pack_log(init[a]);
        double best_val = -std::numeric_limits<double>::infinity();
        FitOutputReport best_rep;
        Eigen::VectorXd best_theta = theta0;
        Rng stream = root.child(a);
        for (int r = 0; r < std::max(1, opts.restarts); ++r) {
            Eigen::VectorXd start = theta0;
            if (r > 0) start += stream.normal_vector(d + 2);  // explore one log-decade
            auto [theta, rep] = detail::ascend(xn, yn.col(a), start, opts);
            if (rep.final_lml > best_val) {
                best_val = rep.final_lml;
                best_theta = theta;
                best_rep = rep;
            }
        }
        best[a] = detail::unpack_log(best_theta);
        if (report) report->outputs[a] = best_rep;
    }
    return GpModel::build(data, std::move(best), std::move(norm));
}

/// Default initialization in standardized units.
inline std::vector<Hyperparams> default_init(const TransitionDataset& data) {
    Hyperparams p;
    p.signal_std = 1.0;
    p.noise_std = 0.1;
    p.lengthscales = Eigen::VectorXd::Ones(data.input_dim());
    return std::vector<Hyperparams>(static_cast<std::size_t>(data.state_dim()), p);
}

}  // namespace gppi
