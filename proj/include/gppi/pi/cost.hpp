#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gppi/util/errors.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

/// Quadratic state cost (x-g)'Q(x-g) accrued per step, quadratic control cost
/// u'Ru/2, terminal cost (x_T-g)'W_term(x_T-g), temperature lambda, grid dt,
/// horizon T = horizon_steps * dt. Goals are one row (constant) or one row per
/// step on the horizon grid.
struct CostSpec {
    Eigen::MatrixXd state_weight;     // Q, PSD
    Eigen::MatrixXd control_weight;   // R, PD
    Eigen::MatrixXd terminal_weight;  // PSD
    double temperature = 1.0;         // lambda
    double dt = 0.05;
    int horizon_steps = 1;
    Eigen::MatrixXd goals;  // 1 x n or horizon_steps x n

    static CostSpec make(const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                         const Eigen::MatrixXd& w_term, double lambda, double dt,
                         double horizon_seconds, const Eigen::MatrixXd& goals) {
        CostSpec c;
        c.state_weight = q;
        c.control_weight = r;
        c.terminal_weight = w_term;
        c.temperature = lambda;
        c.dt = dt;
        const double ratio = horizon_seconds / dt;
        c.horizon_steps = static_cast<int>(std::lround(ratio));
        if (c.horizon_steps < 1 || std::abs(ratio - c.horizon_steps) > 1e-9)
            throw ShapeError("cost: horizon must be a positive integer multiple of dt");
        c.goals = goals;
        c.validate();
        return c;
    }

    int state_dim() const { return static_cast<int>(state_weight.rows()); }
    int control_dim() const { return static_cast<int>(control_weight.rows()); }

    void validate() const {
        if (!(temperature > 0.0) || !(dt > 0.0))
            throw ShapeError("cost: lambda and dt must be positive");
        if (state_weight.rows() != state_weight.cols() ||
            terminal_weight.rows() != state_weight.rows() ||
            terminal_weight.cols() != state_weight.cols())
            throw ShapeError("cost: Q / terminal weight shape mismatch");
        if (control_weight.rows() != control_weight.cols())
            throw ShapeError("cost: R must be square");
        if (goals.cols() != state_weight.rows() ||
            (goals.rows() != 1 && goals.rows() != horizon_steps))
            throw ShapeError("cost: goals must be 1 or horizon_steps rows");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(symmetrized(state_weight));
        if (eq.eigenvalues().minCoeff() < -1e-10)
            throw ShapeError("cost: Q must be PSD");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> et(symmetrized(terminal_weight));
        if (et.eigenvalues().minCoeff() < -1e-10)
            throw ShapeError("cost: terminal weight must be PSD");
        Eigen::LLT<Eigen::MatrixXd> lr(symmetrized(control_weight));
        if (lr.info() != Eigen::Success)
            throw ShapeError("cost: R must be positive definite");
    }

    /// Goal for propagated step j in [1, horizon_steps] (clamped).
    Eigen::VectorXd goal_at(int j) const {
        if (goals.rows() == 1) return goals.row(0).transpose();
        const int idx = std::min(std::max(j, 1), static_cast<int>(goals.rows()));
        return goals.row(idx - 1).transpose();
    }

    double state_cost(const Eigen::VectorXd& x, int j) const {
        Eigen::VectorXd d = x - goal_at(j);
        return d.dot(state_weight * d);
    }

    double terminal_cost(const Eigen::VectorXd& x) const {
        Eigen::VectorXd d = x - goal_at(horizon_steps);
        return d.dot(terminal_weight * d);
    }

    double control_cost(const Eigen::VectorXd& u) const {
        return 0.5 * u.dot(control_weight * u);
    }
};

}  // namespace gppi
