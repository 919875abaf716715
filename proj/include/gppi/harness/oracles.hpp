#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gppi/pi/cost.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

/// Finite-horizon discrete-time affine LQR via the Riccati recursion, for
///   x_{j+1} = Ad x_j + Bd u_j,
///   J = sum_j u_j' Rbar u_j + sum_{j=1..H-1} (x_j-g)' Qbar (x_j-g)
///       + (x_H-g)' Wf (x_H-g),
/// returning time-varying feedback u_j = -K_j x_j - k_j. Independent of the
/// path-integral evaluation path; used as its oracle.
struct LqrSolution {
    std::vector<Eigen::MatrixXd> gains;    // K_j
    std::vector<Eigen::VectorXd> offsets;  // k_j
    Eigen::VectorXd control_at(int j, const Eigen::VectorXd& x) const {
        return -(gains[j] * x) - offsets[j];
    }
};

inline LqrSolution riccati_lqr(const Eigen::MatrixXd& ad, const Eigen::MatrixXd& bd,
                               const Eigen::MatrixXd& qbar, const Eigen::MatrixXd& rbar,
                               const Eigen::MatrixXd& wf, const Eigen::VectorXd& goal,
                               int steps) {
    const int n = static_cast<int>(ad.rows());
    LqrSolution sol;
    sol.gains.resize(steps);
    sol.offsets.resize(steps);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd pl = Eigen::VectorXd::Zero(n);  // linear coefficient (V = x'Px + 2 pl'x)
    for (int j = steps - 1; j >= 0; --j) {
        const Eigen::MatrixXd w = (j == steps - 1) ? wf : qbar;
        Eigen::MatrixXd m = p + w;
        Eigen::VectorXd mv = pl - w * goal;
        Eigen::MatrixXd f = rbar + bd.transpose() * m * bd;
        Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(f));
        Eigen::MatrixXd k = llt.solve(bd.transpose() * m * ad);
        Eigen::VectorXd koff = llt.solve(bd.transpose() * mv);
        sol.gains[j] = k;
        sol.offsets[j] = koff;
        p = symmetrized(ad.transpose() * m * ad -
                        ad.transpose() * m * bd * k);
        pl = ad.transpose() * (mv - m * bd * koff);
    }
    return sol;
}

/// Riccati setup matching the path-integral cost convention: state cost
/// (x-g)'Q(x-g) per unit time, control cost u'Ru/2 per unit time, terminal
/// weight without dt scaling.
inline LqrSolution riccati_for_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& bc,
                                    const CostSpec& cost, int steps) {
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd ad = Eigen::MatrixXd::Identity(n, n) + a * cost.dt;
    Eigen::MatrixXd bd = bc * cost.dt;
    Eigen::MatrixXd qbar = cost.state_weight * cost.dt;
    Eigen::MatrixXd rbar = 0.5 * cost.control_weight * cost.dt;
    Eigen::MatrixXd wf = cost.state_weight * cost.dt + cost.terminal_weight;
    return riccati_lqr(ad, bd, qbar, rbar, wf, cost.goal_at(steps), steps);
}

/// Relative error with an absolute floor, for comparisons near zero.
inline double corrected_relative_error(double actual, double expected, double floor_scale) {
    return std::abs(actual - expected) / (std::abs(expected) + floor_scale + 1e-300);
}

struct OracleCheck {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

}  // namespace gppi
