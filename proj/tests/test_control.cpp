#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "gppi/harness/oracles.hpp"
#include "gppi/pi/control.hpp"
#include "gppi/pi/desirability.hpp"
#include "gppi/plants/plants.hpp"

using namespace gppi;

namespace {

struct LqgSetup {
    Eigen::MatrixXd a, bc;
    double noise_std;
    CostSpec cost;
    PerfectLinearModel model;
    PlantSpec plant_deterministic;

    static LqgSetup make(int steps, double dt) {
        Eigen::MatrixXd a(2, 2), bc(2, 1);
        a << 0, 1, 0, 0;
        bc << 0, 1;
        const double noise_std = 0.5, lambda = 2.0;
        Eigen::MatrixXd noise_cov = Eigen::MatrixXd::Constant(1, 1, noise_std * noise_std);
        // R = lambda * Sw_eff^-1 with B = G
        Eigen::MatrixXd r =
            Eigen::MatrixXd::Constant(1, 1, lambda / (noise_std * noise_std));
        Eigen::MatrixXd q(2, 2);
        q << 1.0, 0, 0, 0.5;
        Eigen::MatrixXd wterm(2, 2);
        wterm << 2.0, 0, 0, 1.0;
        Eigen::MatrixXd goal = Eigen::MatrixXd::Zero(1, 2);
        CostSpec cost = CostSpec::make(q, r, wterm, lambda, dt, steps * dt, goal);
        return LqgSetup{a,
                        bc,
                        noise_std,
                        cost,
                        PerfectLinearModel(a, bc, bc, noise_cov, dt),
                        linear_plant(a, bc, bc, Eigen::MatrixXd::Zero(1, 1))};
    }
};

}  // namespace

TEST_CASE("optimal control trivial cases") {
    CostSpec cost = CostSpec::make(Eigen::MatrixXd::Identity(2, 2),
                                   2.0 * Eigen::MatrixXd::Identity(1, 1),
                                   Eigen::MatrixXd::Zero(2, 2), 1.5, 0.1, 0.5,
                                   Eigen::MatrixXd::Zero(1, 2));
    Eigen::MatrixXd g(2, 1);
    g << 0, 1;

    SECTION("flat desirability gives zero control") {
        DesirabilityEval eval = DesirabilityEval::from_psi_and_grad(
            0.7, Eigen::VectorXd::Zero(2));
        CHECK(optimal_control(eval, g, cost).norm() == 0.0);
    }

    SECTION("positive rescaling of (psi, grad) leaves the control unchanged") {
        Eigen::VectorXd grad(2);
        grad << 0.3, -0.8;
        DesirabilityEval e1 = DesirabilityEval::from_psi_and_grad(0.42, grad);
        for (double c : {1e-6, 0.5, 3.0, 1e6}) {
            DesirabilityEval e2 = DesirabilityEval::from_psi_and_grad(c * 0.42, c * grad);
            Eigen::VectorXd u1 = optimal_control(e1, g, cost);
            Eigen::VectorXd u2 = optimal_control(e2, g, cost);
            CHECK((u1 - u2).cwiseAbs().maxCoeff() < 1e-12 * u1.cwiseAbs().maxCoeff());
        }
    }

    SECTION("formula check: u = lambda R^-1 G' grad ln Psi") {
        Eigen::VectorXd grad(2);
        grad << 0.3, -0.8;
        DesirabilityEval eval = DesirabilityEval::from_psi_and_grad(1.0, grad);
        Eigen::VectorXd u = optimal_control(eval, g, cost);
        CHECK(u(0) == Catch::Approx(1.5 / 2.0 * -0.8).epsilon(1e-12));
    }
}

TEST_CASE("temperature assumption diagnostic") {
    const double lambda = 1.0;
    Eigen::MatrixXd g(2, 1), b(2, 1);
    g << 0, 1;
    b << 0, 1;
    Eigen::MatrixXd noise_cov = Eigen::MatrixXd::Constant(1, 1, 4.0);
    Eigen::MatrixXd r_good = Eigen::MatrixXd::Constant(1, 1, lambda / 4.0);

    CostSpec cost = CostSpec::make(Eigen::MatrixXd::Identity(2, 2), r_good,
                                   Eigen::MatrixXd::Zero(2, 2), lambda, 0.05, 0.5,
                                   Eigen::MatrixXd::Zero(1, 2));
    PiAssumptionReport rep = validate_pi_assumption(cost, noise_cov, g, b);
    CHECK(rep.pass);
    CHECK(rep.weight_residual < 1e-10);

    SECTION("doubling R fails with the measured residual") {
        CostSpec bad = cost;
        bad.control_weight = 2.0 * r_good;
        PiAssumptionReport rep2 = validate_pi_assumption(bad, noise_cov, g, b);
        CHECK(!rep2.pass);
        const double want =
            (bad.control_weight - rep2.implied_control_weight).norm() /
            bad.control_weight.norm();
        CHECK(rep2.weight_residual == Catch::Approx(want));
        CHECK(rep2.weight_residual == Catch::Approx(0.5));
    }

    SECTION("noise outside the actuated channel is flagged") {
        Eigen::MatrixXd b_bad(2, 1);
        b_bad << 1, 0;  // orthogonal to G
        PiAssumptionReport rep3 = validate_pi_assumption(cost, noise_cov, g, b_bad);
        CHECK(!rep3.pass);
        CHECK(rep3.channel_residual > 0.5);
    }
}

TEST_CASE("cart-pole default channel structure satisfies the assumption") {
    CartPoleParams params;
    params.noise_std = 2.0;
    PlantSpec plant = cartpole(params);
    const double lambda = 3.0;
    Eigen::MatrixXd r =
        Eigen::MatrixXd::Constant(1, 1, lambda / (params.noise_std * params.noise_std));
    CostSpec cost = CostSpec::make(Eigen::MatrixXd::Identity(4, 4), r,
                                   Eigen::MatrixXd::Zero(4, 4), lambda, 0.05, 1.0,
                                   Eigen::MatrixXd::Zero(1, 4));
    Eigen::VectorXd x(4);
    x << 0.3, -0.5, 2.0, 0.7;
    PiAssumptionReport rep = validate_pi_assumption(cost, plant.noise_cov,
                                                    plant.control_matrix(x),
                                                    plant.diffusion(x));
    CHECK(rep.pass);
}

// The Eq.-8-style control evaluated on the discrete chain differs from the
// exact discrete-time LQR feedback by an O(dt) factor (an extra Ad' in the
// gain product), so dt sets the agreement level; 20 steps at dt = 2e-3 keep
// the gap well inside 5%.
TEST_CASE("LQG equivalence: PI gains match Riccati LQR on the double integrator") {
    const int steps = 20;
    const double dt = 0.002;
    LqgSetup s = LqgSetup::make(steps, dt);
    LqrSolution lqr = riccati_for_cost(s.a, s.bc, s.cost, steps);

    SECTION("time-varying gains at a fixed probe state") {
        Eigen::VectorXd probe(2);
        probe << 0.3, -0.2;
        for (int t = 0; t < steps; ++t) {
            DesirabilityOptions opts;
            opts.horizon_override = steps - t;
            opts.goal_offset = t;
            DesirabilityEval eval = desirability_gradient(s.model, probe, s.cost, nullptr, opts);
            Eigen::VectorXd u_pi = optimal_control(eval, s.bc, s.cost);
            Eigen::VectorXd u_lqr = lqr.control_at(t, probe);
            CHECK(std::abs(u_pi(0) - u_lqr(0)) / std::abs(u_lqr(0)) < 0.05);
        }
    }

    SECTION("closed-loop controls along the PI trajectory stay within 5% of scale") {
        Eigen::VectorXd x(2);
        x << 1.0, -0.5;
        Rng rng(1);
        std::vector<double> u_pi(steps), u_lqr(steps);
        for (int t = 0; t < steps; ++t) {
            DesirabilityOptions opts;
            opts.horizon_override = steps - t;
            opts.goal_offset = t;
            DesirabilityEval eval = desirability_gradient(s.model, x, s.cost, nullptr, opts);
            u_pi[t] = optimal_control(eval, s.bc, s.cost)(0);
            u_lqr[t] = lqr.control_at(t, x)(0);
            x = em_step(s.plant_deterministic, x,
                        Eigen::VectorXd::Constant(1, u_pi[t]), dt, rng)
                    .x_next;
        }
        double u_scale = 0.0;
        for (int t = 0; t < steps; ++t) u_scale = std::max(u_scale, std::abs(u_lqr[t]));
        for (int t = 0; t < steps; ++t)
            CHECK(std::abs(u_pi[t] - u_lqr[t]) < 0.05 * u_scale);
    }
}

TEST_CASE("receding horizon run basics") {
    Eigen::MatrixXd a(2, 2), bc(2, 1);
    a << 0, 1, -0.3, -0.1;
    bc << 0, 1;
    const double dt = 0.05, sw = 0.6, lambda = 1.0;
    Eigen::MatrixXd noise_cov = Eigen::MatrixXd::Constant(1, 1, sw * sw);
    PlantSpec plant = linear_plant(a, bc, bc, noise_cov);
    PerfectLinearModel model(a, bc, bc, noise_cov, dt);
    Eigen::MatrixXd r = Eigen::MatrixXd::Constant(1, 1, lambda / (sw * sw));

    SECTION("zero cost spec applies zero controls; plant diffuses uncontrolled") {
        CostSpec cost = CostSpec::make(Eigen::MatrixXd::Zero(2, 2), r,
                                       Eigen::MatrixXd::Zero(2, 2), lambda, dt, 10 * dt,
                                       Eigen::MatrixXd::Zero(1, 2));
        Episode ep = receding_horizon_run(plant, model, cost, Eigen::VectorXd::Zero(2),
                                          15, 42);
        CHECK(ep.controls.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(ep.psi.size() == 15);
        for (double p : ep.psi) CHECK(p == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("same seed gives identical episodes") {
        CostSpec cost = CostSpec::make(Eigen::MatrixXd::Identity(2, 2), r,
                                       Eigen::MatrixXd::Zero(2, 2), lambda, dt, 10 * dt,
                                       Eigen::MatrixXd::Zero(1, 2));
        Eigen::VectorXd x0(2);
        x0 << 1.0, 0.0;
        Episode e1 = receding_horizon_run(plant, model, cost, x0, 12, 7);
        Episode e2 = receding_horizon_run(plant, model, cost, x0, 12, 7);
        CHECK((e1.states - e2.states).cwiseAbs().maxCoeff() == 0.0);
        CHECK((e1.controls - e2.controls).cwiseAbs().maxCoeff() == 0.0);
        CHECK(e1.cumulative_cost == e2.cumulative_cost);
    }
}
