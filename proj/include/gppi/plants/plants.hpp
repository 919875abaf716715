#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gppi/gp/dataset.hpp"
#include "gppi/util/errors.hpp"
#include "gppi/util/rng.hpp"

namespace gppi {

/// Continuous-time system dx = (f(x) + G(x) u) dt + B(x) dw,  dw ~ N(0, S_w).
/// Angle convention for the benchmark plants: 0 = hanging down, pi = upright.
struct PlantSpec {
    int state_dim = 0;
    int control_dim = 0;
    int noise_dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> control_matrix;  // n x m
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion;       // n x p
    Eigen::MatrixXd noise_cov;                                              // p x p
    std::string name;
    Eigen::VectorXd default_init;
    std::function<double(const Eigen::VectorXd&)> energy;  // optional diagnostic
};

struct EmStep {
    Eigen::VectorXd x_next;
    Eigen::VectorXd dx;
    Eigen::VectorXd noise;  // the raw draw e ~ N(0, S_w); dw = sqrt(dt) * e
};

/// One Euler-Maruyama step: dx = (f + G u) dt + B e sqrt(dt), e ~ N(0, S_w).
inline EmStep em_step(const PlantSpec& plant, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, double dt, Rng& rng) {
    if (x.size() != plant.state_dim || u.size() != plant.control_dim)
        throw ShapeError("em_step: state/control dimension mismatch");
    if (dt <= 0.0) throw ShapeError("em_step: dt must be positive");
    EmStep out;
    Eigen::VectorXd f = plant.drift(x);
    if (!f.allFinite()) {
        std::string dump = "em_step: non-finite drift at state [";
        for (int i = 0; i < x.size(); ++i)
            dump += (i ? "," : "") + std::to_string(x(i));
        throw IntegrationError(dump + "]");
    }
    out.noise = Eigen::VectorXd::Zero(plant.noise_dim);
    if (plant.noise_dim > 0 && plant.noise_cov.norm() > 0.0) {
        // S_w is PSD; sample via its (cached-free) Cholesky each call. The
        // benchmark plants use a 1x1 S_w so this stays cheap.
        Eigen::LLT<Eigen::MatrixXd> llt(plant.noise_cov);
        Eigen::VectorXd z = rng.normal_vector(plant.noise_dim);
        out.noise = llt.matrixL() * z;
    }
    out.dx = (f + plant.control_matrix(x) * u) * dt +
             plant.diffusion(x) * out.noise * std::sqrt(dt);
    out.x_next = x + out.dx;
    if (!out.x_next.allFinite()) throw IntegrationError("em_step: non-finite state");
    return out;
}

/// Time-indexed record of one simulated run.
struct Episode {
    double dt = 0.0;
    std::uint64_t seed = 0;
    Eigen::MatrixXd states;       // (steps+1) x n
    Eigen::MatrixXd controls;     // steps x m
    Eigen::MatrixXd transitions;  // steps x n, transitions.row(k) = x_{k+1} - x_k
    Eigen::MatrixXd noises;       // steps x p (raw draws)
    Eigen::VectorXd step_costs;   // instantaneous cost rate per step (0 if no cost given)
    double cumulative_cost = 0.0;
    std::vector<double> psi;      // desirability at each replanning step (optional)

    int steps() const { return static_cast<int>(controls.rows()); }
    double time(int k) const { return k * dt; }
};

struct CartPoleParams {
    double cart_mass = 0.5;
    double pole_mass = 0.5;
    double pole_length = 0.5;
    double gravity = 9.81;
    double noise_std = 1.0;            // std of the force noise draw
    double control_noise_scale = 1.0;  // B = scale * G
};

/// Cart-pole: state (s, s_dot, theta, theta_dot), one force input on the cart.
/// Pole is a point mass at distance l from the pivot. Noise enters through the
/// actuated channel so the temperature assumption R = lambda * S_w^-1 can hold.
inline PlantSpec cartpole(const CartPoleParams& p = {}) {
    if (p.cart_mass <= 0 || p.pole_mass <= 0 || p.pole_length <= 0)
        throw ShapeError("cartpole: masses and length must be positive");
    PlantSpec spec;
    spec.state_dim = 4;
    spec.control_dim = 1;
    spec.noise_dim = 1;
    spec.name = "cartpole";
    spec.default_init = Eigen::VectorXd::Zero(4);
    const double M = p.cart_mass, m = p.pole_mass, l = p.pole_length, g = p.gravity;

    auto accel = [M, m, l, g](const Eigen::VectorXd& x, double u) {
        const double th = x(2), w = x(3);
        const double s = std::sin(th), c = std::cos(th);
        const double denom = M + m * s * s;
        const double sdd = (u + m * s * (l * w * w + g * c)) / denom;
        const double thdd = -(g * s + c * sdd) / l;
        return std::pair<double, double>{sdd, thdd};
    };

    spec.drift = [accel](const Eigen::VectorXd& x) {
        auto [sdd, thdd] = accel(x, 0.0);
        Eigen::VectorXd f(4);
        f << x(1), sdd, x(3), thdd;
        return f;
    };
    spec.control_matrix = [M, m, l](const Eigen::VectorXd& x) {
        const double s = std::sin(x(2)), c = std::cos(x(2));
        const double denom = M + m * s * s;
        Eigen::MatrixXd gmat = Eigen::MatrixXd::Zero(4, 1);
        gmat(1, 0) = 1.0 / denom;
        gmat(3, 0) = -c / (l * denom);
        return gmat;
    };
    const double bscale = p.control_noise_scale;
    spec.diffusion = [spec_g = spec.control_matrix, bscale](const Eigen::VectorXd& x) {
        return Eigen::MatrixXd(bscale * spec_g(x));
    };
    spec.noise_cov = Eigen::MatrixXd::Constant(1, 1, p.noise_std * p.noise_std);
    spec.energy = [M, m, l, g](const Eigen::VectorXd& x) {
        const double sd = x(1), th = x(2), w = x(3);
        const double ke = 0.5 * (M + m) * sd * sd + m * l * sd * w * std::cos(th) +
                          0.5 * m * l * l * w * w;
        const double pe = -m * g * l * std::cos(th);
        return ke + pe;
    };
    return spec;
}

struct CartDoublePendulumParams {
    double cart_mass = 0.5;
    double link1_mass = 0.25;
    double link2_mass = 0.25;
    double link1_length = 0.25;
    double link2_length = 0.25;
    double gravity = 9.81;
    double noise_std = 1.0;
    double control_noise_scale = 1.0;
};

/// Cart with a double pendulum (point masses at the link ends); state
/// (s, s_dot, th1, th1_dot, th2, th2_dot), one force input. Accelerations come
/// from a 3x3 mass-matrix solve.
inline PlantSpec cart_double_pendulum(const CartDoublePendulumParams& p = {}) {
    if (p.cart_mass <= 0 || p.link1_mass <= 0 || p.link2_mass <= 0 ||
        p.link1_length <= 0 || p.link2_length <= 0)
        throw ShapeError("cart_double_pendulum: masses and lengths must be positive");
    PlantSpec spec;
    spec.state_dim = 6;
    spec.control_dim = 1;
    spec.noise_dim = 1;
    spec.name = "cart_double_pendulum";
    spec.default_init = Eigen::VectorXd::Zero(6);
    const double M = p.cart_mass, m1 = p.link1_mass, m2 = p.link2_mass;
    const double l1 = p.link1_length, l2 = p.link2_length, g = p.gravity;

    auto mass_matrix = [M, m1, m2, l1, l2](double th1, double th2) {
        const double c1 = std::cos(th1), c2 = std::cos(th2), c12 = std::cos(th1 - th2);
        Eigen::Matrix3d mm;
        mm << M + m1 + m2, (m1 + m2) * l1 * c1, m2 * l2 * c2,
              (m1 + m2) * l1 * c1, (m1 + m2) * l1 * l1, m2 * l1 * l2 * c12,
              m2 * l2 * c2, m2 * l1 * l2 * c12, m2 * l2 * l2;
        return mm;
    };
    auto bias = [m1, m2, l1, l2, g](const Eigen::VectorXd& x, double u) {
        const double th1 = x(2), w1 = x(3), th2 = x(4), w2 = x(5);
        const double s1 = std::sin(th1), s2 = std::sin(th2), s12 = std::sin(th1 - th2);
        Eigen::Vector3d rhs;
        rhs << u + (m1 + m2) * l1 * s1 * w1 * w1 + m2 * l2 * s2 * w2 * w2,
               -m2 * l1 * l2 * s12 * w2 * w2 - (m1 + m2) * g * l1 * s1,
               m2 * l1 * l2 * s12 * w1 * w1 - m2 * g * l2 * s2;
        return rhs;
    };
    auto accel = [mass_matrix, bias](const Eigen::VectorXd& x, double u) {
        Eigen::Matrix3d mm = mass_matrix(x(2), x(4));
        Eigen::LLT<Eigen::Matrix3d> llt(mm);
        if (llt.info() != Eigen::Success)
            throw IntegrationError("cart_double_pendulum: singular mass matrix");
        return Eigen::Vector3d(llt.solve(bias(x, u)));
    };

    spec.drift = [accel](const Eigen::VectorXd& x) {
        Eigen::Vector3d a = accel(x, 0.0);
        Eigen::VectorXd f(6);
        f << x(1), a(0), x(3), a(1), x(5), a(2);
        return f;
    };
    spec.control_matrix = [mass_matrix](const Eigen::VectorXd& x) {
        Eigen::Matrix3d mm = mass_matrix(x(2), x(4));
        Eigen::LLT<Eigen::Matrix3d> llt(mm);
        if (llt.info() != Eigen::Success)
            throw IntegrationError("cart_double_pendulum: singular mass matrix");
        Eigen::Vector3d col = llt.solve(Eigen::Vector3d(1, 0, 0));
        Eigen::MatrixXd gmat = Eigen::MatrixXd::Zero(6, 1);
        gmat(1, 0) = col(0);
        gmat(3, 0) = col(1);
        gmat(5, 0) = col(2);
        return gmat;
    };
    const double bscale = p.control_noise_scale;
    spec.diffusion = [gfun = spec.control_matrix, bscale](const Eigen::VectorXd& x) {
        return Eigen::MatrixXd(bscale * gfun(x));
    };
    spec.noise_cov = Eigen::MatrixXd::Constant(1, 1, p.noise_std * p.noise_std);
    spec.energy = [M, m1, m2, l1, l2, g](const Eigen::VectorXd& x) {
        const double sd = x(1), th1 = x(2), w1 = x(3), th2 = x(4), w2 = x(5);
        const double c1 = std::cos(th1), c2 = std::cos(th2), c12 = std::cos(th1 - th2);
        const double ke = 0.5 * (M + m1 + m2) * sd * sd +
                          0.5 * (m1 + m2) * l1 * l1 * w1 * w1 +
                          0.5 * m2 * l2 * l2 * w2 * w2 +
                          (m1 + m2) * l1 * c1 * sd * w1 + m2 * l2 * c2 * sd * w2 +
                          m2 * l1 * l2 * c12 * w1 * w2;
        const double pe = -(m1 + m2) * g * l1 * c1 - m2 * g * l2 * c2;
        return ke + pe;
    };
    return spec;
}

/// f(x) = A x, constant control and diffusion matrices; used by the
/// linear-Gaussian oracles.
inline PlantSpec linear_plant(const Eigen::MatrixXd& a, const Eigen::MatrixXd& bc,
                              const Eigen::MatrixXd& bnoise,
                              const Eigen::MatrixXd& noise_cov) {
    if (a.rows() != a.cols() || bc.rows() != a.rows() || bnoise.rows() != a.rows() ||
        noise_cov.rows() != noise_cov.cols() || noise_cov.rows() != bnoise.cols())
        throw ShapeError("linear_plant: inconsistent dimensions");
    PlantSpec spec;
    spec.state_dim = static_cast<int>(a.rows());
    spec.control_dim = static_cast<int>(bc.cols());
    spec.noise_dim = static_cast<int>(bnoise.cols());
    spec.name = "linear";
    spec.default_init = Eigen::VectorXd::Zero(spec.state_dim);
    spec.drift = [a](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x); };
    spec.control_matrix = [bc](const Eigen::VectorXd&) { return bc; };
    spec.diffusion = [bnoise](const Eigen::VectorXd&) { return bnoise; };
    spec.noise_cov = noise_cov;
    return spec;
}

/// 1-D double integrator (position, velocity), force input with force noise.
inline PlantSpec double_integrator(double noise_std = 1.0) {
    Eigen::MatrixXd a(2, 2), bc(2, 1);
    a << 0, 1, 0, 0;
    bc << 0, 1;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(1, 1, noise_std * noise_std);
    PlantSpec spec = linear_plant(a, bc, bc, cov);
    spec.name = "double_integrator";
    return spec;
}

enum class RolloutPolicy { Zero, Random, Schedule };

struct RolloutOptions {
    RolloutPolicy policy = RolloutPolicy::Zero;
    double random_amplitude = 0.0;           // uniform in [-a, a] per control dim
    Eigen::MatrixXd schedule;                // steps x m when policy == Schedule
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> cost_rate;
};

struct RolloutBatch {
    TransitionDataset dataset;
    std::vector<Episode> episodes;
};

inline Episode run_rollout(const PlantSpec& plant, const Eigen::VectorXd& x0,
                           int steps, double dt, Rng& rng, const RolloutOptions& opts) {
    Episode ep;
    ep.dt = dt;
    ep.seed = rng.seed();
    ep.states.resize(steps + 1, plant.state_dim);
    ep.controls.resize(steps, plant.control_dim);
    ep.transitions.resize(steps, plant.state_dim);
    ep.noises.resize(steps, plant.noise_dim);
    ep.step_costs = Eigen::VectorXd::Zero(steps);
    ep.states.row(0) = x0.transpose();
    Eigen::VectorXd x = x0;
    for (int k = 0; k < steps; ++k) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(plant.control_dim);
        switch (opts.policy) {
            case RolloutPolicy::Zero: break;
            case RolloutPolicy::Random:
                for (int j = 0; j < plant.control_dim; ++j)
                    u(j) = rng.uniform(-opts.random_amplitude, opts.random_amplitude);
                break;
            case RolloutPolicy::Schedule:
                if (opts.schedule.rows() <= k)
                    throw ShapeError("run_rollout: schedule shorter than episode");
                u = opts.schedule.row(k).transpose();
                break;
        }
        EmStep s = em_step(plant, x, u, dt, rng);
        ep.controls.row(k) = u.transpose();
        ep.transitions.row(k) = s.dx.transpose();
        ep.noises.row(k) = s.noise.transpose();
        if (opts.cost_rate) {
            ep.step_costs(k) = opts.cost_rate(x, u);
            ep.cumulative_cost += ep.step_costs(k) * dt;
        }
        x = s.x_next;
        ep.states.row(k + 1) = x.transpose();
    }
    return ep;
}

/// Execute `count` rollouts (independent child RNG streams) and assemble the
/// joint (x,u) -> dx training set.
inline RolloutBatch collect_rollouts(const PlantSpec& plant, const Eigen::VectorXd& x0,
                                     int count, int steps, double dt, std::uint64_t seed,
                                     const RolloutOptions& opts = {}) {
    if (count < 1 || steps < 1)
        throw ShapeError("collect_rollouts: count and steps must be >= 1");
    RolloutBatch batch;
    const int n = plant.state_dim, m = plant.control_dim;
    Eigen::MatrixXd inputs(count * steps, n + m), outputs(count * steps, n);
    Rng root(seed);
    for (int r = 0; r < count; ++r) {
        Rng stream = root.child(r);
        Episode ep = run_rollout(plant, x0, steps, dt, stream, opts);
        for (int k = 0; k < steps; ++k) {
            inputs.block(r * steps + k, 0, 1, n) = ep.states.row(k);
            inputs.block(r * steps + k, n, 1, m) = ep.controls.row(k);
            outputs.row(r * steps + k) = ep.transitions.row(k);
        }
        batch.episodes.push_back(std::move(ep));
    }
    batch.dataset = TransitionDataset(inputs, outputs, n, m);
    return batch;
}

}  // namespace gppi
