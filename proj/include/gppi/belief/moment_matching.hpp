#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gppi/belief/gaussian_belief.hpp"
#include "gppi/gp/model.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

// Exact moments of the SE-kernel GP pushforward of a Gaussian input
// x~ ~ N(mu, S), per output a with Lam_a = diag(lengthscales^2), nu_j = x_j - mu:
//
//   q_aj   = sig_a^2 |I + S Lam_a^-1|^-1/2 exp(-1/2 nu_j' (S+Lam_a)^-1 nu_j)
//   dmu_a  = m_a + alpha_a' q_a
//   COV[x~, dx_a] = S (S+Lam_a)^-1 sum_j alpha_aj q_aj nu_j
//
// and for the second moments, with P = Lam_a^-1 + Lam_b^-1, R = S P + I,
// T = R^-1 S, a_j = Lam_a^-1 nu_j, b_k = Lam_b^-1 nu_k, z = a_j + b_k:
//
//   ln Q_jk = ln k_a(x_j,mu) + ln k_b(x_k,mu) - 1/2 ln|R| + 1/2 z' T z
//   COV[dx_a, dx_b] = alpha_a' Q alpha_b - (dmu_a - m_a)(dmu_b - m_b)
//                     + [a==b] (sig_a^2 - tr((K_a + sn_a^2 I)^-1 Q))
//
// All derivatives of these expressions w.r.t. (mu, S) are available in closed
// form; the gradient path assembles them from a few N^2 contractions per
// output pair.

namespace detail {

struct OutputContext {
    Eigen::VectorXd lam;   // squared lengthscales, D
    Eigen::MatrixXd A;     // (S + Lam)^-1
    Eigen::MatrixXd SA;    // S * A
    Eigen::MatrixXd U;     // Nu * A,        N x D
    Eigen::MatrixXd L;     // Nu * Lam^-1,   N x D
    Eigen::VectorXd lk;    // log kernel vector at mu, N
    Eigen::VectorXd q;     // N
    Eigen::VectorXd w;     // alpha .* q
    double s = 0.0;        // sum(w) = dmu_a - m_a
    Eigen::VectorXd r;     // Nu' w, D
    Eigen::VectorXd gmu;   // A r: gradient of dmu_a w.r.t. mu
    Eigen::MatrixXd gS;    // 1/2 (A N A - s A): gradient of dmu_a w.r.t. S
    Eigen::MatrixXd vmu;   // 2 S gS: Jacobian of COV[x~,dx_a] w.r.t. mu
};

struct PairGrad {
    Eigen::VectorXd dmu;  // D
    Eigen::MatrixXd dS;   // D x D (full-matrix gradient, symmetrize to use)
};

struct PairContext {
    double e2 = 0.0;
    double beta = 0.0;  // tr(Kinv Q), diagonal pairs only
    PairGrad e2_grad;
    PairGrad beta_grad;
};

/// sum_jk Gw_jk d lnQ_jk / d(mu, S) for a fixed weight matrix Gw.
inline PairGrad contract_pair_gradient(const Eigen::MatrixXd& gw,
                                       const OutputContext& ca, const OutputContext& cb,
                                       const Eigen::MatrixXd& ipt,
                                       const Eigen::MatrixXd& rinv_t,
                                       const Eigen::VectorXd& pd) {
    Eigen::VectorXd gr = gw.rowwise().sum();
    Eigen::VectorXd gc = gw.colwise().sum().transpose();
    const double total = gr.sum();

    PairGrad out;
    out.dmu = ipt * (ca.L.transpose() * gr + cb.L.transpose() * gc);

    Eigen::MatrixXd mixed = ca.L.transpose() * gw * cb.L;  // D x D
    Eigen::MatrixXd z2 = ca.L.transpose() * gr.asDiagonal() * ca.L + mixed +
                         mixed.transpose() +
                         cb.L.transpose() * gc.asDiagonal() * cb.L;
    out.dS = -0.5 * total * rinv_t * pd.asDiagonal() +
             0.5 * rinv_t * z2 * ipt.transpose();
    return out;
}

}  // namespace detail

/// Full moment-matching workspace for one joint Gaussian input. Gradients are
/// only assembled when requested.
class MomentWorkspace {
public:
    MomentWorkspace(const GpModel& model, const Eigen::VectorXd& joint_mean,
                    const Eigen::MatrixXd& joint_cov, bool with_gradients)
        : model_(model), mu_(joint_mean), s_(symmetrized(joint_cov)),
          grads_(with_gradients) {
        const int d = model.input_dim(), n = model.state_dim();
        if (mu_.size() != d || s_.rows() != d)
            throw ShapeError("moment matching: joint dimension mismatch");
        nu_ = model.data().inputs().rowwise() - mu_.transpose();
        out_.resize(n);
        for (int a = 0; a < n; ++a) build_output_context(a);
        pairs_.assign(static_cast<std::size_t>(n * (n + 1) / 2), {});
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) build_pair_context(a, b);
    }

    MomentPrediction prediction() const {
        const int n = model_.state_dim(), d = model_.input_dim();
        MomentPrediction mp;
        mp.d_mean.resize(n);
        mp.d_cov.resize(n, n);
        mp.cross_cov.resize(d, n);
        for (int a = 0; a < n; ++a) {
            mp.d_mean(a) = model_.prior_mean(a) + out_[a].s;
            mp.cross_cov.col(a) = s_ * out_[a].gmu;
            for (int b = a; b < n; ++b) {
                double c = pair(a, b).e2 - out_[a].s * out_[b].s;
                if (a == b) {
                    const double sig2 =
                        model_.params()[a].signal_std * model_.params()[a].signal_std;
                    c += sig2 - pair(a, a).beta;
                }
                mp.d_cov(a, b) = c;
                mp.d_cov(b, a) = c;
            }
        }
        return mp;
    }

    /// Jacobians reduced to the state block (first n_state joint coordinates);
    /// the remaining coordinates are deterministic controls.
    TransitionJacobians state_jacobians() const {
        if (!grads_) throw PropagationError("workspace built without gradients");
        const int n = model_.state_dim();
        const int nv = vech_size(n);
        TransitionJacobians tj;
        tj.dmean_dmu.resize(n, n);
        tj.dmean_dcov.resize(n, nv);
        tj.dgrow_dmu.resize(nv, n);
        tj.dgrow_dcov.resize(nv, nv);

        // mean-direction sweep
        for (int k = 0; k < n; ++k) {
            Eigen::VectorXd ds(n);        // d s_a
            Eigen::MatrixXd dv(n, n);     // d V_a restricted to state rows
            for (int a = 0; a < n; ++a) {
                ds(a) = out_[a].gmu(k);
                dv.col(a) = out_[a].vmu.col(k).head(n);
            }
            for (int a = 0; a < n; ++a) tj.dmean_dmu(a, k) = ds(a);
            for (int p = 0; p < n; ++p) {
                for (int q = 0; q <= p; ++q) {
                    double dcov = pair(p, q).e2_grad.dmu(k) - ds(p) * out_[q].s -
                                  out_[p].s * ds(q);
                    if (p == q) dcov -= pair(p, p).beta_grad.dmu(k);
                    tj.dgrow_dmu(vech_index(p, q, n), k) = dcov + dv(p, q) + dv(q, p);
                }
            }
        }

        // covariance-direction sweep (symmetrized pair basis on the state block)
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                const int col = vech_index(i, j, n);
                Eigen::VectorXd ds(n);
                Eigen::MatrixXd dv(n, n);
                for (int a = 0; a < n; ++a) {
                    ds(a) = sym_dir(out_[a].gS, i, j);
                    dv.col(a) = cross_cov_direction(a, i, j).head(n);
                }
                for (int a = 0; a < n; ++a) tj.dmean_dcov(a, col) = ds(a);
                for (int p = 0; p < n; ++p) {
                    for (int q = 0; q <= p; ++q) {
                        double dcov = sym_dir(pair(p, q).e2_grad.dS, i, j) -
                                      ds(p) * out_[q].s - out_[p].s * ds(q);
                        if (p == q) dcov -= sym_dir(pair(p, p).beta_grad.dS, i, j);
                        tj.dgrow_dcov(vech_index(p, q, n), col) =
                            dcov + dv(p, q) + dv(q, p);
                    }
                }
            }
        }
        return tj;
    }

private:
    // pairs stored by (a,b), b >= a, in the vech layout over output indices
    std::size_t pair_index(int a, int b) const {
        if (a > b) std::swap(a, b);
        return static_cast<std::size_t>(vech_index(b, a, model_.state_dim()));
    }
    const detail::PairContext& pair(int a, int b) const { return pairs_[pair_index(a, b)]; }

    static double sym_dir(const Eigen::MatrixXd& grad, int i, int j) {
        return i == j ? grad(i, i) : grad(i, j) + grad(j, i);
    }

    /// Directional derivative of COV[x~, dx_a] along DS = E_ij + E_ji (i != j)
    /// or E_ii, restricted later to state rows.
    Eigen::VectorXd cross_cov_direction(int a, int i, int j) const {
        const auto& c = out_[a];
        const int d = model_.input_dim();
        // DS * gmu
        Eigen::VectorXd dsg = Eigen::VectorXd::Zero(d);
        if (i == j) {
            dsg(i) = c.gmu(i);
        } else {
            dsg(i) = c.gmu(j);
            dsg(j) = c.gmu(i);
        }
        // dr = -1/2 tr(A DS) r + 1/2 Nu' (w .* h),  h_j = nu_j' A DS A nu_j
        const double tr_ads = (i == j) ? c.A(i, i) : 2.0 * c.A(i, j);
        Eigen::VectorXd h = (i == j)
                                ? Eigen::VectorXd(c.U.col(i).array().square())
                                : Eigen::VectorXd(2.0 * c.U.col(i).cwiseProduct(c.U.col(j)));
        Eigen::VectorXd dr =
            -0.5 * tr_ads * c.r + 0.5 * nu_.transpose() * c.w.cwiseProduct(h);
        return dsg - c.SA * dsg + c.SA * dr;
    }

    void build_output_context(int a) {
        const int d = model_.input_dim();
        const Hyperparams& p = model_.params()[a];
        detail::OutputContext c;
        c.lam = p.lengthscales.array().square();
        Eigen::MatrixXd slam = s_;
        slam.diagonal() += c.lam;
        Eigen::LLT<Eigen::MatrixXd> llt(slam);
        if (llt.info() != Eigen::Success)
            throw PropagationError("moment matching: (S + Lam) not positive definite");
        c.A = llt.solve(Eigen::MatrixXd::Identity(d, d));
        c.SA = s_ * c.A;
        c.U = nu_ * c.A;
        c.L = nu_.array().rowwise() / c.lam.transpose().array();
        const double lsig2 = 2.0 * std::log(p.signal_std);
        const double logdet_slam = log_det_from_llt(llt);
        const double logdet_lam = c.lam.array().log().sum();
        Eigen::ArrayXd expo = -0.5 * (c.U.array() * nu_.array()).rowwise().sum();
        c.q = (expo + lsig2 - 0.5 * (logdet_slam - logdet_lam)).exp().matrix();
        c.lk = (-0.5 * (c.L.array() * nu_.array()).rowwise().sum() + lsig2).matrix();
        c.w = model_.alpha(a).cwiseProduct(c.q);
        c.s = c.w.sum();
        c.r = nu_.transpose() * c.w;
        c.gmu = c.A * c.r;
        if (grads_) {
            Eigen::MatrixXd nmat = nu_.transpose() * c.w.asDiagonal() * nu_;
            c.gS = 0.5 * (c.A * nmat * c.A - c.s * c.A);
            c.vmu = 2.0 * s_ * c.gS;
        }
        out_[a] = std::move(c);
    }

    void build_pair_context(int a, int b) {
        const int d = model_.input_dim();
        const auto& ca = out_[a];
        const auto& cb = out_[b];
        Eigen::VectorXd pd = ca.lam.cwiseInverse() + cb.lam.cwiseInverse();
        Eigen::MatrixXd r = s_ * pd.asDiagonal();
        r.diagonal().array() += 1.0;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(r);
        Eigen::MatrixXd rinv = lu.inverse();
        Eigen::MatrixXd t = symmetrized(rinv * s_);
        const double logdet_r = std::log(std::abs(lu.determinant()));

        Eigen::MatrixXd lat = ca.L * t;
        Eigen::MatrixXd lbt = cb.L * t;
        Eigen::VectorXd ta = 0.5 * (lat.array() * ca.L.array()).rowwise().sum();
        Eigen::VectorXd tb = 0.5 * (lbt.array() * cb.L.array()).rowwise().sum();
        Eigen::MatrixXd lnq = lat * cb.L.transpose();
        lnq.colwise() += ca.lk + ta;
        lnq.rowwise() += (cb.lk + tb).transpose();
        lnq.array() -= 0.5 * logdet_r;
        Eigen::MatrixXd q = lnq.array().exp();

        detail::PairContext pc;
        pc.e2 = model_.alpha(a).dot(q * model_.alpha(b));
        if (a == b) pc.beta = (model_.gram_inverse(a).array() * q.array()).sum();

        if (grads_) {
            Eigen::MatrixXd ipt =
                Eigen::MatrixXd::Identity(d, d) - pd.asDiagonal() * t;
            Eigen::MatrixXd rinv_t = rinv.transpose();
            Eigen::MatrixXd gw =
                (model_.alpha(a) * model_.alpha(b).transpose()).cwiseProduct(q);
            pc.e2_grad = detail::contract_pair_gradient(gw, ca, cb, ipt, rinv_t, pd);
            if (a == b) {
                Eigen::MatrixXd gb = model_.gram_inverse(a).cwiseProduct(q);
                pc.beta_grad =
                    detail::contract_pair_gradient(gb, ca, cb, ipt, rinv_t, pd);
            }
        }
        pairs_[pair_index(a, b)] = std::move(pc);
    }

    const GpModel& model_;
    Eigen::VectorXd mu_;
    Eigen::MatrixXd s_;
    Eigen::MatrixXd nu_;  // N x D rows x_j - mu
    bool grads_;
    std::vector<detail::OutputContext> out_;
    std::vector<detail::PairContext> pairs_;
};

/// Exact first/second moments of the GP transition under a Gaussian joint
/// state-control input (latent function only; no observation noise).
inline MomentPrediction exact_moments(const GpModel& model, const GaussianBelief& joint) {
    return MomentWorkspace(model, joint.mean, joint.cov, false).prediction();
}

}  // namespace gppi
