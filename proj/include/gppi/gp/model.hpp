#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "gppi/gp/dataset.hpp"
#include "gppi/gp/kernel.hpp"
#include "gppi/util/math.hpp"

namespace gppi {

/// Affine standardization statistics. Fitting standardizes inputs and outputs
/// to zero mean / unit scale; the statistics are kept so the model can be
/// expressed in original units.
struct Normalization {
    Eigen::VectorXd in_mean, in_scale;    // n+m
    Eigen::VectorXd out_mean, out_scale;  // n

    static Normalization identity(int input_dim, int output_dim) {
        Normalization z;
        z.in_mean = Eigen::VectorXd::Zero(input_dim);
        z.in_scale = Eigen::VectorXd::Ones(input_dim);
        z.out_mean = Eigen::VectorXd::Zero(output_dim);
        z.out_scale = Eigen::VectorXd::Ones(output_dim);
        return z;
    }

    static Normalization from_data(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        auto stats = [](const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
            mean = m.colwise().mean();
            Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
            scale = (centered.array().square().colwise().sum() / std::max<int>(1, m.rows() - 1))
                        .sqrt();
            for (int i = 0; i < scale.size(); ++i)
                if (!(scale(i) > 1e-10)) scale(i) = 1.0;  // constant columns
        };
        Normalization z;
        stats(x, z.in_mean, z.in_scale);
        stats(y, z.out_mean, z.out_scale);
        return z;
    }
};

/// Trained dynamics model: one independent GP per output dimension over joint
/// (x, u) inputs. Internally everything is stored in original units; the
/// standardized-space hyperparameters found by the optimizer are converted via
///   l_orig = l_norm .* in_scale,   s_orig = s_norm * out_scale_a,
///   alpha_orig = alpha_norm / out_scale_a,
/// with a constant prior mean out_mean_a per output. These models are
/// immutable after construction and safe for concurrent reads.
class GpModel {
public:
    GpModel() = default;

    /// Factorize a model from standardized-space hyperparameters.
    static GpModel build(TransitionDataset data, std::vector<Hyperparams> fitted,
                         Normalization norm) {
        GpModel m;
        m.data_ = std::move(data);
        m.norm_ = std::move(norm);
        m.fitted_ = std::move(fitted);
        const int n = m.data_.state_dim();
        if (static_cast<int>(m.fitted_.size()) != n)
            throw ShapeError("GpModel: one hyperparameter set per output dimension");
        for (int a = 0; a < n; ++a) {
            if (m.fitted_[a].lengthscales.size() != m.data_.input_dim())
                throw ShapeError("GpModel: lengthscale dimension != n+m");
            m.fitted_[a].validate();
            Hyperparams c;
            c.lengthscales =
                m.fitted_[a].lengthscales.cwiseProduct(m.norm_.in_scale);
            c.signal_std = m.fitted_[a].signal_std * m.norm_.out_scale(a);
            c.noise_std = m.fitted_[a].noise_std * m.norm_.out_scale(a);
            m.canon_.push_back(c);
        }
        m.factorize();
        return m;
    }

    /// Convenience: hyperparameters already in original units, no rescaling.
    static GpModel from_raw(TransitionDataset data, std::vector<Hyperparams> params) {
        Normalization norm = Normalization::identity(data.input_dim(), data.state_dim());
        return build(std::move(data), std::move(params), norm);
    }

    int state_dim() const { return data_.state_dim(); }
    int control_dim() const { return data_.control_dim(); }
    int input_dim() const { return data_.input_dim(); }
    int size() const { return data_.size(); }
    const TransitionDataset& data() const { return data_; }
    const Normalization& normalization() const { return norm_; }
    const std::vector<Hyperparams>& fitted_params() const { return fitted_; }
    const std::vector<Hyperparams>& params() const { return canon_; }
    const Eigen::VectorXd& alpha(int a) const { return alpha_[a]; }
    const Eigen::MatrixXd& gram_inverse(int a) const { return kinv_[a]; }
    const Eigen::LLT<Eigen::MatrixXd>& gram_factor(int a) const { return chol_[a]; }
    double prior_mean(int a) const { return norm_.out_mean(a); }
    double jitter(int a) const { return jitter_[a]; }
    double noise_variance(int a) const {
        return canon_[a].noise_std * canon_[a].noise_std;
    }

    struct Prediction {
        Eigen::VectorXd mean;      // predicted transition dx
        Eigen::VectorXd variance;  // per-dimension latent variance, >= 0
    };

    /// Posterior mean and variance at a single deterministic input.
    Prediction predict_point(const Eigen::VectorXd& xt) const {
        if (xt.size() != input_dim())
            throw ShapeError("predict_point: input dimension mismatch");
        const int n = state_dim();
        Prediction out;
        out.mean.resize(n);
        out.variance.resize(n);
        for (int a = 0; a < n; ++a) {
            Eigen::VectorXd k = kernel_vector(canon_[a], data_.inputs(), xt);
            out.mean(a) = prior_mean(a) + k.dot(alpha_[a]);
            const double prior_var = canon_[a].signal_std * canon_[a].signal_std;
            double v = prior_var - k.dot(chol_[a].solve(k));
            out.variance(a) = std::max(v, 0.0);
        }
        return out;
    }

    void save_json(const std::string& path, const std::string& dataset_csv = "") const {
        nlohmann::json j;
        j["state_dim"] = state_dim();
        j["control_dim"] = control_dim();
        auto vec = [](const Eigen::VectorXd& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        j["normalization"] = {{"in_mean", vec(norm_.in_mean)},
                              {"in_scale", vec(norm_.in_scale)},
                              {"out_mean", vec(norm_.out_mean)},
                              {"out_scale", vec(norm_.out_scale)}};
        for (const auto& p : fitted_) {
            j["hyperparams"].push_back({{"signal_std", p.signal_std},
                                        {"noise_std", p.noise_std},
                                        {"lengthscales", vec(p.lengthscales)}});
        }
        if (dataset_csv.empty()) {
            std::vector<std::vector<double>> xs, ys;
            for (int r = 0; r < size(); ++r) {
                xs.emplace_back(data_.inputs().row(r).begin(), data_.inputs().row(r).end());
                ys.emplace_back(data_.outputs().row(r).begin(), data_.outputs().row(r).end());
            }
            j["dataset"] = {{"inputs", xs}, {"outputs", ys}};
        } else {
            data_.to_csv(dataset_csv);
            j["dataset"] = {{"csv", dataset_csv}};
        }
        std::ofstream out(path);
        if (!out) throw IoError("cannot write model json: " + path);
        out << j.dump(2) << '\n';
    }

    static GpModel load_json(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read model json: " + path);
        nlohmann::json j;
        in >> j;
        const int n = j.at("state_dim").get<int>();
        const int m = j.at("control_dim").get<int>();
        auto vec = [](const nlohmann::json& a) {
            std::vector<double> v = a.get<std::vector<double>>();
            return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))
                .eval();
        };
        Normalization norm;
        norm.in_mean = vec(j.at("normalization").at("in_mean"));
        norm.in_scale = vec(j.at("normalization").at("in_scale"));
        norm.out_mean = vec(j.at("normalization").at("out_mean"));
        norm.out_scale = vec(j.at("normalization").at("out_scale"));
        std::vector<Hyperparams> params;
        for (const auto& hj : j.at("hyperparams")) {
            Hyperparams p;
            p.signal_std = hj.at("signal_std").get<double>();
            p.noise_std = hj.at("noise_std").get<double>();
            p.lengthscales = vec(hj.at("lengthscales"));
            params.push_back(std::move(p));
        }
        TransitionDataset data;
        if (j.at("dataset").contains("csv")) {
            data = TransitionDataset::from_csv(j.at("dataset").at("csv").get<std::string>());
        } else {
            auto xs = j.at("dataset").at("inputs").get<std::vector<std::vector<double>>>();
            auto ys = j.at("dataset").at("outputs").get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd inputs(xs.size(), n + m), outputs(ys.size(), n);
            for (std::size_t r = 0; r < xs.size(); ++r) {
                for (int c = 0; c < n + m; ++c) inputs(static_cast<int>(r), c) = xs[r][c];
                for (int c = 0; c < n; ++c) outputs(static_cast<int>(r), c) = ys[r][c];
            }
            data = TransitionDataset(inputs, outputs, n, m);
        }
        return build(std::move(data), std::move(params), std::move(norm));
    }

private:
    void factorize() {
        const int n = state_dim();
        alpha_.resize(n);
        chol_.resize(n);
        kinv_.resize(n);
        jitter_.assign(n, 0.0);
        const int rows = size();
        for (int a = 0; a < n; ++a) {
            CholeskyResult c = jittered_cholesky(gram_matrix(canon_[a], data_.inputs()));
            chol_[a] = c.llt;
            jitter_[a] = c.jitter;
            Eigen::VectorXd centered =
                data_.outputs().col(a).array() - prior_mean(a);
            alpha_[a] = chol_[a].solve(centered);
            kinv_[a] = chol_[a].solve(Eigen::MatrixXd::Identity(rows, rows));
        }
    }

    TransitionDataset data_;
    Normalization norm_;
    std::vector<Hyperparams> fitted_;  // standardized space
    std::vector<Hyperparams> canon_;   // original units
    std::vector<Eigen::VectorXd> alpha_;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
    std::vector<Eigen::MatrixXd> kinv_;
    std::vector<double> jitter_;
};

}  // namespace gppi
