#pragma once

#include <Eigen/Core>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gppi/util/csv.hpp"
#include "gppi/util/errors.hpp"

namespace gppi {

/// Joint (state, control) inputs paired with observed state transitions.
/// Rows are records: inputs is N x (n+m), outputs is N x n.
class TransitionDataset {
public:
    TransitionDataset() = default;

    TransitionDataset(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
                      int state_dim, int control_dim)
        : inputs_(std::move(inputs)), outputs_(std::move(outputs)),
          state_dim_(state_dim), control_dim_(control_dim) {
        validate();
    }

    const Eigen::MatrixXd& inputs() const { return inputs_; }
    const Eigen::MatrixXd& outputs() const { return outputs_; }
    int size() const { return static_cast<int>(inputs_.rows()); }
    int state_dim() const { return state_dim_; }
    int control_dim() const { return control_dim_; }
    int input_dim() const { return state_dim_ + control_dim_; }

    void append(const TransitionDataset& other) {
        if (other.state_dim_ != state_dim_ || other.control_dim_ != control_dim_)
            throw ShapeError("dataset append: dimension mismatch");
        const int n0 = size(), n1 = other.size();
        inputs_.conservativeResize(n0 + n1, Eigen::NoChange);
        outputs_.conservativeResize(n0 + n1, Eigen::NoChange);
        inputs_.bottomRows(n1) = other.inputs_;
        outputs_.bottomRows(n1) = other.outputs_;
    }

    /// Keep only the newest `cap` records (oldest-first eviction).
    void truncate_oldest(int cap) {
        if (cap <= 0 || size() <= cap) return;
        inputs_ = inputs_.bottomRows(cap).eval();
        outputs_ = outputs_.bottomRows(cap).eval();
    }

    void to_csv(const std::string& path) const {
        CsvWriter w(path);
        std::vector<std::string> cols;
        for (int i = 0; i < state_dim_; ++i) cols.push_back("x_" + std::to_string(i + 1));
        for (int i = 0; i < control_dim_; ++i) cols.push_back("u_" + std::to_string(i + 1));
        for (int i = 0; i < state_dim_; ++i) cols.push_back("dx_" + std::to_string(i + 1));
        w.header(cols);
        for (int r = 0; r < size(); ++r) {
            std::vector<double> row;
            for (int c = 0; c < inputs_.cols(); ++c) row.push_back(inputs_(r, c));
            for (int c = 0; c < outputs_.cols(); ++c) row.push_back(outputs_(r, c));
            w.row(row);
        }
    }

    /// Column names x_1..x_n, u_1..u_m, dx_1..dx_n determine the dimensions.
    static TransitionDataset from_csv(const std::string& path) {
        CsvTable t = read_csv(path);
        int n = 0, m = 0;
        for (const auto& c : t.columns) {
            if (c.rfind("x_", 0) == 0 && c.rfind("dx_", 0) != 0) ++n;
            else if (c.rfind("u_", 0) == 0) ++m;
        }
        if (n == 0 || static_cast<int>(t.columns.size()) != 2 * n + m)
            throw IoError("dataset csv: unexpected header in " + path);
        const int rows = static_cast<int>(t.rows.size());
        Eigen::MatrixXd inputs(rows, n + m), outputs(rows, n);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < n + m; ++c) inputs(r, c) = t.rows[r][c];
            for (int c = 0; c < n; ++c) outputs(r, c) = t.rows[r][n + m + c];
        }
        return TransitionDataset(inputs, outputs, n, m);
    }

private:
    void validate() const {
        if (inputs_.rows() < 1) throw ShapeError("dataset: needs at least one record");
        if (inputs_.rows() != outputs_.rows())
            throw ShapeError("dataset: inputs and outputs must have equal length");
        if (state_dim_ < 1 || control_dim_ < 0)
            throw ShapeError("dataset: invalid dimensions");
        if (inputs_.cols() != state_dim_ + control_dim_)
            throw ShapeError("dataset: input dimension != n+m");
        if (outputs_.cols() != state_dim_)
            throw ShapeError("dataset: output dimension != n");
        if (!inputs_.allFinite() || !outputs_.allFinite())
            throw ShapeError("dataset: non-finite entries");
    }

    Eigen::MatrixXd inputs_;
    Eigen::MatrixXd outputs_;
    int state_dim_ = 0;
    int control_dim_ = 0;
};

}  // namespace gppi
