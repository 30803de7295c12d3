// autodiff.hpp - tape-based reverse-mode differentiation over dense matrices
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hyperforge/types.hpp"

namespace hyperforge::ad {

// Named trainable arrays with gradient slots.
class ParameterStore {
public:
    Index add(std::string name, Matrix value);
    Index size() const { return static_cast<Index>(entries_.size()); }
    // Throws Error("UnknownParameter").
    Index find(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::string& name(Index id) const { return at(id).name; }
    Matrix& value(Index id) { return at(id).value; }
    const Matrix& value(Index id) const { return at(id).value; }
    Matrix& grad(Index id) { return at(id).grad; }
    const Matrix& grad(Index id) const { return at(id).grad; }

    void zero_grad();
    Index num_scalars() const;
    double grad_norm() const;

private:
    struct Entry {
        std::string name;
        Matrix value;
        Matrix grad;
    };
    Entry& at(Index id) { return entries_.at(static_cast<std::size_t>(id)); }
    const Entry& at(Index id) const { return entries_.at(static_cast<std::size_t>(id)); }
    std::vector<Entry> entries_;
};

struct Var {
    Index id = -1;
};

// Records operations as they are evaluated. backward() walks the record in
// reverse and adds parameter gradients into the store. A tape is used for a
// single backward pass.
class Tape {
public:
    explicit Tape(ParameterStore* params = nullptr) : read_(params), write_(params) {}
    // Read-only parameters: backward() is not available.
    explicit Tape(const ParameterStore* params) : read_(params), write_(nullptr) {}

    Var constant(Matrix value);
    Var param(Index parameter_id);
    Var param(const std::string& name);

    const Matrix& value(Var v) const { return node(v).value; }
    Index rows(Var v) const { return node(v).value.rows(); }
    Index cols(Var v) const { return node(v).value.cols(); }
    Index size() const { return static_cast<Index>(nodes_.size()); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    // a + row, with row (1 x cols) broadcast over the rows of a.
    Var add_row(Var a, Var row);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var silu(Var a);
    Var concat_cols(const std::vector<Var>& parts);
    Var gather_rows(Var a, std::vector<Index> index);
    // out[index[i]] += a[i]; out has `rows` rows.
    Var scatter_add_rows(Var a, std::vector<Index> index, Index rows);
    Var slice_cols(Var a, Index start, Index count);
    // Each row divided by its root mean square (plus eps).
    Var rms_norm_rows(Var a, double eps = 1e-6);
    // Mean squared error over entries with mask != 0 (1 x 1 result).
    Var masked_mse(Var pred, const Matrix& target, const Matrix& mask = {});
    Var sum_all(const std::vector<Var>& scalars);

    // d(out)/d(everything) with seed 1; out must be 1 x 1.
    void backward(Var out);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(std::vector<Node>&, Index self)> back;
        Index parameter = -1;
    };
    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Matrix value, std::function<void(std::vector<Node>&, Index)> back);
    static Matrix& grad_of(std::vector<Node>& nodes, Index id);

    const ParameterStore* read_;
    ParameterStore* write_;
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    // Applies one update from the gradients in the store. Throws
    // Error("NonFinite") if any update is not finite; nothing is changed then.
    void step(ParameterStore& params);
    Index steps() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    void set_lr(double lr) { config_.lr = lr; }

    // Moment buffers, exposed for checkpointing.
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    void set_steps(Index steps) { steps_ = steps; }

private:
    AdamConfig config_;
    Index steps_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace hyperforge::ad
