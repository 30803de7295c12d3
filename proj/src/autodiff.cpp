// autodiff.cpp - reverse-mode tape and Adam
#include "hyperforge/autodiff.hpp"

#include <cmath>

namespace hyperforge::ad {

Index ParameterStore::add(std::string name, Matrix value) {
    if (contains(name)) throw Error("DuplicateParameter", "parameter " + name + " already exists");
    Matrix grad = Matrix::Zero(value.rows(), value.cols());
    entries_.push_back({std::move(name), std::move(value), std::move(grad)});
    return size() - 1;
}

Index ParameterStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name == name) return static_cast<Index>(i);
    throw Error("UnknownParameter", "no parameter named " + name);
}

bool ParameterStore::contains(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.grad.setZero();
}

Index ParameterStore::num_scalars() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

double ParameterStore::grad_norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.grad.squaredNorm();
    return std::sqrt(s);
}

Tape::Node& Tape::node(Var v) {
    if (v.id < 0 || v.id >= size()) throw Error("InvalidVar", "variable does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id < 0 || v.id >= size()) throw Error("InvalidVar", "variable does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
}

Matrix& Tape::grad_of(std::vector<Node>& nodes, Index id) {
    Node& n = nodes[static_cast<std::size_t>(id)];
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
        n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::push(Matrix value, std::function<void(std::vector<Node>&, Index)> back) {
    if (consumed_) throw Error("TapeConsumed", "tape already ran backward");
    if (!value.allFinite()) throw Error("NonFinite", "non-finite activation at tape node " + std::to_string(size()));
    nodes_.push_back({std::move(value), Matrix(), std::move(back), -1});
    return {size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::param(Index parameter_id) {
    if (!read_) throw Error("InvalidArgument", "tape has no parameter store");
    Var v = push(read_->value(parameter_id), nullptr);
    nodes_.back().parameter = parameter_id;
    return v;
}

Var Tape::param(const std::string& name) {
    if (!read_) throw Error("InvalidArgument", "tape has no parameter store");
    return param(read_->find(name));
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error("ShapeMismatch", what);
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
    require(cols(a) == rows(b), "matmul: inner dimensions differ");
    const Index ia = a.id;
    const Index ib = b.id;
    return push(value(a) * value(b), [ia, ib](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        grad_of(n, ia).noalias() += g * n[static_cast<std::size_t>(ib)].value.transpose();
        grad_of(n, ib).noalias() += n[static_cast<std::size_t>(ia)].value.transpose() * g;
    });
}

Var Tape::add(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), "add: shapes differ");
    const Index ia = a.id;
    const Index ib = b.id;
    return push(value(a) + value(b), [ia, ib](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        grad_of(n, ia) += g;
        grad_of(n, ib) += g;
    });
}

Var Tape::sub(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), "sub: shapes differ");
    const Index ia = a.id;
    const Index ib = b.id;
    return push(value(a) - value(b), [ia, ib](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        grad_of(n, ia) += g;
        grad_of(n, ib) -= g;
    });
}

Var Tape::add_row(Var a, Var row) {
    require(rows(row) == 1 && cols(row) == cols(a), "add_row: row shape differs");
    const Index ia = a.id;
    const Index ir = row.id;
    Matrix out = value(a);
    out.rowwise() += value(row).row(0);
    return push(std::move(out), [ia, ir](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        grad_of(n, ia) += g;
        grad_of(n, ir) += g.colwise().sum();
    });
}

Var Tape::mul(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), "mul: shapes differ");
    const Index ia = a.id;
    const Index ib = b.id;
    return push(value(a).cwiseProduct(value(b)), [ia, ib](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        grad_of(n, ia) += g.cwiseProduct(n[static_cast<std::size_t>(ib)].value);
        grad_of(n, ib) += g.cwiseProduct(n[static_cast<std::size_t>(ia)].value);
    });
}

Var Tape::scale(Var a, double s) {
    const Index ia = a.id;
    return push(value(a) * s, [ia, s](std::vector<Node>& n, Index self) {
        grad_of(n, ia) += s * n[static_cast<std::size_t>(self)].grad;
    });
}

Var Tape::silu(Var a) {
    const Index ia = a.id;
    const Matrix& x = value(a);
    Matrix out = x.array() / (1.0 + (-x.array()).exp());
    return push(std::move(out), [ia](std::vector<Node>& n, Index self) {
        const Matrix& xin = n[static_cast<std::size_t>(ia)].value;
        const auto sig = 1.0 / (1.0 + (-xin.array()).exp());
        const Matrix d = sig * (1.0 + xin.array() * (1.0 - sig));
        grad_of(n, ia) += n[static_cast<std::size_t>(self)].grad.cwiseProduct(d);
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const Index r = rows(parts.front());
    Index total = 0;
    for (Var p : parts) {
        require(rows(p) == r, "concat_cols: row counts differ");
        total += cols(p);
    }
    Matrix out(r, total);
    std::vector<std::pair<Index, Index>> spans;  // (node, first column)
    Index c = 0;
    for (Var p : parts) {
        out.middleCols(c, cols(p)) = value(p);
        spans.emplace_back(p.id, c);
        c += cols(p);
    }
    return push(std::move(out), [spans](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        for (const auto& [id, first] : spans) {
            Matrix& dst = grad_of(n, id);
            dst += g.middleCols(first, dst.cols());
        }
    });
}

Var Tape::gather_rows(Var a, std::vector<Index> index) {
    const Matrix& x = value(a);
    Matrix out(static_cast<Index>(index.size()), x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] >= 0 && index[i] < x.rows(), "gather_rows: index out of range");
        out.row(static_cast<Index>(i)) = x.row(index[i]);
    }
    const Index ia = a.id;
    return push(std::move(out), [ia, index = std::move(index)](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        Matrix& dst = grad_of(n, ia);
        for (std::size_t i = 0; i < index.size(); ++i) dst.row(index[i]) += g.row(static_cast<Index>(i));
    });
}

Var Tape::scatter_add_rows(Var a, std::vector<Index> index, Index rows_out) {
    const Matrix& x = value(a);
    require(static_cast<Index>(index.size()) == x.rows(), "scatter_add_rows: index length differs from rows");
    Matrix out = Matrix::Zero(rows_out, x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] >= 0 && index[i] < rows_out, "scatter_add_rows: index out of range");
        out.row(index[i]) += x.row(static_cast<Index>(i));
    }
    const Index ia = a.id;
    return push(std::move(out), [ia, index = std::move(index)](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        Matrix& dst = grad_of(n, ia);
        for (std::size_t i = 0; i < index.size(); ++i) dst.row(static_cast<Index>(i)) += g.row(index[i]);
    });
}

Var Tape::slice_cols(Var a, Index start, Index count) {
    require(start >= 0 && count >= 0 && start + count <= cols(a), "slice_cols: range out of bounds");
    const Index ia = a.id;
    return push(value(a).middleCols(start, count), [ia, start, count](std::vector<Node>& n, Index self) {
        grad_of(n, ia).middleCols(start, count) += n[static_cast<std::size_t>(self)].grad;
    });
}

Var Tape::rms_norm_rows(Var a, double eps) {
    const Matrix& x = value(a);
    const Index d = x.cols();
    require(d > 0, "rms_norm_rows: no columns");
    Vector inv(x.rows());
    for (Index i = 0; i < x.rows(); ++i) inv[i] = 1.0 / std::sqrt(x.row(i).squaredNorm() / static_cast<double>(d) + eps);
    Matrix out = inv.asDiagonal() * x;
    const Index ia = a.id;
    return push(std::move(out), [ia, inv, d](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        const Matrix& xin = n[static_cast<std::size_t>(ia)].value;
        Matrix& dst = grad_of(n, ia);
        for (Index i = 0; i < xin.rows(); ++i) {
            const double r = inv[i];
            const double dot = g.row(i).dot(xin.row(i));
            dst.row(i) += r * g.row(i) - (r * r * r / static_cast<double>(d)) * dot * xin.row(i);
        }
    });
}

Var Tape::masked_mse(Var pred, const Matrix& target, const Matrix& mask) {
    const Matrix& p = value(pred);
    require(p.rows() == target.rows() && p.cols() == target.cols(), "masked_mse: target shape differs");
    Matrix weight = (mask.size() == 0 && mask.rows() == 0) ? Matrix::Ones(p.rows(), p.cols()) : mask;
    require(weight.rows() == p.rows() && weight.cols() == p.cols(), "masked_mse: mask shape differs");
    weight = (weight.array() != 0.0).cast<double>();
    const double count = weight.sum();
    Matrix out(1, 1);
    const Matrix diff = (p - target).cwiseProduct(weight);
    out(0, 0) = count > 0.0 ? diff.squaredNorm() / count : 0.0;
    const Index ip = pred.id;
    return push(std::move(out), [ip, diff, count](std::vector<Node>& n, Index self) {
        if (count <= 0.0) return;
        const double g = n[static_cast<std::size_t>(self)].grad(0, 0);
        grad_of(n, ip) += (2.0 * g / count) * diff;
    });
}

Var Tape::sum_all(const std::vector<Var>& scalars) {
    Matrix out = Matrix::Zero(1, 1);
    std::vector<Index> ids;
    for (Var s : scalars) {
        require(rows(s) == 1 && cols(s) == 1, "sum_all: inputs must be 1x1");
        out(0, 0) += value(s)(0, 0);
        ids.push_back(s.id);
    }
    return push(std::move(out), [ids](std::vector<Node>& n, Index self) {
        const Matrix& g = n[static_cast<std::size_t>(self)].grad;
        for (Index id : ids) grad_of(n, id) += g;
    });
}

void Tape::backward(Var out) {
    if (consumed_) throw Error("TapeConsumed", "tape already ran backward");
    require(rows(out) == 1 && cols(out) == 1, "backward: output must be 1x1");
    if (read_ && !write_) throw Error("ReadOnlyTape", "tape was built over read-only parameters");
    consumed_ = true;
    grad_of(nodes_, out.id)(0, 0) = 1.0;
    for (Index i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0) continue;
        if (n.back) n.back(nodes_, i);
        if (n.parameter >= 0) write_->grad(n.parameter) += n.grad;
    }
}

void Adam::step(ParameterStore& params) {
    if (m_.size() != static_cast<std::size_t>(params.size())) {
        m_.clear();
        v_.clear();
        for (Index i = 0; i < params.size(); ++i) {
            m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
            v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
        }
    }
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
        const double norm = params.grad_norm();
        if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }
    const double t = static_cast<double>(steps_ + 1);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);

    std::vector<Matrix> new_m(m_.size());
    std::vector<Matrix> new_v(v_.size());
    std::vector<Matrix> new_value(m_.size());
    for (Index i = 0; i < params.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Matrix g = scale * params.grad(i);
        new_m[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
        new_v[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseAbs2();
        const Matrix update =
            (config_.lr * (new_m[k] / c1).array() / ((new_v[k] / c2).array().sqrt() + config_.eps)).matrix();
        if (!update.allFinite()) {
            throw Error("NonFinite", "non-finite update for parameter " + params.name(i));
        }
        new_value[k] = params.value(i) - update;
    }
    for (Index i = 0; i < params.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        params.value(i) = std::move(new_value[k]);
        m_[k] = std::move(new_m[k]);
        v_[k] = std::move(new_v[k]);
    }
    ++steps_;
}

}  // namespace hyperforge::ad
