// denoiser.cpp - spectral embedding, attribute streams, edge-local layers, heads
#include "hyperforge/denoiser.hpp"

#include <cmath>
#include <map>
#include <string>

#include "hyperforge/expansion.hpp"

namespace hyperforge {

using ad::Tape;
using ad::Var;

void DenoiserConfig::validate() const {
    if (hidden_dim < 1 || num_layers < 1 || mlp_hidden < 1) {
        throw Error("InvalidConfig", "denoiser widths and depth must be positive");
    }
    if (spectral_k < 0) throw Error("InvalidConfig", "spectral_k must be >= 0");
    if (budget_encoding_dim < 2 || budget_encoding_dim % 2 != 0) {
        throw Error("InvalidConfig", "budget encoding dimension must be a positive even number");
    }
    if (!(budget_base_freq > 0.0)) throw Error("InvalidConfig", "budget base frequency must be positive");
    if (left_feature_dim < 0 || right_feature_dim < 0) throw Error("InvalidConfig", "feature dims must be >= 0");
}

Matrix budget_encoding(std::span<const Budget> budgets, Index dim, double base_freq) {
    if (dim < 2 || dim % 2 != 0) throw Error("InvalidArgument", "encoding dimension must be even");
    Matrix out(static_cast<Index>(budgets.size()), dim);
    for (std::size_t r = 0; r < budgets.size(); ++r) {
        if (budgets[r] < 1) throw Error("InvalidBudget", "budgets must be >= 1");
        const double b = static_cast<double>(budgets[r]);
        for (Index i = 0; i < dim / 2; ++i) {
            const double w = std::pow(base_freq, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
            out(static_cast<Index>(r), 2 * i) = std::sin(b * w);
            out(static_cast<Index>(r), 2 * i + 1) = std::cos(b * w);
        }
    }
    return out;
}

DenoiserInput make_denoiser_input(const BipartiteGraph& parent, BipartiteGraph expanded, FlowState state,
                                  Index target_size, double rho_hat, Index spectral_k, Rng& rng) {
    DenoiserInput in;
    if (spectral_k > 0) {
        in.parent_basis = spectral_basis(parent, spectral_k);
    } else {
        std::normal_distribution<double> normal;
        in.parent_basis.eigenvalues = Vector::Zero(kRandomEmbeddingDim);
        in.parent_basis.eigenvectors = Matrix(parent.num_nodes(), kRandomEmbeddingDim);
        for (Index i = 0; i < in.parent_basis.eigenvectors.size(); ++i) in.parent_basis.eigenvectors.data()[i] = normal(rng);
    }
    in.parent_left = parent.num_left();
    in.graph = std::move(expanded);
    in.state = std::move(state);
    in.target_size = target_size;
    in.rho_hat = rho_hat;
    return in;
}

std::vector<Index> replication_index(const DenoiserInput& in) {
    const auto& g = in.graph;
    std::vector<Index> index;
    index.reserve(static_cast<std::size_t>(g.num_nodes()));
    for (Index i = 0; i < g.num_left(); ++i)
        index.push_back(g.cluster_of_left().empty() ? i : g.cluster_of_left()[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < g.num_right(); ++j)
        index.push_back(in.parent_left +
                        (g.cluster_of_right().empty() ? j : g.cluster_of_right()[static_cast<std::size_t>(j)]));
    return index;
}

namespace {

constexpr Index kGlobalExtra = 2;  // t and rho_hat

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

std::vector<Index> group_sizes(const std::vector<Index>& cluster_of, Index count) {
    std::vector<Index> sizes(static_cast<std::size_t>(count), 1);
    if (cluster_of.empty()) return sizes;
    const auto groups = sibling_groups(cluster_of, count);
    for (const auto& g : groups)
        for (Index i : g) sizes[static_cast<std::size_t>(i)] = static_cast<Index>(g.size());
    return sizes;
}

Matrix column_of(const std::vector<Index>& values, double offset) {
    Matrix m(static_cast<Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Index>(i), 0) = static_cast<double>(values[i]) - offset;
    return m;
}

Matrix repeat_row(const Matrix& row, Index rows) { return row.replicate(rows, 1); }

// Dense ids for a cluster map; an empty map makes every row its own group.
std::vector<Index> group_ids(const std::vector<Index>& cluster_of, Index count, Index* num_groups) {
    std::vector<Index> ids(static_cast<std::size_t>(count));
    std::map<Index, Index> dense;
    for (Index i = 0; i < count; ++i) {
        const Index key = cluster_of.empty() ? i : cluster_of[static_cast<std::size_t>(i)];
        ids[static_cast<std::size_t>(i)] = dense.emplace(key, static_cast<Index>(dense.size())).first->second;
    }
    *num_groups = static_cast<Index>(dense.size());
    return ids;
}

// Sum over each row's group, handed back to every member.
Var pool(Tape& tape, Var x, const std::vector<Index>& ids, Index num_groups) {
    return tape.gather_rows(tape.scatter_add_rows(x, ids, num_groups), ids);
}

void require_rows(const Matrix& m, Index rows, Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw Error("ShapeMismatch", std::string(what) + " has shape " + std::to_string(m.rows()) + "x" +
                                         std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                         std::to_string(cols));
    }
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const Index h = config_.hidden_dim;
    const Index mh = config_.mlp_hidden;
    const Index global = kGlobalExtra + config_.budget_encoding_dim;
    const Index basis_cols = config_.spectral_k > 0 ? config_.spectral_k : kRandomEmbeddingDim;

    add_linear("signnet.phi1", 2, mh, rng);
    add_linear("signnet.phi2", mh, mh, rng);
    add_linear("signnet.rho1", basis_cols * mh, h, rng);
    add_linear("signnet.rho2", h, h, rng);

    add_linear("embed.left", 2 + 1 + config_.budget_encoding_dim + global, h, rng);
    add_linear("embed.right", 1 + 1 + global, h, rng);
    add_linear("embed.edge", 1 + global, h, rng);
    add_linear("embed.left_pos", h, h, rng);
    add_linear("embed.right_pos", h, h, rng);
    add_linear("embed.edge_pos", 2 * h, h, rng);
    if (config_.left_feature_dim > 0) {
        add_linear("embed.node_feature", config_.left_feature_dim, h, rng);
        add_linear("film.node_gamma", config_.left_feature_dim, h, rng, 0.1);
        add_linear("film.node_beta", config_.left_feature_dim, h, rng, 0.1);
    }
    if (config_.right_feature_dim > 0) {
        add_linear("embed.edge_feature", config_.right_feature_dim, h, rng);
        add_linear("film.edge_gamma", config_.right_feature_dim, h, rng, 0.1);
        add_linear("film.edge_beta", config_.right_feature_dim, h, rng, 0.1);
    }

    for (Index l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add_linear(p + "edge_in", 4 * h, h, rng);
        add_linear(p + "edge_left", h, h, rng);
        add_linear(p + "edge_right", h, h, rng);
        add_linear(p + "edge_out", h, h, rng, 0.5);
        add_linear(p + "to_left", h, h, rng, 0.5);
        add_linear(p + "to_right", h, h, rng, 0.5);
        add_linear(p + "left_in", 3 * h, h, rng);
        add_linear(p + "left_out", h, h, rng, 0.5);
        add_linear(p + "right_in", 3 * h, h, rng);
        add_linear(p + "right_out", h, h, rng, 0.5);
    }

    // Heads start close to "no expansion, keep every edge, even split,
    // copy the parent features".
    const double s = config_.head_init_scale;
    add_linear("head.left_expansion", h, 1, rng, s, 0.0);
    add_linear("head.budget_split", h, 1, rng, s, 0.0);
    add_linear("head.right_expansion", h, 1, rng, s, -1.0);
    add_linear("head.edge_keep", h, 1, rng, s, 1.0);
    if (config_.left_feature_dim > 0) add_linear("head.left_feature", h, config_.left_feature_dim, rng, s);
    if (config_.right_feature_dim > 0) add_linear("head.right_feature", h, config_.right_feature_dim, rng, s);
}

void Denoiser::add_linear(const std::string& name, Index in, Index out, Rng& rng, double scale, double bias) {
    params_.add(name + ".w", random_matrix(rng, in, out, scale / std::sqrt(static_cast<double>(in))));
    params_.add(name + ".b", Matrix::Constant(1, out, bias));
}

Var Denoiser::linear(Tape& tape, const std::string& name, Var x) const {
    return tape.add_row(tape.matmul(x, tape.param(name + ".w")), tape.param(name + ".b"));
}

Var Denoiser::spectral_embed(Tape& tape, const SpectralBasis& basis, const std::vector<Index>& replicate) const {
    const Index n = basis.eigenvectors.rows();
    const Index k = basis.eigenvectors.cols();
    const Index expected = config_.spectral_k > 0 ? config_.spectral_k : kRandomEmbeddingDim;
    if (k != expected || basis.eigenvalues.size() != k) {
        throw Error("ShapeMismatch", "spectral basis has " + std::to_string(k) + " columns, expected " +
                                         std::to_string(expected));
    }
    // One tall batch holding [u_i, lambda_i] for every eigenvector i.
    Matrix pos(n * k, 2);
    for (Index i = 0; i < k; ++i) {
        pos.block(i * n, 0, n, 1) = basis.eigenvectors.col(i);
        pos.block(i * n, 1, n, 1).setConstant(basis.eigenvalues[i]);
    }
    Matrix neg = pos;
    neg.col(0) *= -1.0;
    auto phi = [&](Var x) { return tape.silu(linear(tape, "signnet.phi2", tape.silu(linear(tape, "signnet.phi1", x)))); };
    const Var psi = tape.add(phi(tape.constant(std::move(pos))), phi(tape.constant(std::move(neg))));

    std::vector<Var> per_vector;
    per_vector.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (Index r = 0; r < n; ++r) rows[static_cast<std::size_t>(r)] = i * n + r;
        per_vector.push_back(tape.gather_rows(psi, std::move(rows)));
    }
    const Var joined = tape.concat_cols(per_vector);
    const Var embedded = linear(tape, "signnet.rho2", tape.silu(linear(tape, "signnet.rho1", joined)));
    return tape.gather_rows(embedded, replicate);
}

Matrix Denoiser::spectral_embedding(const SpectralBasis& basis, const std::vector<Index>& replicate) const {
    Tape tape(&params_);
    return tape.value(spectral_embed(tape, basis, replicate));
}

std::array<Var, kNumHeads> Denoiser::forward(Tape& tape, const DenoiserInput& in) const {
    const BipartiteGraph& g = in.graph;
    const Index nl = g.num_left();
    const Index nr = g.num_right();
    const Index ne = g.num_edges();
    const Index dl = config_.left_feature_dim;
    const Index dr = config_.right_feature_dim;
    if (g.left_feature_dim() != dl || g.right_feature_dim() != dr) {
        throw Error("ShapeMismatch", "graph feature widths do not match the denoiser config");
    }
    const FlowState& s = in.state;
    require_rows(s[HeadKind::LeftExpansion], nl, 1, "left expansion state");
    require_rows(s[HeadKind::BudgetSplit], nl, 1, "budget split state");
    require_rows(s[HeadKind::RightExpansion], nr, 1, "right expansion state");
    require_rows(s[HeadKind::EdgeKeep], ne, 1, "edge keep state");
    require_rows(s[HeadKind::LeftFeature], nl, dl, "left feature state");
    require_rows(s[HeadKind::RightFeature], nr, dr, "right feature state");
    if (in.target_size < 1) throw Error("InvalidArgument", "target size must be >= 1");

    // Global conditioning shared by every stream.
    Matrix global(1, kGlobalExtra + config_.budget_encoding_dim);
    global(0, 0) = s.t;
    global(0, 1) = in.rho_hat;
    const std::vector<Budget> target{static_cast<Budget>(in.target_size)};
    global.rightCols(config_.budget_encoding_dim) =
        budget_encoding(target, config_.budget_encoding_dim, config_.budget_base_freq);

    // Positional embeddings replicated from the parents.
    const Var pos = spectral_embed(tape, in.parent_basis, replication_index(in));
    std::vector<Index> left_rows(static_cast<std::size_t>(nl));
    std::vector<Index> right_rows(static_cast<std::size_t>(nr));
    for (Index i = 0; i < nl; ++i) left_rows[static_cast<std::size_t>(i)] = i;
    for (Index j = 0; j < nr; ++j) right_rows[static_cast<std::size_t>(j)] = nl + j;
    const Var pos_left = tape.gather_rows(pos, left_rows);
    const Var pos_right = tape.gather_rows(pos, right_rows);

    std::vector<Index> edge_left(static_cast<std::size_t>(ne));
    std::vector<Index> edge_right(static_cast<std::size_t>(ne));
    for (Index e = 0; e < ne; ++e) {
        edge_left[static_cast<std::size_t>(e)] = g.edges()[static_cast<std::size_t>(e)].left;
        edge_right[static_cast<std::size_t>(e)] = g.edges()[static_cast<std::size_t>(e)].right;
    }

    // Left stream: expansion and split state, sibling count, budget, global.
    Matrix left_attr(nl, 2 + 1 + config_.budget_encoding_dim + global.cols());
    left_attr.col(0) = s[HeadKind::LeftExpansion].col(0);
    left_attr.col(1) = s[HeadKind::BudgetSplit].col(0);
    left_attr.col(2) = column_of(group_sizes(g.cluster_of_left(), nl), 1.0).col(0);
    left_attr.middleCols(3, config_.budget_encoding_dim) =
        budget_encoding(g.left_budgets(), config_.budget_encoding_dim, config_.budget_base_freq);
    left_attr.rightCols(global.cols()) = repeat_row(global, nl);
    Var h_left = tape.add(linear(tape, "embed.left", tape.constant(std::move(left_attr))),
                          linear(tape, "embed.left_pos", pos_left));

    Matrix right_attr(nr, 2 + global.cols());
    right_attr.col(0) = s[HeadKind::RightExpansion].col(0);
    right_attr.col(1) = column_of(group_sizes(g.cluster_of_right(), nr), 1.0).col(0);
    right_attr.rightCols(global.cols()) = repeat_row(global, nr);
    Var h_right = tape.add(linear(tape, "embed.right", tape.constant(std::move(right_attr))),
                           linear(tape, "embed.right_pos", pos_right));

    Matrix edge_attr(ne, 1 + global.cols());
    edge_attr.col(0) = s[HeadKind::EdgeKeep].col(0);
    edge_attr.rightCols(global.cols()) = repeat_row(global, ne);
    const Var edge_pos = tape.concat_cols({tape.gather_rows(pos_left, edge_left), tape.gather_rows(pos_right, edge_right)});
    Var h_edge = tape.add(linear(tape, "embed.edge", tape.constant(std::move(edge_attr))),
                          linear(tape, "embed.edge_pos", edge_pos));

    // Feature streams, modulated by the parent features.
    if (dl > 0) {
        const Var parent = tape.constant(g.left_features());
        const Var x = linear(tape, "embed.node_feature", tape.constant(s[HeadKind::LeftFeature]));
        const Var gamma = linear(tape, "film.node_gamma", parent);
        const Var beta = linear(tape, "film.node_beta", parent);
        h_left = tape.add(h_left, tape.add(tape.add(x, tape.mul(gamma, x)), beta));
    }
    if (dr > 0) {
        const Var parent = tape.constant(g.right_features());
        const Var x = linear(tape, "embed.edge_feature", tape.constant(s[HeadKind::RightFeature]));
        const Var gamma = linear(tape, "film.edge_gamma", parent);
        const Var beta = linear(tape, "film.edge_beta", parent);
        h_right = tape.add(h_right, tape.add(tape.add(x, tape.mul(gamma, x)), beta));
    }

    // Sibling groups: children of one parent node, and edges descending from
    // one parent pair.
    Index left_groups = 0;
    Index right_groups = 0;
    Index edge_groups = 0;
    const auto left_ids = group_ids(g.cluster_of_left(), nl, &left_groups);
    const auto right_ids = group_ids(g.cluster_of_right(), nr, &right_groups);
    std::vector<Index> edge_keys(static_cast<std::size_t>(ne));
    for (Index e = 0; e < ne; ++e)
        edge_keys[static_cast<std::size_t>(e)] = left_ids[static_cast<std::size_t>(edge_left[static_cast<std::size_t>(e)])] * right_groups +
                                                 right_ids[static_cast<std::size_t>(edge_right[static_cast<std::size_t>(e)])];
    const auto edge_ids = group_ids(edge_keys, ne, &edge_groups);

    for (Index l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        const Var nl_state = tape.rms_norm_rows(h_left);
        const Var nr_state = tape.rms_norm_rows(h_right);
        const Var ne_state = tape.rms_norm_rows(h_edge);
        const Var at_left = tape.gather_rows(nl_state, edge_left);
        const Var at_right = tape.gather_rows(nr_state, edge_right);

        const Var edge_sib = pool(tape, ne_state, edge_ids, edge_groups);
        const Var mixed =
            tape.silu(linear(tape, p + "edge_in", tape.concat_cols({ne_state, at_left, at_right, edge_sib})));
        const Var product = tape.mul(linear(tape, p + "edge_left", at_left), linear(tape, p + "edge_right", at_right));
        const Var message = tape.add(mixed, product);
        h_edge = tape.add(h_edge, linear(tape, p + "edge_out", message));

        const Var to_left = tape.scatter_add_rows(linear(tape, p + "to_left", message), edge_left, nl);
        const Var to_right = tape.scatter_add_rows(linear(tape, p + "to_right", message), edge_right, nr);
        h_left = tape.add(h_left, linear(tape, p + "left_out",
                                         tape.silu(linear(tape, p + "left_in", tape.concat_cols({nl_state, to_left, pool(tape, nl_state, left_ids, left_groups)})))));
        h_right = tape.add(h_right, linear(tape, p + "right_out",
                                           tape.silu(linear(tape, p + "right_in", tape.concat_cols({nr_state, to_right, pool(tape, nr_state, right_ids, right_groups)})))));
    }

    const Var z_left = tape.rms_norm_rows(h_left);
    const Var z_right = tape.rms_norm_rows(h_right);
    const Var z_edge = tape.rms_norm_rows(h_edge);

    std::array<Var, kNumHeads> out;
    out[head_index(HeadKind::LeftExpansion)] = linear(tape, "head.left_expansion", z_left);
    out[head_index(HeadKind::BudgetSplit)] = linear(tape, "head.budget_split", z_left);
    out[head_index(HeadKind::RightExpansion)] = linear(tape, "head.right_expansion", z_right);
    out[head_index(HeadKind::EdgeKeep)] = linear(tape, "head.edge_keep", z_edge);
    out[head_index(HeadKind::LeftFeature)] =
        dl > 0 ? tape.add(tape.constant(g.left_features()), linear(tape, "head.left_feature", z_left))
               : tape.constant(Matrix(nl, 0));
    out[head_index(HeadKind::RightFeature)] =
        dr > 0 ? tape.add(tape.constant(g.right_features()), linear(tape, "head.right_feature", z_right))
               : tape.constant(Matrix(nr, 0));
    return out;
}

FlowState Denoiser::predict(const DenoiserInput& in) const {
    Tape tape(&params_);
    const auto vars = forward(tape, in);
    FlowState out;
    out.t = in.state.t;
    for (std::size_t h = 0; h < kNumHeads; ++h) out.heads[h] = tape.value(vars[h]);
    return out;
}

}  // namespace hyperforge
