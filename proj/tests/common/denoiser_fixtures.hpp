// denoiser_fixtures.hpp - random denoiser inputs and consistent relabelings
#pragma once

#include <algorithm>
#include <vector>

#include "hyperforge/denoiser.hpp"
#include "hyperforge/expansion.hpp"
#include "test_support.hpp"

namespace hyperforge::testing {

inline Matrix gaussian(Rng& rng, Index rows, Index cols) {
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

// Parent graph with random budgets, plus a random expansion of it.
struct DenoiserCase {
    BipartiteGraph parent;
    DenoiserInput input;
};

inline BipartiteGraph with_random_budgets(Rng& rng, const BipartiteGraph& b) {
    std::uniform_int_distribution<Budget> budget(1, 6);
    std::vector<Budget> budgets(static_cast<std::size_t>(b.num_left()));
    for (auto& x : budgets) x = budget(rng);
    return BipartiteGraph(b.num_left(), b.num_right(), b.edges(), budgets, b.left_features(), b.right_features());
}

inline FlowState random_state(Rng& rng, const BipartiteGraph& expanded) {
    FlowState s;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    s.t = unit(rng) * 0.9;
    const Index nl = expanded.num_left();
    s[HeadKind::LeftExpansion] = gaussian(rng, nl, 1);
    s[HeadKind::RightExpansion] = gaussian(rng, expanded.num_right(), 1);
    s[HeadKind::EdgeKeep] = gaussian(rng, expanded.num_edges(), 1);
    s[HeadKind::BudgetSplit] = sample_prior(FlowHeadSpec::for_head(HeadKind::BudgetSplit), nl, 1,
                                            expanded.cluster_of_left(), rng);
    s[HeadKind::LeftFeature] = gaussian(rng, nl, expanded.left_feature_dim());
    s[HeadKind::RightFeature] = gaussian(rng, expanded.num_right(), expanded.right_feature_dim());
    return s;
}

inline DenoiserCase random_case(Rng& rng, const Hypergraph& h, Index spectral_k) {
    DenoiserCase c;
    c.parent = with_random_budgets(rng, star_expand(h));
    ExpansionVectors v;
    std::uniform_int_distribution<Index> two(1, 2);
    std::uniform_int_distribution<Index> three(1, 3);
    for (Index i = 0; i < c.parent.num_left(); ++i) v.left.push_back(two(rng));
    for (Index j = 0; j < c.parent.num_right(); ++j) v.right.push_back(three(rng));
    BipartiteGraph expanded = expand(c.parent, v);
    FlowState state = random_state(rng, expanded);
    std::uniform_real_distribution<double> unit(0.0, 0.5);
    c.input = make_denoiser_input(c.parent, std::move(expanded), std::move(state), 4 * h.num_nodes(), unit(rng),
                                  spectral_k, rng);
    return c;
}

// A relabeled copy of a case: parents and children permuted independently.
struct Relabeling {
    std::vector<Index> parent_left, parent_right;  // new position i holds old node order[i]
    std::vector<Index> child_left, child_right;
    std::vector<Index> edge;  // new edge position -> old edge position
};

inline DenoiserCase relabel_case(const DenoiserCase& c, const Relabeling& r, Index spectral_k) {
    DenoiserCase out;
    out.parent = relabel(c.parent, r.parent_left, r.parent_right);
    std::vector<Index> left_pos(r.parent_left.size());
    std::vector<Index> right_pos(r.parent_right.size());
    for (std::size_t i = 0; i < r.parent_left.size(); ++i) left_pos[static_cast<std::size_t>(r.parent_left[i])] = static_cast<Index>(i);
    for (std::size_t i = 0; i < r.parent_right.size(); ++i) right_pos[static_cast<std::size_t>(r.parent_right[i])] = static_cast<Index>(i);

    const BipartiteGraph& e = c.input.graph;
    const BipartiteGraph moved = relabel(e, r.child_left, r.child_right);
    std::vector<Index> cl;
    std::vector<Index> cr;
    for (Index x : moved.cluster_of_left()) cl.push_back(left_pos[static_cast<std::size_t>(x)]);
    for (Index x : moved.cluster_of_right()) cr.push_back(right_pos[static_cast<std::size_t>(x)]);
    BipartiteGraph graph(moved.num_left(), moved.num_right(), moved.edges(), moved.left_budgets(),
                         moved.left_features(), moved.right_features(), cl, cr);

    const FlowState& s = c.input.state;
    FlowState state;
    state.t = s.t;
    auto take_rows = [](const Matrix& m, const std::vector<Index>& order) {
        Matrix o(static_cast<Index>(order.size()), m.cols());
        for (std::size_t i = 0; i < order.size(); ++i) o.row(static_cast<Index>(i)) = m.row(order[i]);
        return o;
    };
    for (HeadKind h : {HeadKind::LeftExpansion, HeadKind::BudgetSplit, HeadKind::LeftFeature})
        state[h] = take_rows(s[h], r.child_left);
    for (HeadKind h : {HeadKind::RightExpansion, HeadKind::RightFeature}) state[h] = take_rows(s[h], r.child_right);
    state[HeadKind::EdgeKeep] = take_rows(s[HeadKind::EdgeKeep], r.edge);

    Rng unused(0);
    out.input = make_denoiser_input(out.parent, std::move(graph), std::move(state), c.input.target_size,
                                    c.input.rho_hat, spectral_k, unused);
    return out;
}

inline Relabeling random_relabeling(Rng& rng, const DenoiserCase& c) {
    Relabeling r;
    r.parent_left = random_permutation(rng, c.parent.num_left());
    r.parent_right = random_permutation(rng, c.parent.num_right());
    r.child_left = random_permutation(rng, c.input.graph.num_left());
    r.child_right = random_permutation(rng, c.input.graph.num_right());
    // Edges of the relabeled graph are sorted by new endpoints; map each back.
    std::vector<Index> left_pos(r.child_left.size());
    std::vector<Index> right_pos(r.child_right.size());
    for (std::size_t i = 0; i < r.child_left.size(); ++i) left_pos[static_cast<std::size_t>(r.child_left[i])] = static_cast<Index>(i);
    for (std::size_t i = 0; i < r.child_right.size(); ++i) right_pos[static_cast<std::size_t>(r.child_right[i])] = static_cast<Index>(i);
    std::vector<std::pair<BipartiteEdge, Index>> moved;
    const auto& edges = c.input.graph.edges();
    for (std::size_t k = 0; k < edges.size(); ++k)
        moved.push_back({{left_pos[static_cast<std::size_t>(edges[k].left)], right_pos[static_cast<std::size_t>(edges[k].right)]},
                         static_cast<Index>(k)});
    std::sort(moved.begin(), moved.end());
    for (const auto& [edge, old] : moved) r.edge.push_back(old);
    return r;
}

// Largest entrywise difference between the relabeled outputs and the
// correspondingly permuted original outputs.
inline double relabel_discrepancy(const FlowState& original, const FlowState& moved, const Relabeling& r) {
    double worst = 0.0;
    auto compare = [&](HeadKind h, const std::vector<Index>& order) {
        const Matrix& a = original[h];
        const Matrix& b = moved[h];
        for (std::size_t i = 0; i < order.size(); ++i)
            worst = std::max(worst, (b.row(static_cast<Index>(i)) - a.row(order[i])).cwiseAbs().maxCoeff());
    };
    for (HeadKind h : {HeadKind::LeftExpansion, HeadKind::BudgetSplit}) compare(h, r.child_left);
    compare(HeadKind::RightExpansion, r.child_right);
    compare(HeadKind::EdgeKeep, r.edge);
    if (original[HeadKind::LeftFeature].cols() > 0) compare(HeadKind::LeftFeature, r.child_left);
    if (original[HeadKind::RightFeature].cols() > 0) compare(HeadKind::RightFeature, r.child_right);
    return worst;
}

// Smallest gap between distinct-index eigenvalues among the first k + 1
// nonzero ones; a basis is only determined up to sign when this is large.
inline double spectral_gap(const BipartiteGraph& b, Index k) {
    const SpectralBasis basis = spectral_basis(b, std::min<Index>(k + 1, b.num_nodes()));
    double gap = 1.0;
    for (Index i = 0; i + 1 < basis.eigenvalues.size(); ++i) {
        if (basis.eigenvalues[i + 1] == 0.0) break;
        gap = std::min(gap, basis.eigenvalues[i + 1] - basis.eigenvalues[i]);
    }
    return gap;
}

}  // namespace hyperforge::testing
