// expansion.cpp - expansion, perturbed expansion, budget splitting, refinement
#include "hyperforge/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

namespace hyperforge {

ExpansionVectors ExpansionVectors::ones(const BipartiteGraph& b) {
    return {std::vector<Index>(static_cast<std::size_t>(b.num_left()), 1),
            std::vector<Index>(static_cast<std::size_t>(b.num_right()), 1)};
}

Index ExpansionVectors::expanded_left() const {
    return std::accumulate(left.begin(), left.end(), Index{0});
}

Index ExpansionVectors::expanded_right() const {
    return std::accumulate(right.begin(), right.end(), Index{0});
}

namespace {

struct ChildLayout {
    std::vector<Index> first;      // first child of each parent
    std::vector<Index> parent_of;  // parent of each child
};

ChildLayout layout_children(const std::vector<Index>& sizes, Index max_size, const char* side) {
    ChildLayout out;
    out.first.reserve(sizes.size());
    Index next = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
        if (sizes[p] < 1 || sizes[p] > max_size) {
            throw Error("InvalidExpansion", std::string(side) + " expansion size " + std::to_string(sizes[p]) +
                                                " outside [1, " + std::to_string(max_size) + "]");
        }
        out.first.push_back(next);
        for (Index i = 0; i < sizes[p]; ++i) out.parent_of.push_back(static_cast<Index>(p));
        next += sizes[p];
    }
    return out;
}

Matrix replicate_rows(const Matrix& m, const std::vector<Index>& parent_of) {
    Matrix out(static_cast<Index>(parent_of.size()), m.cols());
    for (std::size_t i = 0; i < parent_of.size(); ++i) out.row(static_cast<Index>(i)) = m.row(parent_of[i]);
    return out;
}

}  // namespace

BipartiteGraph expand(const BipartiteGraph& b, const ExpansionVectors& v) {
    if (static_cast<Index>(v.left.size()) != b.num_left() || static_cast<Index>(v.right.size()) != b.num_right()) {
        throw Error("ShapeMismatch", "expansion vectors do not match the graph sides");
    }
    const auto left = layout_children(v.left, 2, "left");
    const auto right = layout_children(v.right, 3, "right");

    std::vector<BipartiteEdge> edges;
    for (const auto& e : b.edges()) {
        for (Index i = 0; i < v.left[static_cast<std::size_t>(e.left)]; ++i)
            for (Index j = 0; j < v.right[static_cast<std::size_t>(e.right)]; ++j)
                edges.push_back({left.first[static_cast<std::size_t>(e.left)] + i,
                                 right.first[static_cast<std::size_t>(e.right)] + j});
    }
    std::vector<Budget> budgets;
    budgets.reserve(left.parent_of.size());
    for (Index p : left.parent_of) budgets.push_back(b.left_budgets()[static_cast<std::size_t>(p)]);

    return BipartiteGraph(static_cast<Index>(left.parent_of.size()), static_cast<Index>(right.parent_of.size()),
                          std::move(edges), std::move(budgets), replicate_rows(b.left_features(), left.parent_of),
                          replicate_rows(b.right_features(), right.parent_of), left.parent_of, right.parent_of);
}

std::vector<Index> left_to_right_distances(const BipartiteGraph& b, Index left, Index max_distance) {
    const auto lnb = b.left_neighbourhoods();
    const auto rnb = b.right_neighbourhoods();
    std::vector<Index> dist_left(static_cast<std::size_t>(b.num_left()), -1);
    std::vector<Index> dist_right(static_cast<std::size_t>(b.num_right()), -1);
    // Nodes are encoded as (side, index); side 0 = left.
    std::deque<std::pair<int, Index>> queue;
    dist_left[static_cast<std::size_t>(left)] = 0;
    queue.emplace_back(0, left);
    while (!queue.empty()) {
        auto [side, u] = queue.front();
        queue.pop_front();
        const Index d = side == 0 ? dist_left[static_cast<std::size_t>(u)] : dist_right[static_cast<std::size_t>(u)];
        if (d >= max_distance) continue;
        if (side == 0) {
            for (Index r : lnb[static_cast<std::size_t>(u)]) {
                if (dist_right[static_cast<std::size_t>(r)] < 0) {
                    dist_right[static_cast<std::size_t>(r)] = d + 1;
                    queue.emplace_back(1, r);
                }
            }
        } else {
            for (Index l : rnb[static_cast<std::size_t>(u)]) {
                if (dist_left[static_cast<std::size_t>(l)] < 0) {
                    dist_left[static_cast<std::size_t>(l)] = d + 1;
                    queue.emplace_back(0, l);
                }
            }
        }
    }
    return dist_right;
}

BipartiteGraph perturb_expand(const BipartiteGraph& b, const ExpansionVectors& v, Index radius, double p,
                              Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("InvalidArgument", "perturbation probability outside [0, 1]");
    if (radius < 0) throw Error("InvalidArgument", "negative perturbation radius");
    BipartiteGraph expanded = expand(b, v);
    if (p == 0.0) return expanded;

    const Index reach = 2 * radius + 1;
    const auto left_groups = sibling_groups(expanded.cluster_of_left(), b.num_left());
    const auto right_groups = sibling_groups(expanded.cluster_of_right(), b.num_right());
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<BipartiteEdge> edges = expanded.edges();
    for (Index pl = 0; pl < b.num_left(); ++pl) {
        const auto dist = left_to_right_distances(b, pl, reach);
        for (Index pr = 0; pr < b.num_right(); ++pr) {
            const Index d = dist[static_cast<std::size_t>(pr)];
            if (d < 0 || d > reach) continue;
            for (Index cl : left_groups[static_cast<std::size_t>(pl)]) {
                for (Index cr : right_groups[static_cast<std::size_t>(pr)]) {
                    if (d == 1) continue;  // already joined by the clone step
                    if (uniform(rng) < p) edges.push_back({cl, cr});
                }
            }
        }
    }
    return BipartiteGraph(expanded.num_left(), expanded.num_right(), std::move(edges), expanded.left_budgets(),
                          expanded.left_features(), expanded.right_features(), expanded.cluster_of_left(),
                          expanded.cluster_of_right());
}

std::vector<Budget> split_budget(Budget parent, std::span<const double> fractions) {
    const auto size = static_cast<Budget>(fractions.size());
    if (size == 0) throw Error("InvalidSplit", "empty sibling group");
    if (parent < size) {
        throw Error("InsufficientBudget", "budget " + std::to_string(parent) + " cannot give " +
                                              std::to_string(size) + " children at least 1 each");
    }
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= -1e-12 && f <= 1.0 + 1e-12)) throw Error("InvalidSplit", "split fraction outside [0, 1]");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("InvalidSplit", "split fractions do not sum to 1");

    std::vector<Budget> out;
    out.reserve(fractions.size());
    Budget sum = 0;
    for (double f : fractions) {
        const Budget b = std::max<Budget>(1, std::llround(static_cast<double>(parent) * f));
        out.push_back(b);
        sum += b;
    }
    for (std::size_t i = 0; sum < parent; i = (i + 1) % out.size()) {
        ++out[i];
        ++sum;
    }
    for (std::size_t i = out.size() - 1; sum > parent; i = (i == 0 ? out.size() - 1 : i - 1)) {
        if (out[i] > 1) {
            --out[i];
            --sum;
        }
    }
    return out;
}

std::vector<std::vector<Index>> sibling_groups(const std::vector<Index>& cluster_of, Index count) {
    if (cluster_of.empty()) {
        std::vector<std::vector<Index>> groups(static_cast<std::size_t>(count));
        for (Index i = 0; i < count; ++i) groups[static_cast<std::size_t>(i)] = {i};
        return groups;
    }
    Index parents = 0;
    for (Index c : cluster_of) parents = std::max(parents, c + 1);
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(std::max(parents, count)));
    for (std::size_t i = 0; i < cluster_of.size(); ++i)
        groups[static_cast<std::size_t>(cluster_of[i])].push_back(static_cast<Index>(i));
    while (!groups.empty() && groups.back().empty()) groups.pop_back();
    return groups;
}

std::vector<Budget> split_budgets(const BipartiteGraph& expanded, const Vector& fractions) {
    if (fractions.size() != expanded.num_left()) throw Error("ShapeMismatch", "budget split has wrong length");
    std::vector<Budget> out(expanded.left_budgets());
    for (const auto& group : sibling_groups(expanded.cluster_of_left(), expanded.num_left())) {
        if (group.empty()) continue;
        std::vector<double> f;
        for (Index i : group) f.push_back(fractions[i]);
        const Budget parent = expanded.left_budgets()[static_cast<std::size_t>(group.front())];
        const auto child = split_budget(parent, f);
        for (std::size_t i = 0; i < group.size(); ++i) out[static_cast<std::size_t>(group[i])] = child[i];
    }
    return out;
}

BipartiteGraph refine(const BipartiteGraph& expanded, const RefinementDecision& d) {
    if (static_cast<Index>(d.edge_keep.size()) != expanded.num_edges()) {
        throw Error("ShapeMismatch", "edge_keep has " + std::to_string(d.edge_keep.size()) + " entries, expected " +
                                         std::to_string(expanded.num_edges()));
    }
    auto check = [](const Matrix& m, Index rows, Index cols, const char* what) {
        if (m.rows() != rows || m.cols() != cols) {
            throw Error("ShapeMismatch", std::string(what) + " has shape " + std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                             std::to_string(cols));
        }
    };
    const Matrix left = d.left_features.size() == 0 && d.left_features.cols() == 0
                            ? Matrix(expanded.num_left(), 0)
                            : d.left_features;
    const Matrix right = d.right_features.size() == 0 && d.right_features.cols() == 0
                             ? Matrix(expanded.num_right(), 0)
                             : d.right_features;
    check(left, expanded.num_left(), expanded.left_feature_dim(), "left refinement features");
    check(right, expanded.num_right(), expanded.right_feature_dim(), "right refinement features");

    std::vector<BipartiteEdge> kept;
    for (std::size_t i = 0; i < d.edge_keep.size(); ++i)
        if (d.edge_keep[i]) kept.push_back(expanded.edges()[i]);

    return BipartiteGraph(expanded.num_left(), expanded.num_right(), std::move(kept),
                          split_budgets(expanded, d.budget_split), left, right, expanded.cluster_of_left(),
                          expanded.cluster_of_right());
}

std::vector<Index> isolated_left_nodes(const BipartiteGraph& b) {
    std::vector<Index> out;
    const auto deg = b.left_degrees();
    for (std::size_t i = 0; i < deg.size(); ++i)
        if (deg[i] == 0) out.push_back(static_cast<Index>(i));
    return out;
}

BipartiteGraph relabel(const BipartiteGraph& b, const std::vector<Index>& left_order,
                       const std::vector<Index>& right_order) {
    if (static_cast<Index>(left_order.size()) != b.num_left() ||
        static_cast<Index>(right_order.size()) != b.num_right()) {
        throw Error("ShapeMismatch", "relabel order has wrong length");
    }
    std::vector<Index> left_pos(left_order.size());
    std::vector<Index> right_pos(right_order.size());
    for (std::size_t i = 0; i < left_order.size(); ++i) left_pos[static_cast<std::size_t>(left_order[i])] = static_cast<Index>(i);
    for (std::size_t i = 0; i < right_order.size(); ++i) right_pos[static_cast<std::size_t>(right_order[i])] = static_cast<Index>(i);

    std::vector<BipartiteEdge> edges;
    edges.reserve(b.edges().size());
    for (const auto& e : b.edges())
        edges.push_back({left_pos[static_cast<std::size_t>(e.left)], right_pos[static_cast<std::size_t>(e.right)]});
    std::vector<Budget> budgets;
    Matrix lf(b.num_left(), b.left_feature_dim());
    Matrix rf(b.num_right(), b.right_feature_dim());
    for (std::size_t i = 0; i < left_order.size(); ++i) {
        budgets.push_back(b.left_budgets()[static_cast<std::size_t>(left_order[i])]);
        lf.row(static_cast<Index>(i)) = b.left_features().row(left_order[i]);
    }
    for (std::size_t i = 0; i < right_order.size(); ++i) rf.row(static_cast<Index>(i)) = b.right_features().row(right_order[i]);

    std::vector<Index> cl;
    std::vector<Index> cr;
    if (!b.cluster_of_left().empty())
        for (Index o : left_order) cl.push_back(b.cluster_of_left()[static_cast<std::size_t>(o)]);
    if (!b.cluster_of_right().empty())
        for (Index o : right_order) cr.push_back(b.cluster_of_right()[static_cast<std::size_t>(o)]);
    return BipartiteGraph(b.num_left(), b.num_right(), std::move(edges), std::move(budgets), std::move(lf),
                          std::move(rf), std::move(cl), std::move(cr));
}

}  // namespace hyperforge
