// hypergraph.cpp - hypergraph / bipartite conversions
#include "hyperforge/hypergraph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace hyperforge {

namespace {

Matrix normalise_features(Matrix f, Index rows, const char* what) {
    if (f.size() == 0 && f.cols() == 0) {
        return Matrix(rows, 0);
    }
    if (f.rows() != rows) {
        throw Error("ShapeMismatch", std::string(what) + " has " + std::to_string(f.rows()) +
                                         " rows, expected " + std::to_string(rows));
    }
    if (!f.allFinite()) {
        throw Error("NonFinite", std::string(what) + " contains non-finite values");
    }
    return f;
}

void check_sibling_groups(const std::vector<Index>& cluster_of, Index count, Index max_group,
                          const char* side) {
    if (cluster_of.empty()) {
        return;
    }
    if (static_cast<Index>(cluster_of.size()) != count) {
        throw Error("ShapeMismatch", std::string("cluster_of_") + side + " has wrong length");
    }
    std::map<Index, Index> sizes;
    for (Index c : cluster_of) {
        if (c < 0) {
            throw Error("InvalidCluster", std::string("negative parent index on ") + side);
        }
        ++sizes[c];
    }
    for (const auto& [parent, size] : sizes) {
        if (size > max_group) {
            throw Error("InvalidCluster", std::string(side) + " sibling group of parent " +
                                              std::to_string(parent) + " has " +
                                              std::to_string(size) + " members");
        }
    }
}

}  // namespace

Hypergraph::Hypergraph(Index num_nodes, std::vector<std::vector<Index>> hyperedges,
                       Matrix node_features, Matrix hyperedge_features)
    : num_nodes_(num_nodes), hyperedges_(std::move(hyperedges)) {
    if (num_nodes_ < 0) {
        throw Error("InvalidHypergraph", "negative node count");
    }
    for (std::size_t e = 0; e < hyperedges_.size(); ++e) {
        auto& edge = hyperedges_[e];
        if (edge.empty()) {
            throw Error("EmptyHyperedge", "hyperedge " + std::to_string(e) + " is empty");
        }
        std::sort(edge.begin(), edge.end());
        if (std::adjacent_find(edge.begin(), edge.end()) != edge.end()) {
            throw Error("DuplicateNode", "hyperedge " + std::to_string(e) + " repeats a node");
        }
        if (edge.front() < 0 || edge.back() >= num_nodes_) {
            throw Error("NodeOutOfRange", "hyperedge " + std::to_string(e) + " references node outside [0, " +
                                              std::to_string(num_nodes_) + ")");
        }
    }
    node_features_ = normalise_features(std::move(node_features), num_nodes_, "node_features");
    hyperedge_features_ =
        normalise_features(std::move(hyperedge_features), num_hyperedges(), "hyperedge_features");
}

Index Hypergraph::num_incidences() const {
    Index total = 0;
    for (const auto& e : hyperedges_) total += static_cast<Index>(e.size());
    return total;
}

std::vector<Index> Hypergraph::node_degrees() const {
    std::vector<Index> deg(static_cast<std::size_t>(num_nodes_), 0);
    for (const auto& e : hyperedges_)
        for (Index v : e) ++deg[static_cast<std::size_t>(v)];
    return deg;
}

std::vector<Index> Hypergraph::hyperedge_sizes() const {
    std::vector<Index> sizes;
    sizes.reserve(hyperedges_.size());
    for (const auto& e : hyperedges_) sizes.push_back(static_cast<Index>(e.size()));
    return sizes;
}

BipartiteGraph::BipartiteGraph(Index num_left, Index num_right, std::vector<BipartiteEdge> edges,
                               std::vector<Budget> left_budgets, Matrix left_features,
                               Matrix right_features, std::vector<Index> cluster_of_left,
                               std::vector<Index> cluster_of_right)
    : num_left_(num_left),
      num_right_(num_right),
      edges_(std::move(edges)),
      left_budgets_(std::move(left_budgets)),
      cluster_of_left_(std::move(cluster_of_left)),
      cluster_of_right_(std::move(cluster_of_right)) {
    if (num_left_ < 0 || num_right_ < 0) {
        throw Error("InvalidBipartite", "negative side size");
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
        throw Error("DuplicateEdge", "bipartite graph contains a duplicate edge");
    }
    for (const auto& e : edges_) {
        if (e.left < 0 || e.left >= num_left_ || e.right < 0 || e.right >= num_right_) {
            throw Error("NodeOutOfRange", "edge (" + std::to_string(e.left) + "," +
                                              std::to_string(e.right) + ") out of range");
        }
    }
    if (left_budgets_.empty()) {
        left_budgets_.assign(static_cast<std::size_t>(num_left_), 1);
    }
    if (static_cast<Index>(left_budgets_.size()) != num_left_) {
        throw Error("ShapeMismatch", "left budget vector has wrong length");
    }
    for (Budget b : left_budgets_) {
        if (b < 1) throw Error("InvalidBudget", "left budgets must be >= 1");
    }
    left_features_ = normalise_features(std::move(left_features), num_left_, "left_features");
    right_features_ = normalise_features(std::move(right_features), num_right_, "right_features");
    check_sibling_groups(cluster_of_left_, num_left_, 2, "left");
    check_sibling_groups(cluster_of_right_, num_right_, 3, "right");
}

Budget BipartiteGraph::total_budget() const {
    return std::accumulate(left_budgets_.begin(), left_budgets_.end(), Budget{0});
}

std::vector<Index> BipartiteGraph::left_degrees() const {
    std::vector<Index> deg(static_cast<std::size_t>(num_left_), 0);
    for (const auto& e : edges_) ++deg[static_cast<std::size_t>(e.left)];
    return deg;
}

std::vector<Index> BipartiteGraph::right_degrees() const {
    std::vector<Index> deg(static_cast<std::size_t>(num_right_), 0);
    for (const auto& e : edges_) ++deg[static_cast<std::size_t>(e.right)];
    return deg;
}

std::vector<std::vector<Index>> BipartiteGraph::right_neighbourhoods() const {
    std::vector<std::vector<Index>> nb(static_cast<std::size_t>(num_right_));
    // edges_ is sorted by left first, so each list comes out sorted.
    for (const auto& e : edges_) nb[static_cast<std::size_t>(e.right)].push_back(e.left);
    return nb;
}

std::vector<std::vector<Index>> BipartiteGraph::left_neighbourhoods() const {
    std::vector<std::vector<Index>> nb(static_cast<std::size_t>(num_left_));
    for (const auto& e : edges_) nb[static_cast<std::size_t>(e.left)].push_back(e.right);
    return nb;
}

Index BipartiteGraph::find_edge(Index left, Index right) const {
    const BipartiteEdge key{left, right};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
    if (it == edges_.end() || *it != key) return -1;
    return static_cast<Index>(it - edges_.begin());
}

bool same_graph(const BipartiteGraph& a, const BipartiteGraph& b) {
    return a.num_left() == b.num_left() && a.num_right() == b.num_right() &&
           a.edges() == b.edges() && a.left_budgets() == b.left_budgets() &&
           a.left_features().rows() == b.left_features().rows() &&
           a.left_features().cols() == b.left_features().cols() &&
           a.right_features().rows() == b.right_features().rows() &&
           a.right_features().cols() == b.right_features().cols() &&
           a.left_features() == b.left_features() && a.right_features() == b.right_features();
}

std::vector<std::vector<std::pair<Index, double>>> CliqueExpansion::adjacency() const {
    std::vector<std::vector<std::pair<Index, double>>> adj(static_cast<std::size_t>(num_nodes));
    for (const auto& [uv, w] : weighted_edges) {
        adj[static_cast<std::size_t>(uv.first)].emplace_back(uv.second, w);
        adj[static_cast<std::size_t>(uv.second)].emplace_back(uv.first, w);
    }
    return adj;
}

std::vector<double> CliqueExpansion::weighted_degrees() const {
    std::vector<double> deg(static_cast<std::size_t>(num_nodes), 0.0);
    for (const auto& [uv, w] : weighted_edges) {
        deg[static_cast<std::size_t>(uv.first)] += w;
        deg[static_cast<std::size_t>(uv.second)] += w;
    }
    return deg;
}

BipartiteGraph star_expand(const Hypergraph& h) {
    std::vector<BipartiteEdge> edges;
    edges.reserve(static_cast<std::size_t>(h.num_incidences()));
    for (Index e = 0; e < h.num_hyperedges(); ++e)
        for (Index v : h.hyperedge(e)) edges.push_back({v, e});
    return BipartiteGraph(h.num_nodes(), h.num_hyperedges(), std::move(edges), {},
                          h.node_features(), h.hyperedge_features());
}

namespace {

void add_clique(std::map<std::pair<Index, Index>, double>& out, const std::vector<Index>& members) {
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            out[{std::min(members[i], members[j]), std::max(members[i], members[j])}] += 1.0;
}

}  // namespace

CliqueExpansion clique_expand(const Hypergraph& h) {
    CliqueExpansion c;
    c.num_nodes = h.num_nodes();
    for (const auto& e : h.hyperedges()) add_clique(c.weighted_edges, e);
    return c;
}

CliqueExpansion clique_expand(const BipartiteGraph& b) {
    CliqueExpansion c;
    c.num_nodes = b.num_left();
    for (const auto& nb : b.right_neighbourhoods()) add_clique(c.weighted_edges, nb);
    return c;
}

Hypergraph collapse_bipartite(const BipartiteGraph& b) {
    auto nb = b.right_neighbourhoods();
    for (std::size_t r = 0; r < nb.size(); ++r) {
        if (nb[r].empty()) {
            throw Error("EmptyHyperedge", "right node " + std::to_string(r) + " has no incident edges");
        }
    }
    return Hypergraph(b.num_left(), std::move(nb), b.left_features(), b.right_features());
}

BipartiteGraph minimal_bipartite(Budget total_budget, Index left_feature_dim, Index right_feature_dim) {
    return BipartiteGraph(1, 1, {{0, 0}}, {total_budget}, Matrix::Zero(1, left_feature_dim),
                          Matrix::Zero(1, right_feature_dim));
}

std::vector<std::vector<Index>> canonical_hyperedges(const Hypergraph& h) {
    auto edges = h.hyperedges();
    std::sort(edges.begin(), edges.end());
    return edges;
}

std::vector<Index> connected_components(const CliqueExpansion& c, Index* num_components) {
    std::vector<Index> label(static_cast<std::size_t>(c.num_nodes), -1);
    const auto adj = c.adjacency();
    Index next = 0;
    std::vector<Index> stack;
    for (Index s = 0; s < c.num_nodes; ++s) {
        if (label[static_cast<std::size_t>(s)] >= 0) continue;
        label[static_cast<std::size_t>(s)] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            Index u = stack.back();
            stack.pop_back();
            for (const auto& [v, w] : adj[static_cast<std::size_t>(u)]) {
                if (label[static_cast<std::size_t>(v)] < 0) {
                    label[static_cast<std::size_t>(v)] = next;
                    stack.push_back(v);
                }
            }
        }
        ++next;
    }
    if (num_components) *num_components = next;
    return label;
}

}  // namespace hyperforge
