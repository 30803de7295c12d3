// hypergraph.hpp - hypergraph and bipartite (star-expansion) data model
#pragma once

#include <compare>
#include <map>
#include <utility>
#include <vector>

#include "hyperforge/types.hpp"

namespace hyperforge {

// A hypergraph over nodes 0..num_nodes-1. Hyperedges are stored as sorted,
// duplicate-free node lists. Feature matrices always have one row per node /
// hyperedge; a zero column count means "no features".
class Hypergraph {
public:
    Hypergraph() = default;
    Hypergraph(Index num_nodes, std::vector<std::vector<Index>> hyperedges,
               Matrix node_features = {}, Matrix hyperedge_features = {});

    Index num_nodes() const { return num_nodes_; }
    Index num_hyperedges() const { return static_cast<Index>(hyperedges_.size()); }
    Index num_incidences() const;

    const std::vector<std::vector<Index>>& hyperedges() const { return hyperedges_; }
    const std::vector<Index>& hyperedge(Index e) const { return hyperedges_[static_cast<std::size_t>(e)]; }

    const Matrix& node_features() const { return node_features_; }
    const Matrix& hyperedge_features() const { return hyperedge_features_; }
    Index node_feature_dim() const { return node_features_.cols(); }
    Index hyperedge_feature_dim() const { return hyperedge_features_.cols(); }
    bool has_node_features() const { return node_features_.cols() > 0; }
    bool has_hyperedge_features() const { return hyperedge_features_.cols() > 0; }

    // Number of hyperedges each node belongs to.
    std::vector<Index> node_degrees() const;
    std::vector<Index> hyperedge_sizes() const;

private:
    Index num_nodes_ = 0;
    std::vector<std::vector<Index>> hyperedges_;
    Matrix node_features_;
    Matrix hyperedge_features_;
};

struct BipartiteEdge {
    Index left = 0;
    Index right = 0;

    friend auto operator<=>(const BipartiteEdge&, const BipartiteEdge&) = default;
};

// Bipartite graph with left nodes (hypergraph nodes / clusters) and right
// nodes (hyperedges). Edges are kept sorted by (left, right). Left budgets
// count how many original nodes each left node stands for.
//
// cluster_of_left / cluster_of_right, when non-empty, give the parent index
// each node was cloned from by an expansion; nodes sharing a parent are
// siblings. Left sibling groups hold 1 or 2 nodes, right groups 1 to 3.
class BipartiteGraph {
public:
    BipartiteGraph() = default;
    BipartiteGraph(Index num_left, Index num_right, std::vector<BipartiteEdge> edges,
                   std::vector<Budget> left_budgets = {}, Matrix left_features = {},
                   Matrix right_features = {}, std::vector<Index> cluster_of_left = {},
                   std::vector<Index> cluster_of_right = {});

    Index num_left() const { return num_left_; }
    Index num_right() const { return num_right_; }
    Index num_nodes() const { return num_left_ + num_right_; }
    Index num_edges() const { return static_cast<Index>(edges_.size()); }
    const std::vector<BipartiteEdge>& edges() const { return edges_; }

    const std::vector<Budget>& left_budgets() const { return left_budgets_; }
    Budget total_budget() const;

    const Matrix& left_features() const { return left_features_; }
    const Matrix& right_features() const { return right_features_; }
    Index left_feature_dim() const { return left_features_.cols(); }
    Index right_feature_dim() const { return right_features_.cols(); }

    const std::vector<Index>& cluster_of_left() const { return cluster_of_left_; }
    const std::vector<Index>& cluster_of_right() const { return cluster_of_right_; }
    bool has_clusters() const { return !cluster_of_left_.empty(); }

    std::vector<Index> left_degrees() const;
    std::vector<Index> right_degrees() const;
    // Sorted left neighbours of every right node.
    std::vector<std::vector<Index>> right_neighbourhoods() const;
    std::vector<std::vector<Index>> left_neighbourhoods() const;
    // Position of edge (l, r) in edges(), or -1.
    Index find_edge(Index left, Index right) const;

private:
    Index num_left_ = 0;
    Index num_right_ = 0;
    std::vector<BipartiteEdge> edges_;
    std::vector<Budget> left_budgets_;
    Matrix left_features_;
    Matrix right_features_;
    std::vector<Index> cluster_of_left_;
    std::vector<Index> cluster_of_right_;
};

// Topology, budgets and features are equal (sibling maps are ignored).
bool same_graph(const BipartiteGraph& a, const BipartiteGraph& b);

// Weighted clique expansion; keys satisfy first < second.
struct CliqueExpansion {
    Index num_nodes = 0;
    std::map<std::pair<Index, Index>, double> weighted_edges;

    std::vector<std::vector<std::pair<Index, double>>> adjacency() const;
    std::vector<double> weighted_degrees() const;
};

BipartiteGraph star_expand(const Hypergraph& h);
CliqueExpansion clique_expand(const Hypergraph& h);
// Clique expansion of the left side of a bipartite graph: left nodes sharing
// k right neighbours are joined with weight k.
CliqueExpansion clique_expand(const BipartiteGraph& b);
// Inverse of star_expand. Throws Error("EmptyHyperedge") for a right node
// without incident edges.
Hypergraph collapse_bipartite(const BipartiteGraph& b);

// ({0}, {0}, {(0,0)}) with the whole budget on the single left node and
// zero features of the requested widths.
BipartiteGraph minimal_bipartite(Budget total_budget, Index left_feature_dim,
                                 Index right_feature_dim);

// Hyperedges sorted lexicographically; used for isomorphism-free comparison
// of hypergraphs that share a node labelling.
std::vector<std::vector<Index>> canonical_hyperedges(const Hypergraph& h);

// Connected components of the clique expansion (one label per node).
std::vector<Index> connected_components(const CliqueExpansion& c, Index* num_components = nullptr);

}  // namespace hyperforge
