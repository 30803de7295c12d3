// expansion.hpp - clone-and-rewire expansion, perturbation and refinement
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

// Number of children per node: 1 or 2 on the left, 1 to 3 on the right.
struct ExpansionVectors {
    std::vector<Index> left;
    std::vector<Index> right;

    static ExpansionVectors ones(const BipartiteGraph& b);
    Index expanded_left() const;
    Index expanded_right() const;
};

struct RefinementDecision {
    std::vector<std::uint8_t> edge_keep;  // one entry per expanded edge, in edge order
    Vector budget_split;                  // per expanded left node; sums to 1 in each sibling group
    Matrix left_features;
    Matrix right_features;
};

// Children are numbered parent-major: the children of parent 0 come first.
// Every child inherits its parent's budget, features and incident edges; the
// expanded edge set is every child pair of a parent edge.
BipartiteGraph expand(const BipartiteGraph& b, const ExpansionVectors& v);

// expand() plus, for every left/right child pair whose parents are within
// distance 2 * radius + 1 in b and are not yet joined, an edge drawn with
// probability p.
BipartiteGraph perturb_expand(const BipartiteGraph& b, const ExpansionVectors& v, Index radius,
                              double p, Rng& rng);

// Integer split of one parent budget. Children get round(parent * f); the
// rounding residue is settled by adding from the lowest index or removing
// from the highest index, so on ties the lowest index keeps the larger
// share. Each child keeps at least 1.
std::vector<Budget> split_budget(Budget parent, std::span<const double> fractions);

// split_budget applied to every left sibling group of an expanded graph.
std::vector<Budget> split_budgets(const BipartiteGraph& expanded, const Vector& fractions);

// Keeps the selected edges, splits budgets and replaces the features.
BipartiteGraph refine(const BipartiteGraph& expanded, const RefinementDecision& d);

// Left nodes without incident edges.
std::vector<Index> isolated_left_nodes(const BipartiteGraph& b);

// Sibling groups (members in ascending order) derived from a cluster map;
// an empty map yields singletons.
std::vector<std::vector<Index>> sibling_groups(const std::vector<Index>& cluster_of, Index count);

// Node at new position i is old node order[i] (on each side).
BipartiteGraph relabel(const BipartiteGraph& b, const std::vector<Index>& left_order,
                       const std::vector<Index>& right_order);

// Shortest-path distances in b from a left node to every right node
// (-1 when unreachable), capped at max_distance.
std::vector<Index> left_to_right_distances(const BipartiteGraph& b, Index left, Index max_distance);

}  // namespace hyperforge
