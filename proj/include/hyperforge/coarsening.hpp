// coarsening.hpp - randomized budgeted coarsening sequences and a level cache
#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <vector>

#include "hyperforge/expansion.hpp"
#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

struct CoarseningParams {
    double rho_min = 0.1;
    double rho_max = 0.3;
    double lambda = 0.3;  // a candidate is considered only when uniform() > lambda
    Index preserve_k = 8;
    Index small_graph_cutoff = 16;

    void validate() const;
};

// Local variation cost of contracting single edges of a weighted clique
// expansion. The spectral basis of the combinatorial Laplacian is computed
// once at construction; each query is then O(k^2).
class LocalVariationCost {
public:
    LocalVariationCost(const CliqueExpansion& c, Index preserve_k);

    // Throws Error("NotAdjacent") when (u, v) is not an edge.
    double operator()(Index u, Index v) const;

private:
    const CliqueExpansion* graph_;
    std::vector<double> degree_;
    Matrix basis_;  // rows = nodes, columns = U_k * Lambda_k^-1/2
};

double local_variation_cost(const CliqueExpansion& c, Index u, Index v, Index preserve_k);

// A contraction or deduplication: the coarse graph and, for every node of the
// input side that was merged, the index of the node it went into.
struct MergeResult {
    BipartiteGraph graph;
    std::vector<Index> mapping;
    std::vector<Budget> right_budgets;  // only set by dedup_right
};

// Each part becomes one left node; members not listed stay singletons. Coarse
// nodes are ordered by their smallest member. Budgets add up and features
// become budget-weighted means. Throws Error("OverlappingParts") or
// Error("DisconnectedPart").
MergeResult merge_left(const BipartiteGraph& b, const std::vector<std::vector<Index>>& parts,
                       bool require_connected = true);

// Merges right nodes with identical left neighbourhoods. right_budgets may be
// empty (all ones); merged features are right-budget-weighted means.
MergeResult dedup_right(const BipartiteGraph& b, const std::vector<Budget>& right_budgets = {});

struct CoarseningLevel {
    BipartiteGraph bipartite;
    // Cluster sizes mapping this level onto the next-finer one; all ones and
    // an empty refinement at level 0.
    ExpansionVectors expansion;
    RefinementDecision refinement;
};

// levels[0] is the input (nodes reordered, see node_order) and levels.back()
// has a single left node. The numbering of every level is parent-major with
// respect to the next-coarser level, so expand() of level l lines up
// index-for-index with level l - 1.
struct CoarseningSequence {
    std::vector<CoarseningLevel> levels;
    Index source_graph_id = -1;
    std::vector<Index> node_order;       // level-0 left position i is input node node_order[i]
    std::vector<Index> hyperedge_order;  // same for right positions

    Index num_levels() const { return static_cast<Index>(levels.size()); }
    const CoarseningLevel& level(Index l) const { return levels.at(static_cast<std::size_t>(l)); }

    // Replays the stored targets from the coarsest level down to level l.
    BipartiteGraph reconstruct(Index l) const;
    // Input graph relabelled into level-0 order.
    static BipartiteGraph reorder(const Hypergraph& h, const CoarseningSequence& s);
};

CoarseningSequence sample_coarsening_sequence(const Hypergraph& h, const CoarseningParams& params, Rng& rng,
                                              Index source_graph_id = -1);

struct CachedLevel {
    std::shared_ptr<const CoarseningSequence> sequence;
    Index level = 0;

    const CoarseningLevel& get() const { return sequence->level(level); }
};

// Hands out the levels of one sampled sequence per graph in random order,
// each at most once, and samples a fresh sequence when a graph runs out.
// Takes on different graphs do not contend.
class CoarseningCache {
public:
    explicit CoarseningCache(CoarseningParams params);

    Index add_graph(Hypergraph h);
    Index num_graphs() const { return static_cast<Index>(entries_.size()); }
    const Hypergraph& graph(Index graph_id) const;
    // Throws Error("UnknownGraph").
    CachedLevel take(Index graph_id, Rng& rng);
    // Number of sequences sampled so far for a graph.
    Index generations(Index graph_id) const;

private:
    struct Entry {
        Hypergraph graph;
        std::shared_ptr<const CoarseningSequence> sequence;
        std::vector<Index> remaining;
        Index generations = 0;
        std::unique_ptr<std::mutex> mutex;
    };
    Entry& entry(Index graph_id);
    const Entry& entry(Index graph_id) const;

    CoarseningParams params_;
    std::deque<Entry> entries_;
};

}  // namespace hyperforge
