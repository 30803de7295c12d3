// coarsening.cpp - local variation cost, contraction, sequence sampling, cache
#include "hyperforge/coarsening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include <Eigen/Eigenvalues>

namespace hyperforge {

void CoarseningParams::validate() const {
    if (!(rho_min > 0.0 && rho_min <= rho_max && rho_max < 1.0)) {
        throw Error("InvalidConfig", "coarsening requires 0 < rho_min <= rho_max < 1");
    }
    if (!(lambda >= 0.0 && lambda < 1.0)) throw Error("InvalidConfig", "coarsening lambda must lie in [0, 1)");
    if (preserve_k < 1) throw Error("InvalidConfig", "preserve_k must be >= 1");
    if (small_graph_cutoff < 0) throw Error("InvalidConfig", "small_graph_cutoff must be >= 0");
}

LocalVariationCost::LocalVariationCost(const CliqueExpansion& c, Index preserve_k)
    : graph_(&c), degree_(c.weighted_degrees()) {
    const Index n = c.num_nodes;
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [uv, w] : c.weighted_edges) {
        lap(uv.first, uv.second) -= w;
        lap(uv.second, uv.first) -= w;
        lap(uv.first, uv.first) += w;
        lap(uv.second, uv.second) += w;
    }
    if (n == 0) {
        basis_ = Matrix(0, 0);
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    const Vector& evals = solver.eigenvalues();
    Index k = std::min(preserve_k, n);
    // Take the whole eigenspace straddling the cut so the cost does not depend
    // on how the solver chose a basis inside it.
    while (k < n && evals[k] - evals[k - 1] <= 1e-8 * std::max(1.0, std::abs(evals[k]))) ++k;
    basis_ = Matrix::Zero(n, k);
    for (Index i = 0; i < k; ++i) {
        if (evals[i] > 1e-10) basis_.col(i) = solver.eigenvectors().col(i) / std::sqrt(evals[i]);
    }
}

double LocalVariationCost::operator()(Index u, Index v) const {
    const auto key = std::make_pair(std::min(u, v), std::max(u, v));
    auto it = graph_->weighted_edges.find(key);
    if (u == v || it == graph_->weighted_edges.end()) {
        throw Error("NotAdjacent", "nodes " + std::to_string(u) + " and " + std::to_string(v) + " are not adjacent");
    }
    const double w = it->second;
    Eigen::Matrix2d lap_e;
    lap_e << degree_[static_cast<std::size_t>(u)] + w, -w, -w, degree_[static_cast<std::size_t>(v)] + w;
    Eigen::MatrixXd rows(2, basis_.cols());
    rows.row(0) = basis_.row(u);
    rows.row(1) = basis_.row(v);
    const Eigen::Matrix2d proj = Eigen::Matrix2d::Identity() - Eigen::Matrix2d::Constant(0.5);
    const Eigen::MatrixXd b = proj * rows;
    return (b.transpose() * lap_e * b).norm();
}

double local_variation_cost(const CliqueExpansion& c, Index u, Index v, Index preserve_k) {
    return LocalVariationCost(c, preserve_k)(u, v);
}

MergeResult merge_left(const BipartiteGraph& b, const std::vector<std::vector<Index>>& parts,
                       bool require_connected) {
    const Index n = b.num_left();
    std::vector<Index> part_of(static_cast<std::size_t>(n), -1);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (Index v : parts[p]) {
            if (v < 0 || v >= n) throw Error("NodeOutOfRange", "part member " + std::to_string(v) + " out of range");
            if (part_of[static_cast<std::size_t>(v)] >= 0) {
                throw Error("OverlappingParts", "node " + std::to_string(v) + " appears in more than one part");
            }
            part_of[static_cast<std::size_t>(v)] = static_cast<Index>(p);
        }
    }

    if (require_connected) {
        const auto lnb = b.left_neighbourhoods();
        const auto rnb = b.right_neighbourhoods();
        for (std::size_t p = 0; p < parts.size(); ++p) {
            if (parts[p].size() < 2) continue;
            std::vector<Index> stack{parts[p].front()};
            std::vector<char> seen(static_cast<std::size_t>(n), 0);
            seen[static_cast<std::size_t>(parts[p].front())] = 1;
            std::size_t reached = 1;
            while (!stack.empty()) {
                const Index u = stack.back();
                stack.pop_back();
                for (Index r : lnb[static_cast<std::size_t>(u)]) {
                    for (Index w : rnb[static_cast<std::size_t>(r)]) {
                        if (!seen[static_cast<std::size_t>(w)] && part_of[static_cast<std::size_t>(w)] == static_cast<Index>(p)) {
                            seen[static_cast<std::size_t>(w)] = 1;
                            ++reached;
                            stack.push_back(w);
                        }
                    }
                }
            }
            if (reached != parts[p].size()) {
                throw Error("DisconnectedPart", "part " + std::to_string(p) + " is not connected");
            }
        }
    }

    std::vector<std::vector<Index>> groups;
    for (const auto& part : parts) {
        if (part.empty()) continue;
        auto sorted = part;
        std::sort(sorted.begin(), sorted.end());
        groups.push_back(std::move(sorted));
    }
    for (Index v = 0; v < n; ++v)
        if (part_of[static_cast<std::size_t>(v)] < 0) groups.push_back({v});
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& c) { return a.front() < c.front(); });

    MergeResult out;
    out.mapping.assign(static_cast<std::size_t>(n), -1);
    const Index coarse = static_cast<Index>(groups.size());
    std::vector<Budget> budgets(static_cast<std::size_t>(coarse), 0);
    Matrix features = Matrix::Zero(coarse, b.left_feature_dim());
    for (Index g = 0; g < coarse; ++g) {
        for (Index v : groups[static_cast<std::size_t>(g)]) {
            out.mapping[static_cast<std::size_t>(v)] = g;
            const Budget bv = b.left_budgets()[static_cast<std::size_t>(v)];
            budgets[static_cast<std::size_t>(g)] += bv;
            features.row(g) += static_cast<double>(bv) * b.left_features().row(v);
        }
        features.row(g) /= static_cast<double>(budgets[static_cast<std::size_t>(g)]);
    }
    std::vector<BipartiteEdge> edges;
    edges.reserve(b.edges().size());
    for (const auto& e : b.edges()) edges.push_back({out.mapping[static_cast<std::size_t>(e.left)], e.right});
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    out.graph = BipartiteGraph(coarse, b.num_right(), std::move(edges), std::move(budgets), std::move(features),
                               b.right_features());
    return out;
}

MergeResult dedup_right(const BipartiteGraph& b, const std::vector<Budget>& right_budgets) {
    std::vector<Budget> rb = right_budgets;
    if (rb.empty()) rb.assign(static_cast<std::size_t>(b.num_right()), 1);
    if (static_cast<Index>(rb.size()) != b.num_right()) throw Error("ShapeMismatch", "right budgets have wrong length");

    const auto nb = b.right_neighbourhoods();
    std::map<std::vector<Index>, std::vector<Index>> by_neighbourhood;
    for (Index r = 0; r < b.num_right(); ++r) by_neighbourhood[nb[static_cast<std::size_t>(r)]].push_back(r);
    std::vector<const std::vector<Index>*> groups;
    for (const auto& [hood, members] : by_neighbourhood) groups.push_back(&members);
    std::sort(groups.begin(), groups.end(), [](const auto* a, const auto* c) { return a->front() < c->front(); });

    MergeResult out;
    out.mapping.assign(static_cast<std::size_t>(b.num_right()), -1);
    const Index coarse = static_cast<Index>(groups.size());
    out.right_budgets.assign(static_cast<std::size_t>(coarse), 0);
    Matrix features = Matrix::Zero(coarse, b.right_feature_dim());
    std::vector<BipartiteEdge> edges;
    for (Index g = 0; g < coarse; ++g) {
        const auto& members = *groups[static_cast<std::size_t>(g)];
        for (Index r : members) {
            out.mapping[static_cast<std::size_t>(r)] = g;
            const Budget br = rb[static_cast<std::size_t>(r)];
            out.right_budgets[static_cast<std::size_t>(g)] += br;
            features.row(g) += static_cast<double>(br) * b.right_features().row(r);
        }
        features.row(g) /= static_cast<double>(out.right_budgets[static_cast<std::size_t>(g)]);
        for (Index l : nb[static_cast<std::size_t>(members.front())]) edges.push_back({l, g});
    }
    out.graph = BipartiteGraph(b.num_left(), coarse, std::move(edges), b.left_budgets(), b.left_features(),
                               std::move(features));
    return out;
}

namespace {

struct RawLevel {
    BipartiteGraph graph;
    std::vector<Budget> right_budgets;
    std::vector<Index> left_parent;   // finer left node -> node of this level
    std::vector<Index> right_parent;  // finer right node -> node of this level
};

struct Candidate {
    double key;
    Index u;
    Index v;
};

// Rounds to 32 mantissa bits so that costs equal up to solver noise tie
// exactly and fall back to index order.
double quantize(double x) {
    if (x == 0.0 || !std::isfinite(x)) return x;
    int exp = 0;
    const double m = std::frexp(x, &exp);
    return std::ldexp(std::round(std::ldexp(m, 32)), exp - 32);
}

Index largest_right_group(const std::vector<std::vector<Index>>& rnb, const std::vector<Index>& partner) {
    std::map<std::vector<Index>, Index> count;
    Index largest = 0;
    std::vector<Index> mapped;
    for (const auto& hood : rnb) {
        mapped.clear();
        for (Index l : hood) {
            const Index p = partner[static_cast<std::size_t>(l)];
            mapped.push_back(p >= 0 ? std::min(l, p) : l);
        }
        std::sort(mapped.begin(), mapped.end());
        mapped.erase(std::unique(mapped.begin(), mapped.end()), mapped.end());
        largest = std::max(largest, ++count[mapped]);
    }
    return largest;
}

CliqueExpansion contract(const CliqueExpansion& c, const std::vector<Index>& mapping, Index coarse) {
    CliqueExpansion out;
    out.num_nodes = coarse;
    for (const auto& [uv, w] : c.weighted_edges) {
        const Index a = mapping[static_cast<std::size_t>(uv.first)];
        const Index b = mapping[static_cast<std::size_t>(uv.second)];
        if (a != b) out.weighted_edges[{std::min(a, b), std::max(a, b)}] += w;
    }
    return out;
}

std::vector<Index> children_order(const std::vector<Index>& parent_order, const std::vector<Index>& parent_of) {
    std::vector<std::vector<Index>> children(parent_order.size());
    for (std::size_t x = 0; x < parent_of.size(); ++x)
        children[static_cast<std::size_t>(parent_of[x])].push_back(static_cast<Index>(x));
    std::vector<Index> out;
    out.reserve(parent_of.size());
    for (Index p : parent_order)
        for (Index x : children[static_cast<std::size_t>(p)]) out.push_back(x);
    return out;
}

}  // namespace

CoarseningSequence sample_coarsening_sequence(const Hypergraph& h, const CoarseningParams& params, Rng& rng,
                                              Index source_graph_id) {
    params.validate();
    if (h.num_nodes() < 1) throw Error("InvalidHypergraph", "coarsening needs at least one node");
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<RawLevel> raw;
    {
        RawLevel first;
        first.graph = star_expand(h);
        first.right_budgets.assign(static_cast<std::size_t>(h.num_hyperedges()), 1);
        raw.push_back(std::move(first));
    }
    CliqueExpansion clique = clique_expand(h);

    while (raw.back().graph.num_left() > 1) {
        const BipartiteGraph& cur = raw.back().graph;
        const Index n = cur.num_left();
        const double red_frac = n < params.small_graph_cutoff
                                    ? params.rho_max
                                    : std::uniform_real_distribution<double>(params.rho_min, params.rho_max)(rng);

        std::vector<Candidate> candidates;
        const bool bridging = clique.weighted_edges.empty();
        if (!bridging) {
            const LocalVariationCost cost(clique, params.preserve_k);
            candidates.reserve(clique.weighted_edges.size());
            for (const auto& [uv, w] : clique.weighted_edges)
                candidates.push_back({quantize(cost(uv.first, uv.second)), uv.first, uv.second});
        } else {
            // No shared hyperedges left: pair up components, smallest budgets first.
            std::vector<Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), Index{0});
            std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
                return cur.left_budgets()[static_cast<std::size_t>(a)] < cur.left_budgets()[static_cast<std::size_t>(b)];
            });
            for (std::size_t i = 0; i + 1 < order.size(); i += 2)
                candidates.push_back({0.0, std::min(order[i], order[i + 1]), std::max(order[i], order[i + 1])});
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(a.key, a.u, a.v) < std::tie(b.key, b.u, b.v);
        });

        const auto rnb = cur.right_neighbourhoods();
        std::vector<Index> partner(static_cast<std::size_t>(n), -1);
        auto try_accept = [&](const Candidate& c) {
            if (partner[static_cast<std::size_t>(c.u)] >= 0 || partner[static_cast<std::size_t>(c.v)] >= 0) return false;
            partner[static_cast<std::size_t>(c.u)] = c.v;
            partner[static_cast<std::size_t>(c.v)] = c.u;
            if (largest_right_group(rnb, partner) > 3) {
                partner[static_cast<std::size_t>(c.u)] = -1;
                partner[static_cast<std::size_t>(c.v)] = -1;
                return false;
            }
            return true;
        };

        Index accepted = 0;
        for (const auto& c : candidates) {
            if (uniform(rng) > params.lambda && try_accept(c)) ++accepted;
            if (static_cast<double>(accepted) > red_frac * static_cast<double>(n)) break;
        }
        for (std::size_t i = 0; accepted == 0 && i < candidates.size(); ++i)
            if (try_accept(candidates[i])) ++accepted;
        if (accepted == 0) throw Error("CoarseningStalled", "no legal contraction at " + std::to_string(n) + " nodes");

        std::vector<std::vector<Index>> parts;
        for (Index u = 0; u < n; ++u) {
            const Index p = partner[static_cast<std::size_t>(u)];
            if (p > u) parts.push_back({u, p});
        }
        auto merged = merge_left(cur, parts, !bridging);
        auto deduped = dedup_right(merged.graph, raw.back().right_budgets);
        clique = contract(clique, merged.mapping, merged.graph.num_left());

        RawLevel next;
        next.graph = std::move(deduped.graph);
        next.right_budgets = std::move(deduped.right_budgets);
        next.left_parent = std::move(merged.mapping);
        next.right_parent = std::move(deduped.mapping);
        raw.push_back(std::move(next));
    }

    // Terminal level carries no feature information.
    {
        const BipartiteGraph& last = raw.back().graph;
        raw.back().graph = BipartiteGraph(last.num_left(), last.num_right(), last.edges(), last.left_budgets(),
                                          Matrix::Zero(last.num_left(), last.left_feature_dim()),
                                          Matrix::Zero(last.num_right(), last.right_feature_dim()));
    }

    // Renumber parent-major from the coarsest level down.
    const std::size_t num_levels = raw.size();
    std::vector<std::vector<Index>> left_order(num_levels);
    std::vector<std::vector<Index>> right_order(num_levels);
    left_order.back().resize(static_cast<std::size_t>(raw.back().graph.num_left()));
    right_order.back().resize(static_cast<std::size_t>(raw.back().graph.num_right()));
    std::iota(left_order.back().begin(), left_order.back().end(), Index{0});
    std::iota(right_order.back().begin(), right_order.back().end(), Index{0});
    for (std::size_t l = num_levels - 1; l > 0; --l) {
        left_order[l - 1] = children_order(left_order[l], raw[l].left_parent);
        right_order[l - 1] = children_order(right_order[l], raw[l].right_parent);
    }

    CoarseningSequence seq;
    seq.source_graph_id = source_graph_id;
    seq.node_order = left_order.front();
    seq.hyperedge_order = right_order.front();
    seq.levels.resize(num_levels);
    for (std::size_t l = 0; l < num_levels; ++l) {
        seq.levels[l].bipartite = relabel(raw[l].graph, left_order[l], right_order[l]);
        seq.levels[l].expansion = ExpansionVectors::ones(seq.levels[l].bipartite);
    }
    for (std::size_t l = 1; l < num_levels; ++l) {
        auto& level = seq.levels[l];
        const BipartiteGraph& finer = seq.levels[l - 1].bipartite;
        std::fill(level.expansion.left.begin(), level.expansion.left.end(), 0);
        std::fill(level.expansion.right.begin(), level.expansion.right.end(), 0);
        std::vector<Index> left_pos(left_order[l].size());
        std::vector<Index> right_pos(right_order[l].size());
        for (std::size_t i = 0; i < left_order[l].size(); ++i) left_pos[static_cast<std::size_t>(left_order[l][i])] = static_cast<Index>(i);
        for (std::size_t i = 0; i < right_order[l].size(); ++i) right_pos[static_cast<std::size_t>(right_order[l][i])] = static_cast<Index>(i);
        for (Index x : raw[l].left_parent) ++level.expansion.left[static_cast<std::size_t>(left_pos[static_cast<std::size_t>(x)])];
        for (Index x : raw[l].right_parent) ++level.expansion.right[static_cast<std::size_t>(right_pos[static_cast<std::size_t>(x)])];

        const BipartiteGraph expanded = expand(level.bipartite, level.expansion);
        RefinementDecision& d = level.refinement;
        d.edge_keep.reserve(expanded.edges().size());
        for (const auto& e : expanded.edges()) d.edge_keep.push_back(finer.find_edge(e.left, e.right) >= 0 ? 1 : 0);
        d.budget_split.resize(expanded.num_left());
        for (Index i = 0; i < expanded.num_left(); ++i) {
            d.budget_split[i] = static_cast<double>(finer.left_budgets()[static_cast<std::size_t>(i)]) /
                                static_cast<double>(expanded.left_budgets()[static_cast<std::size_t>(i)]);
        }
        d.left_features = finer.left_features();
        d.right_features = finer.right_features();
    }
    return seq;
}

BipartiteGraph CoarseningSequence::reconstruct(Index l) const {
    if (l < 0 || l >= num_levels()) throw Error("InvalidArgument", "level out of range");
    BipartiteGraph cur = levels.back().bipartite;
    for (Index j = num_levels() - 1; j > l; --j) {
        const auto& level = levels[static_cast<std::size_t>(j)];
        cur = refine(expand(cur, level.expansion), level.refinement);
    }
    return cur;
}

BipartiteGraph CoarseningSequence::reorder(const Hypergraph& h, const CoarseningSequence& s) {
    return relabel(star_expand(h), s.node_order, s.hyperedge_order);
}

CoarseningCache::CoarseningCache(CoarseningParams params) : params_(params) { params_.validate(); }

Index CoarseningCache::add_graph(Hypergraph h) {
    Entry e;
    e.graph = std::move(h);
    e.mutex = std::make_unique<std::mutex>();
    entries_.push_back(std::move(e));
    return static_cast<Index>(entries_.size()) - 1;
}

CoarseningCache::Entry& CoarseningCache::entry(Index graph_id) {
    if (graph_id < 0 || graph_id >= num_graphs()) {
        throw Error("UnknownGraph", "graph id " + std::to_string(graph_id) + " is not registered");
    }
    return entries_[static_cast<std::size_t>(graph_id)];
}

const CoarseningCache::Entry& CoarseningCache::entry(Index graph_id) const {
    return const_cast<CoarseningCache*>(this)->entry(graph_id);
}

const Hypergraph& CoarseningCache::graph(Index graph_id) const { return entry(graph_id).graph; }

Index CoarseningCache::generations(Index graph_id) const {
    const Entry& e = entry(graph_id);
    std::lock_guard lock(*e.mutex);
    return e.generations;
}

CachedLevel CoarseningCache::take(Index graph_id, Rng& rng) {
    Entry& e = entry(graph_id);
    std::lock_guard lock(*e.mutex);
    if (!e.sequence || e.remaining.empty()) {
        e.sequence = std::make_shared<const CoarseningSequence>(
            sample_coarsening_sequence(e.graph, params_, rng, graph_id));
        e.remaining.resize(static_cast<std::size_t>(e.sequence->num_levels()));
        std::iota(e.remaining.begin(), e.remaining.end(), Index{0});
        ++e.generations;
    }
    std::uniform_int_distribution<std::size_t> pick(0, e.remaining.size() - 1);
    const std::size_t i = pick(rng);
    const Index level = e.remaining[i];
    e.remaining[i] = e.remaining.back();
    e.remaining.pop_back();
    return {e.sequence, level};
}

}  // namespace hyperforge
