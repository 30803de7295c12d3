// acceptance.cpp - end-to-end acceptance checks, one PASS/FAIL line each
//
// Usage: acceptance [--only 1,4,7] [--skip 10]
// Exit status is non-zero when any selected check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "denoiser_fixtures.hpp"
#include "hyperforge/coarsening.hpp"
#include "hyperforge/datasets.hpp"
#include "hyperforge/expansion.hpp"
#include "hyperforge/flow.hpp"
#include "hyperforge/metrics.hpp"
#include "hyperforge/pipeline.hpp"
#include "stats.hpp"
#include "test_support.hpp"

using namespace hyperforge;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and limits.
constexpr double kRoundTripSeconds = 60.0;
constexpr double kGridStep = 1e-3;
constexpr double kSimplexTol = 1e-8;
constexpr double kSimplexSumTol = 1e-12;
constexpr double kKsAlpha = 0.01;
constexpr double kFdStep = 1e-4;
constexpr double kFdRelTol = 1e-4;
constexpr double kFdDenominatorFloor = 1e-8;
constexpr double kEquivarianceTol = 1e-9;
constexpr double kSmokeRatio = 0.5;
constexpr double kSmokeSeconds = 15.0 * 60.0;
constexpr double kTrainedValidFraction = 0.2;
constexpr double kTrainedWassersteinFactor = 2.0;
constexpr double kTrainedSeconds = 2.0 * 3600.0;
constexpr double kMetricTol = 1e-10;
constexpr double kLinearSlack = 1.25;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Check {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

template <class... Parts>
std::string cat(const Parts&... parts) {
    std::ostringstream out;
    out.precision(4);
    (out << ... << parts);
    return out.str();
}

DenoiserConfig small_denoiser(Index dl = 0, Index dr = 0) {
    DenoiserConfig c;
    c.hidden_dim = 16;
    c.num_layers = 2;
    c.spectral_k = 4;
    c.mlp_hidden = 8;
    c.budget_encoding_dim = 16;
    c.left_feature_dim = dl;
    c.right_feature_dim = dr;
    return c;
}

std::vector<Hypergraph> tree_set(Index count, Index nodes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Hypergraph> out;
    for (Index i = 0; i < count; ++i) out.push_back(gen_tree(rng, nodes));
    return out;
}

// 1 -----------------------------------------------------------------------

Outcome round_trip() {
    const auto start = Clock::now();
    Rng rng(101);
    std::vector<Hypergraph> graphs;
    for (int i = 0; i < 50; ++i) graphs.push_back(gen_tree(rng));
    for (int i = 0; i < 50; ++i) graphs.push_back(gen_sbm(rng));
    Index levels = 0;
    Index mismatches = 0;
    for (const auto& h : graphs) {
        const CoarseningSequence seq = sample_coarsening_sequence(h, {}, rng);
        if (!same_graph(seq.level(0).bipartite, CoarseningSequence::reorder(h, seq))) ++mismatches;
        for (Index l = 0; l + 1 < seq.num_levels(); ++l) {
            const auto& coarse = seq.level(l + 1);
            const BipartiteGraph back = refine(expand(coarse.bipartite, coarse.expansion), coarse.refinement);
            if (!same_graph(back, seq.level(l).bipartite)) ++mismatches;
            ++levels;
        }
    }
    const double secs = seconds_since(start);
    return {mismatches == 0 && secs < kRoundTripSeconds,
            cat(graphs.size(), " graphs, ", levels, " level pairs, ", mismatches, " mismatches, ", secs, " s")};
}

// 2 -----------------------------------------------------------------------

Outcome budget_conservation() {
    Rng rng(202);
    Index violations = 0;
    Index levels = 0;
    for (int i = 0; i < 100; ++i) {
        const Hypergraph h = i % 2 == 0 ? gen_tree(rng, 8 + i % 40) : gen_sbm(rng);
        const CoarseningSequence seq = sample_coarsening_sequence(h, {}, rng);
        for (const auto& level : seq.levels) {
            const auto& b = level.bipartite.left_budgets();
            if (std::accumulate(b.begin(), b.end(), Budget{0}) != h.num_nodes()) ++violations;
            ++levels;
        }
    }
    const Denoiser model(small_denoiser(), 2);
    SampleOptions opts;
    opts.steps = 4;
    Index steps = 0;
    for (int i = 0; i < 100; ++i) {
        const Index n = 5 + i % 36;
        Rng srng(static_cast<std::uint64_t>(i));
        SampleTrace trace;
        sample_hypergraph(model, n, opts, srng, &trace);
        for (Budget s : trace.budget_sums) {
            violations += s != n;
            ++steps;
        }
    }
    return {violations == 0, cat(levels, " coarsening levels, ", steps, " sampling steps, ", violations, " violations")};
}

// 3 -----------------------------------------------------------------------

Outcome size_control() {
    const Denoiser model(small_denoiser(), 3);
    SampleOptions opts;
    opts.steps = 4;
    Index violations = 0;
    Index total = 0;
    for (Index n : {8, 16, 33}) {
        const auto graphs = sample_many(model, n, 100, opts, 300 + static_cast<std::uint64_t>(n), 4);
        for (const auto& g : graphs) violations += g.num_nodes() != n;
        total += static_cast<Index>(graphs.size());
    }
    return {violations == 0 && total == 300, cat(total, " samples, ", violations, " wrong sizes")};
}

// 4 -----------------------------------------------------------------------

Outcome weighted_mean() {
    Rng rng(404);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::uniform_int_distribution<Budget> budget(1, 9);
    std::uniform_int_distribution<Index> size_of(2, 6);
    Index beaten = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index size = size_of(rng);
        std::vector<BipartiteEdge> edges;
        std::vector<Budget> budgets;
        Matrix f(size, 1);
        std::vector<Index> part;
        for (Index i = 0; i < size; ++i) {
            edges.push_back({i, 0});
            budgets.push_back(budget(rng));
            f(i, 0) = value(rng);
            part.push_back(i);
        }
        const double mean = merge_left(BipartiteGraph(size, 1, edges, budgets, f), {part}).graph.left_features()(0, 0);
        auto loss = [&](double x) {
            double s = 0.0;
            for (Index i = 0; i < size; ++i)
                s += static_cast<double>(budgets[static_cast<std::size_t>(i)]) * (f(i, 0) - x) * (f(i, 0) - x);
            return s;
        };
        double best = std::numeric_limits<double>::infinity();
        double best_x = 0.0;
        for (int g = 0; g <= 2000; ++g) {
            const double x = -1.0 + kGridStep * g;
            if (loss(x) < best) {
                best = loss(x);
                best_x = x;
            }
        }
        const double gap = std::abs(mean - best_x);
        worst = std::max(worst, gap);
        if (loss(mean) > best + 1e-12 || gap > kGridStep) ++beaten;
    }
    return {beaten == 0, cat("1000 clusters, max |mean - grid argmin| = ", worst, ", ", beaten, " beaten")};
}

// 5 -----------------------------------------------------------------------

// Euclidean projection by bisection on the threshold tau of
// x = max(z - tau, 0); sum x is monotone in tau.
Vector bisection_projection(const Vector& z) {
    double lo = z.minCoeff() - 1.0;
    double hi = z.maxCoeff();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((z.array() - mid).cwiseMax(0.0).sum() > 1.0) lo = mid;
        else hi = mid;
    }
    return (z.array() - 0.5 * (lo + hi)).cwiseMax(0.0);
}

// Projected gradient on 0.5 |x - z|^2 over the simplex, step 0.5.
Vector projected_gradient_oracle(const Vector& z) {
    Vector x = Vector::Constant(z.size(), 1.0 / static_cast<double>(z.size()));
    for (int it = 0; it < 100000; ++it) {
        const Vector next = bisection_projection(x - 0.5 * (x - z));
        const double moved = (next - x).cwiseAbs().maxCoeff();
        x = next;
        if (moved < 1e-15) break;
    }
    return x;
}

Outcome simplex() {
    Rng rng(505);
    std::normal_distribution<double> normal(0.0, 1.5);
    std::uniform_int_distribution<Index> dim(2, 6);
    double worst = 0.0;
    double worst_sum = 0.0;
    Index negative = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        Vector z(dim(rng));
        for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        const Vector x = simplex_project(z);
        worst = std::max(worst, (x - projected_gradient_oracle(z)).cwiseAbs().maxCoeff());
        worst_sum = std::max(worst_sum, std::abs(x.sum() - 1.0));
        negative += x.minCoeff() < 0.0;
    }
    return {worst < kSimplexTol && worst_sum <= kSimplexSumTol && negative == 0,
            cat("10000 inputs, max error ", worst, ", max |sum - 1| ", worst_sum, ", ", negative, " negative")};
}

// 6 -----------------------------------------------------------------------

Outcome ot_marginals() {
    Rng rng(606);
    const Index groups = 10000;
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    Matrix noise(2 * groups, 1);
    Matrix target(2 * groups, 1);
    std::vector<Index> group_of;
    for (Index g = 0; g < groups; ++g) {
        for (Index s = 0; s < 2; ++s) {
            noise(2 * g + s, 0) = normal(rng);
            target(2 * g + s, 0) = encode_edge_keep(coin(rng));
            group_of.push_back(g);
        }
    }
    const Matrix noise_before = noise;
    const Matrix target_before = target;
    const Index swaps = ot_couple(group_of, noise, target);
    Index broken = 0;
    for (Index g = 0; g < groups; ++g) {
        std::multiset<double> a{noise_before(2 * g, 0), noise_before(2 * g + 1, 0)};
        std::multiset<double> b{noise(2 * g, 0), noise(2 * g + 1, 0)};
        broken += a != b;
    }
    const bool targets_same = target == target_before;
    double worst_p = 1.0;
    for (Index s = 0; s < 2; ++s) {
        std::vector<double> slot;
        for (Index g = 0; g < groups; ++g) slot.push_back(noise(2 * g + s, 0));
        const double d = testing::ks_statistic(slot, testing::normal_cdf);
        worst_p = std::min(worst_p, testing::ks_pvalue(d, slot.size()));
    }
    return {worst_p > kKsAlpha && broken == 0 && targets_same && swaps > 0,
            cat("10000 groups, ", swaps, " swaps, min KS p = ", worst_p, ", ", broken, " groups with altered noise, targets ",
                targets_same ? "unchanged" : "CHANGED")};
}

// 7 -----------------------------------------------------------------------

Outcome gradients() {
    Rng rng(707);
    DenoiserConfig cfg;
    cfg.left_feature_dim = 2;
    cfg.right_feature_dim = 1;
    Denoiser net(cfg, 7);
    const Hypergraph h = testing::random_hypergraph(rng, 7, 5, 3, 2, 1);
    testing::DenoiserCase c;
    c.parent = testing::with_random_budgets(rng, star_expand(h));
    ExpansionVectors v;
    v.left = {2, 2, 2, 2, 2, 1, 1};
    for (Index j = 0; j < c.parent.num_right(); ++j) v.right.push_back(1 + j % 3);
    BipartiteGraph expanded = expand(c.parent, v);
    const Index left = expanded.num_left();
    FlowState state = testing::random_state(rng, expanded);
    c.input = make_denoiser_input(c.parent, std::move(expanded), std::move(state), 40, 0.3, cfg.spectral_k, rng);
    const FlowState target = testing::random_state(rng, c.input.graph);

    auto loss = [&](ad::Tape& tape) {
        const auto heads = net.forward(tape, c.input);
        std::vector<ad::Var> parts;
        for (std::size_t k = 0; k < kNumHeads; ++k)
            if (tape.cols(heads[k]) > 0) parts.push_back(tape.masked_mse(heads[k], target.heads[k]));
        return tape.sum_all(parts);
    };
    auto& params = net.params();
    params.zero_grad();
    {
        ad::Tape tape(&params);
        tape.backward(loss(tape));
    }
    std::uniform_int_distribution<Index> pick_param(0, params.size() - 1);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Index p = pick_param(rng);
        const Index i = std::uniform_int_distribution<Index>(0, params.value(p).size() - 1)(rng);
        double& x = params.value(p).data()[i];
        const double saved = x;
        auto eval_at = [&](double value) {
            x = value;
            ad::Tape tape(static_cast<const ad::ParameterStore*>(&params));
            return tape.value(loss(tape))(0, 0);
        };
        const double numeric = (eval_at(saved + kFdStep) - eval_at(saved - kFdStep)) / (2.0 * kFdStep);
        x = saved;
        const double analytic = params.grad(p).data()[i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), kFdDenominatorFloor});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
    return {worst < kFdRelTol && left == 12, cat(left, " left nodes, 20 parameters, max relative error ", worst)};
}

// 8 -----------------------------------------------------------------------

Outcome equivariance() {
    Rng rng(808);
    DenoiserConfig cfg;
    cfg.left_feature_dim = 2;
    cfg.right_feature_dim = 1;
    const Denoiser net(cfg, 8);
    testing::DenoiserCase c;
    // Graphs whose leading eigenvalues are well separated, so the spectral
    // basis is unique up to sign.
    for (int attempt = 0; attempt < 500; ++attempt) {
        const Hypergraph h = testing::random_hypergraph(rng, 8, 5, 3, 2, 1);
        c = testing::random_case(rng, h, cfg.spectral_k);
        if (testing::spectral_gap(c.parent, cfg.spectral_k) >= 1e-3) break;
    }
    const FlowState base = net.predict(c.input);
    double worst = 0.0;
    for (int p = 0; p < 20; ++p) {
        const auto r = testing::random_relabeling(rng, c);
        const auto moved = testing::relabel_case(c, r, cfg.spectral_k);
        worst = std::max(worst, testing::relabel_discrepancy(base, net.predict(moved.input), r));
    }
    return {worst < kEquivarianceTol, cat("20 permutations, max discrepancy ", worst)};
}

// 9 -----------------------------------------------------------------------

TrainConfig tree_train_config(Index steps) {
    TrainConfig c;
    c.denoiser.hidden_dim = 64;
    c.denoiser.num_layers = 4;
    c.max_steps = steps;
    c.seed = 9;
    c.log_window = 50;
    return c;
}

Outcome smoke_training() {
    const auto start = Clock::now();
    Trainer trainer(tree_train_config(500), tree_set(64, 16, 909));
    const TrainStats& st = trainer.run();
    const double secs = seconds_since(start);
    const double initial = st.running[static_cast<std::size_t>(trainer.config().log_window - 1)];
    const double final = st.running.back();
    return {final < kSmokeRatio * initial && secs < kSmokeSeconds,
            cat("running loss ", initial, " -> ", final, " (ratio ", final / initial, "), ", secs, " s")};
}

// 10 ----------------------------------------------------------------------

Outcome trained_sanity() {
    const auto start = Clock::now();
    DatasetSpec spec;
    spec.kind = DatasetKind::Tree;
    spec.train = 64;
    spec.val = 32;
    spec.test = 0;
    spec.tree_nodes = 16;
    spec.seed = 1010;
    const Dataset data = generate_dataset(spec);
    // Larger batches, plain (unperturbed) expansions and a decaying
    // learning rate; see README.
    TrainConfig config = tree_train_config(5000);
    config.batch_size = 32;
    config.flow.perturb = false;
    config.final_lr_ratio = 0.05;
    Trainer trainer(config, data.train);
    trainer.run();
    const auto samples = sample_many(trainer.model(), 16, 50, SampleOptions::from(trainer.config()), 10, 4);
    const double secs = seconds_since(start);
    Index valid = 0;
    for (const auto& g : samples) valid += valid_tree(g);
    const auto train_deg = degree_values(data.train);
    const double w = wasserstein_1d(degree_values(samples), train_deg);
    const double self = wasserstein_1d(degree_values(data.val), train_deg);
    const double fraction = static_cast<double>(valid) / static_cast<double>(samples.size());
    return {fraction >= kTrainedValidFraction && w < kTrainedWassersteinFactor * self && secs < kTrainedSeconds,
            cat(valid, "/", samples.size(), " valid trees, degree W ", w, " vs split self-distance ", self, ", ", secs,
                " s")};
}

// 11 ----------------------------------------------------------------------

double w1_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pts = a;
    pts.insert(pts.end(), b.begin(), b.end());
    std::sort(pts.begin(), pts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double fa = 0.0;
        double fb = 0.0;
        for (double x : a) fa += x <= pts[i];
        for (double x : b) fb += x <= pts[i];
        total += std::abs(fa / static_cast<double>(a.size()) - fb / static_cast<double>(b.size())) * (pts[i + 1] - pts[i]);
    }
    return total;
}

double mmd_oracle(const std::vector<Hypergraph>& a, const std::vector<Hypergraph>& b) {
    std::vector<Vector> all;
    for (const auto& h : a) all.push_back(eigenvalue_histogram(h));
    for (const auto& h : b) all.push_back(eigenvalue_histogram(h));
    std::vector<double> d;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            double s = 0.0;
            for (Index k = 0; k < all[i].size(); ++k) s += (all[i][k] - all[j][k]) * (all[i][k] - all[j][k]);
            d.push_back(std::sqrt(s));
        }
    std::sort(d.begin(), d.end());
    double sigma = d.size() % 2 == 1 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    if (sigma <= 0.0) sigma = 1.0;
    const std::size_t na = a.size();
    auto k = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (Index t = 0; t < all[i].size(); ++t) s += (all[i][t] - all[j][t]) * (all[i][t] - all[j][t]);
        return std::exp(-s / (2.0 * sigma * sigma));
    };
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = 0; j < all.size(); ++j) {
            if (i < na && j < na) xx += k(i, j);
            else if (i >= na && j >= na) yy += k(i, j);
            else if (i < na) xy += k(i, j);
        }
    const double nb = static_cast<double>(all.size() - na);
    return std::max(0.0, xx / (na * na) + yy / (nb * nb) - 2.0 * xy / (static_cast<double>(na) * nb));
}

Outcome metric_oracles() {
    Rng rng(1111);
    double worst_w = 0.0;
    double worst_m = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Hypergraph a = testing::random_hypergraph(rng, 6 + trial, 4 + trial, 4);
        const Hypergraph b = gen_tree(rng, 8 + 2 * trial);
        const auto da = degree_values(std::vector<Hypergraph>{a});
        const auto db = degree_values(std::vector<Hypergraph>{b});
        worst_w = std::max(worst_w, std::abs(wasserstein_1d(da, db) - w1_oracle(da, db)));

        std::vector<Hypergraph> sa;
        std::vector<Hypergraph> sb;
        for (int i = 0; i < 3 + trial % 3; ++i) sa.push_back(testing::random_hypergraph(rng, 5 + i, 3 + i, 3));
        for (int i = 0; i < 4; ++i) sb.push_back(gen_tree(rng, 6 + i));
        worst_m = std::max(worst_m, std::abs(spectral_mmd(sa, sb) - mmd_oracle(sa, sb)));
    }
    return {worst_w < kMetricTol && worst_m < kMetricTol,
            cat("10 pairs/sets, max W1 error ", worst_w, ", max MMD error ", worst_m)};
}

// 12 ----------------------------------------------------------------------

Outcome linear_sampling() {
    const Denoiser model(DenoiserConfig{}, 12);
    SampleOptions opts;
    const std::vector<Index> sizes{32, 64, 128, 256};
    const int reps = 6;
    std::vector<double> per_size_time;
    std::vector<double> per_size_work;
    for (Index n : sizes) {
        double secs = 0.0;
        double work = 0.0;
        for (int r = 0; r < reps; ++r) {
            Rng rng(static_cast<std::uint64_t>(n * 100 + r));
            const auto start = Clock::now();
            const Hypergraph h = sample_hypergraph(model, n, opts, rng);
            secs += seconds_since(start);
            work += static_cast<double>(h.num_nodes() + h.num_hyperedges() + h.num_incidences());
        }
        per_size_time.push_back(secs / reps);
        per_size_work.push_back(work / reps);
    }
    // Time per unit of size, relative to the smallest N.
    const double base = per_size_time[0] / per_size_work[0];
    double worst = 0.0;
    std::string detail;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double ratio = (per_size_time[i] / per_size_work[i]) / base;
        worst = std::max(worst, ratio);
        detail += cat("N=", sizes[i], ": s=", per_size_work[i], " t=", per_size_time[i], "s; ");
    }
    return {worst <= kLinearSlack, cat(detail, "max normalized time ratio ", worst)};
}

std::vector<int> parse_ids(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    retain_heap_memory();
    CLI::App app{"hyperforge acceptance checks"};
    std::string only;
    std::string skip;
    app.add_option("--only", only, "comma-separated check numbers to run");
    app.add_option("--skip", skip, "comma-separated check numbers to leave out");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Check> checks{
        {1, "round-trip reconstruction", round_trip},
        {2, "budget conservation", budget_conservation},
        {3, "exact size control", size_control},
        {4, "weighted mean optimality", weighted_mean},
        {5, "simplex projection", simplex},
        {6, "coupling preserves marginals", ot_marginals},
        {7, "gradient correctness", gradients},
        {8, "permutation equivariance", equivariance},
        {9, "smoke training", smoke_training},
        {10, "trained-model sanity", trained_sanity},
        {11, "metric oracles", metric_oracles},
        {12, "linear sampling cost", linear_sampling},
    };
    const auto selected = parse_ids(only);
    const auto skipped = parse_ids(skip);
    int failures = 0;
    for (const auto& c : checks) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        if (std::find(skipped.begin(), skipped.end(), c.id) != skipped.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, cat("threw: ", e.what())};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
