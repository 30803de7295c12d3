// pipeline.cpp - training loop, size-controlled sampling and run configuration
#include "hyperforge/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hyperforge/expansion.hpp"
#include "hyperforge/io.hpp"

namespace hyperforge {

namespace {

std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

template <class T>
std::string fmt_int(T x) {
    return std::to_string(x);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    const auto r = std::from_chars(value.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end)
        throw Error("InvalidConfig", "bad value for " + key + ": '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error("InvalidConfig", "bad value for " + key + ": '" + value + "'");
}

Matrix row_subset(const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
    return out;
}

// Priors for every head of an expanded graph.
FlowState sample_noise(const BipartiteGraph& g, Rng& rng) {
    FlowState s;
    for (HeadKind h : kAllHeads) {
        const auto spec = FlowHeadSpec::for_head(h);
        switch (h) {
            case HeadKind::LeftExpansion: s[h] = sample_prior(spec, g.num_left(), 1, {}, rng); break;
            case HeadKind::BudgetSplit: s[h] = sample_prior(spec, g.num_left(), 1, g.cluster_of_left(), rng); break;
            case HeadKind::LeftFeature: s[h] = sample_prior(spec, g.num_left(), g.left_feature_dim(), {}, rng); break;
            case HeadKind::RightExpansion: s[h] = sample_prior(spec, g.num_right(), 1, {}, rng); break;
            case HeadKind::RightFeature: s[h] = sample_prior(spec, g.num_right(), g.right_feature_dim(), {}, rng); break;
            case HeadKind::EdgeKeep: s[h] = sample_prior(spec, g.num_edges(), 1, {}, rng); break;
        }
    }
    return s;
}

// Per sibling group, permutes the noise of whole children: their node heads
// plus the edges to neighbours shared by every member of the group. Right
// groups are coupled first, then left groups.
void couple_siblings(FlowState& noise, const FlowState& target, const BipartiteGraph& g) {
    const auto& edges = g.edges();
    for (const bool left : {false, true}) {
        const auto& cluster_of = left ? g.cluster_of_left() : g.cluster_of_right();
        if (cluster_of.empty()) continue;
        const Index count = left ? g.num_left() : g.num_right();
        const std::vector<HeadKind> heads =
            left ? std::vector<HeadKind>{HeadKind::LeftExpansion, HeadKind::BudgetSplit, HeadKind::LeftFeature}
                 : std::vector<HeadKind>{HeadKind::RightExpansion, HeadKind::RightFeature};
        // other endpoint -> edge position, per node of this side
        std::vector<std::map<Index, Index>> slots(static_cast<std::size_t>(count));
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const Index self = left ? edges[e].left : edges[e].right;
            const Index other = left ? edges[e].right : edges[e].left;
            slots[static_cast<std::size_t>(self)][other] = static_cast<Index>(e);
        }
        Index node_cols = 0;
        for (HeadKind h : heads) node_cols += noise[h].cols();
        Matrix& en = noise[HeadKind::EdgeKeep];
        const Matrix& et = target[HeadKind::EdgeKeep];
        for (const auto& group : sibling_groups(cluster_of, count)) {
            if (group.size() < 2) continue;
            std::vector<Index> common;
            for (const auto& [other, e] : slots[static_cast<std::size_t>(group[0])]) {
                bool everywhere = true;
                for (std::size_t m = 1; m < group.size(); ++m)
                    everywhere = everywhere && slots[static_cast<std::size_t>(group[m])].count(other) > 0;
                if (everywhere) common.push_back(other);
            }
            const auto k = static_cast<Index>(group.size());
            const Index width = node_cols + static_cast<Index>(common.size());
            if (width == 0) continue;
            Matrix n(k, width);
            Matrix t(k, width);
            for (Index i = 0; i < k; ++i) {
                const Index row = group[static_cast<std::size_t>(i)];
                Index c = 0;
                for (HeadKind h : heads) {
                    const Index w = noise[h].cols();
                    n.block(i, c, 1, w) = noise[h].row(row);
                    t.block(i, c, 1, w) = target[h].row(row);
                    c += w;
                }
                const auto& s = slots[static_cast<std::size_t>(row)];
                for (Index other : common) {
                    const Index e = s.at(other);
                    n(i, c) = en(e, 0);
                    t(i, c) = et(e, 0);
                    ++c;
                }
            }
            const auto perm = best_assignment(n, t);
            if (std::is_sorted(perm.begin(), perm.end())) continue;
            for (Index i = 0; i < k; ++i) {
                const Index row = group[static_cast<std::size_t>(i)];
                const Index from = perm[static_cast<std::size_t>(i)];
                Index c = 0;
                for (HeadKind h : heads) {
                    const Index w = noise[h].cols();
                    noise[h].row(row) = n.block(from, c, 1, w);
                    c += w;
                }
                const auto& s = slots[static_cast<std::size_t>(row)];
                for (Index other : common) en(s.at(other), 0) = n(from, c++);
            }
        }
    }
}

BipartiteGraph drop_empty_right(const BipartiteGraph& b, std::vector<Index>& kept) {
    const auto deg = b.right_degrees();
    std::vector<Index> new_index(static_cast<std::size_t>(b.num_right()), -1);
    kept.clear();
    for (Index j = 0; j < b.num_right(); ++j)
        if (deg[static_cast<std::size_t>(j)] > 0) {
            new_index[static_cast<std::size_t>(j)] = static_cast<Index>(kept.size());
            kept.push_back(j);
        }
    if (static_cast<Index>(kept.size()) == b.num_right()) return b;
    std::vector<BipartiteEdge> edges;
    for (const auto& e : b.edges()) edges.push_back({e.left, new_index[static_cast<std::size_t>(e.right)]});
    return BipartiteGraph(b.num_left(), static_cast<Index>(kept.size()), std::move(edges), b.left_budgets(),
                          b.left_features(), row_subset(b.right_features(), kept));
}

// Final collapse; repeated hyperedges keep their first occurrence.
Hypergraph collapse_unique(const BipartiteGraph& b) {
    const Hypergraph h = collapse_bipartite(b);
    std::map<std::vector<Index>, Index> seen;
    std::vector<std::vector<Index>> edges;
    std::vector<Index> rows;
    for (Index e = 0; e < h.num_hyperedges(); ++e)
        if (seen.emplace(h.hyperedge(e), e).second) {
            edges.push_back(h.hyperedge(e));
            rows.push_back(e);
        }
    if (static_cast<Index>(edges.size()) == h.num_hyperedges()) return h;
    return Hypergraph(h.num_nodes(), std::move(edges), h.node_features(), row_subset(h.hyperedge_features(), rows));
}

}  // namespace

// ---------------------------------------------------------------- config

void FlowConfig::validate() const {
    if (steps < 1) throw Error("InvalidConfig", "flow steps must be >= 1");
    if (perturb_radius < 0) throw Error("InvalidConfig", "perturb radius must be >= 0");
    if (!(perturb_p >= 0.0 && perturb_p <= 1.0)) throw Error("InvalidConfig", "perturb probability must lie in [0, 1]");
}

void TrainConfig::validate() const {
    dataset.validate();
    coarsening.validate();
    denoiser.validate();
    flow.validate();
    if (!(adam.lr > 0.0)) throw Error("InvalidConfig", "learning rate must be positive");
    if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) throw Error("InvalidConfig", "final_lr_ratio must be in (0, 1]");
    if (max_steps < 0) throw Error("InvalidConfig", "max_steps must be >= 0");
    if (batch_size < 1) throw Error("InvalidConfig", "batch_size must be >= 1");
    if (checkpoint_every < 0 || eval_every < 0) throw Error("InvalidConfig", "cadences must be >= 0");
    if (log_window < 1) throw Error("InvalidConfig", "log_window must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
    return {
        {"data_dir", data_dir.string()},
        {"dataset.kind", dataset_kind_name(dataset.kind)},
        {"dataset.train", fmt_int(dataset.train)},
        {"dataset.val", fmt_int(dataset.val)},
        {"dataset.test", fmt_int(dataset.test)},
        {"dataset.seed", fmt_int(dataset.seed)},
        {"dataset.tree_nodes", fmt_int(dataset.tree_nodes)},
        {"dataset.mesh_dir", dataset.mesh_dir.string()},
        {"coarsening.rho_min", fmt(coarsening.rho_min)},
        {"coarsening.rho_max", fmt(coarsening.rho_max)},
        {"coarsening.lambda", fmt(coarsening.lambda)},
        {"coarsening.preserve_k", fmt_int(coarsening.preserve_k)},
        {"coarsening.small_graph_cutoff", fmt_int(coarsening.small_graph_cutoff)},
        {"model.hidden_dim", fmt_int(denoiser.hidden_dim)},
        {"model.num_layers", fmt_int(denoiser.num_layers)},
        {"model.spectral_k", fmt_int(denoiser.spectral_k)},
        {"model.budget_encoding_dim", fmt_int(denoiser.budget_encoding_dim)},
        {"model.budget_base_freq", fmt(denoiser.budget_base_freq)},
        {"model.mlp_hidden", fmt_int(denoiser.mlp_hidden)},
        {"model.left_feature_dim", fmt_int(denoiser.left_feature_dim)},
        {"model.right_feature_dim", fmt_int(denoiser.right_feature_dim)},
        {"model.head_init_scale", fmt(denoiser.head_init_scale)},
        {"flow.steps", fmt_int(flow.steps)},
        {"flow.perturb", flow.perturb ? "true" : "false"},
        {"flow.perturb_radius", fmt_int(flow.perturb_radius)},
        {"flow.perturb_p", fmt(flow.perturb_p)},
        {"optim.lr", fmt(adam.lr)},
        {"optim.beta1", fmt(adam.beta1)},
        {"optim.beta2", fmt(adam.beta2)},
        {"optim.eps", fmt(adam.eps)},
        {"optim.clip_norm", fmt(adam.clip_norm)},
        {"optim.final_lr_ratio", fmt(final_lr_ratio)},
        {"train.max_steps", fmt_int(max_steps)},
        {"train.batch_size", fmt_int(batch_size)},
        {"train.seed", fmt_int(seed)},
        {"train.checkpoint_every", fmt_int(checkpoint_every)},
        {"train.eval_every", fmt_int(eval_every)},
        {"train.log_window", fmt_int(log_window)},
        {"train.out_dir", out_dir.string()},
    };
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [key, value] : kv) {
        auto num = [&](auto& field) { field = parse_number<std::remove_reference_t<decltype(field)>>(key, value); };
        if (key == "data_dir") c.data_dir = value;
        else if (key == "dataset.kind") c.dataset.kind = parse_dataset_kind(value);
        else if (key == "dataset.train") num(c.dataset.train);
        else if (key == "dataset.val") num(c.dataset.val);
        else if (key == "dataset.test") num(c.dataset.test);
        else if (key == "dataset.seed") num(c.dataset.seed);
        else if (key == "dataset.tree_nodes") num(c.dataset.tree_nodes);
        else if (key == "dataset.mesh_dir") c.dataset.mesh_dir = value;
        else if (key == "coarsening.rho_min") num(c.coarsening.rho_min);
        else if (key == "coarsening.rho_max") num(c.coarsening.rho_max);
        else if (key == "coarsening.lambda") num(c.coarsening.lambda);
        else if (key == "coarsening.preserve_k") num(c.coarsening.preserve_k);
        else if (key == "coarsening.small_graph_cutoff") num(c.coarsening.small_graph_cutoff);
        else if (key == "model.hidden_dim") num(c.denoiser.hidden_dim);
        else if (key == "model.num_layers") num(c.denoiser.num_layers);
        else if (key == "model.spectral_k") num(c.denoiser.spectral_k);
        else if (key == "model.budget_encoding_dim") num(c.denoiser.budget_encoding_dim);
        else if (key == "model.budget_base_freq") num(c.denoiser.budget_base_freq);
        else if (key == "model.mlp_hidden") num(c.denoiser.mlp_hidden);
        else if (key == "model.left_feature_dim") num(c.denoiser.left_feature_dim);
        else if (key == "model.right_feature_dim") num(c.denoiser.right_feature_dim);
        else if (key == "model.head_init_scale") num(c.denoiser.head_init_scale);
        else if (key == "flow.steps") num(c.flow.steps);
        else if (key == "flow.perturb") c.flow.perturb = parse_bool(key, value);
        else if (key == "flow.perturb_radius") num(c.flow.perturb_radius);
        else if (key == "flow.perturb_p") num(c.flow.perturb_p);
        else if (key == "optim.lr") num(c.adam.lr);
        else if (key == "optim.beta1") num(c.adam.beta1);
        else if (key == "optim.beta2") num(c.adam.beta2);
        else if (key == "optim.eps") num(c.adam.eps);
        else if (key == "optim.clip_norm") num(c.adam.clip_norm);
        else if (key == "optim.final_lr_ratio") num(c.final_lr_ratio);
        else if (key == "train.max_steps") num(c.max_steps);
        else if (key == "train.batch_size") num(c.batch_size);
        else if (key == "train.seed") num(c.seed);
        else if (key == "train.checkpoint_every") num(c.checkpoint_every);
        else if (key == "train.eval_every") num(c.eval_every);
        else if (key == "train.log_window") num(c.log_window);
        else if (key == "train.out_dir") c.out_dir = value;
        else throw Error("InvalidConfig", "unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    TrainConfig c = from_kv(parse_kv(ss.str()));
    // Relative paths in a config file are taken relative to the file.
    const auto base = path.parent_path();
    auto rebase = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    rebase(c.data_dir);
    rebase(c.out_dir);
    rebase(c.dataset.mesh_dir);
    return c;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    Index number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("InvalidConfig", "line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw Error("InvalidConfig", "line " + std::to_string(number) + ": empty key");
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
            throw Error("InvalidConfig", "line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    return kv;
}

std::string format_kv(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

TrainConfig with_feature_dims(TrainConfig config, const std::vector<Hypergraph>& graphs) {
    if (graphs.empty()) throw Error("EmptyDataset", "no training graphs");
    config.denoiser.left_feature_dim = graphs.front().node_feature_dim();
    config.denoiser.right_feature_dim = graphs.front().hyperedge_feature_dim();
    for (const auto& g : graphs)
        if (g.node_feature_dim() != config.denoiser.left_feature_dim ||
            g.hyperedge_feature_dim() != config.denoiser.right_feature_dim)
            throw Error("FeatureMismatch", "training graphs disagree on feature widths");
    return config;
}

// ---------------------------------------------------------------- training examples

TrainingExample build_example(const CoarseningSequence& seq, Index level, Index target_size, const FlowConfig& flow,
                              Index spectral_k, Rng& rng) {
    const Index last = seq.num_levels() - 1;
    if (level < 0 || level > last) throw Error("OutOfRange", "level out of range");
    const BipartiteGraph& finer = seq.level(level).bipartite;
    const BipartiteGraph& parent = seq.level(std::min(level + 1, last)).bipartite;
    const ExpansionVectors up =
        level == last ? ExpansionVectors::ones(parent) : seq.level(level + 1).expansion;
    BipartiteGraph expanded = flow.perturb ? perturb_expand(parent, up, flow.perturb_radius, flow.perturb_p, rng)
                                           : expand(parent, up);
    if (expanded.num_left() != finer.num_left() || expanded.num_right() != finer.num_right())
        throw Error("Internal", "expanded level does not line up with the finer level");

    TrainingExample ex;
    ex.level = level;
    FlowState& y = ex.target;
    const Index nl = expanded.num_left();
    const Index nr = expanded.num_right();
    const ExpansionVectors down = level == 0 ? ExpansionVectors::ones(finer) : seq.level(level).expansion;
    y[HeadKind::LeftExpansion].resize(nl, 1);
    for (Index i = 0; i < nl; ++i)
        y[HeadKind::LeftExpansion](i, 0) = encode_left_expansion(down.left[static_cast<std::size_t>(i)]);
    y[HeadKind::RightExpansion].resize(nr, 1);
    for (Index j = 0; j < nr; ++j)
        y[HeadKind::RightExpansion](j, 0) = encode_right_expansion(down.right[static_cast<std::size_t>(j)]);
    y[HeadKind::EdgeKeep].resize(expanded.num_edges(), 1);
    for (Index e = 0; e < expanded.num_edges(); ++e) {
        const auto& edge = expanded.edges()[static_cast<std::size_t>(e)];
        y[HeadKind::EdgeKeep](e, 0) = encode_edge_keep(finer.find_edge(edge.left, edge.right) >= 0);
    }
    y[HeadKind::BudgetSplit].resize(nl, 1);
    Matrix split_mask = Matrix::Zero(nl, 1);
    for (const auto& group : sibling_groups(expanded.cluster_of_left(), nl)) {
        for (Index i : group) {
            const double f = static_cast<double>(finer.left_budgets()[static_cast<std::size_t>(i)]) /
                             static_cast<double>(expanded.left_budgets()[static_cast<std::size_t>(i)]);
            y[HeadKind::BudgetSplit](i, 0) = encode_split(group.size() == 1 ? 1.0 : f);
            if (group.size() > 1) split_mask(i, 0) = 1.0;
        }
    }
    y[HeadKind::LeftFeature] = finer.left_features();
    y[HeadKind::RightFeature] = finer.right_features();
    ex.mask[head_index(HeadKind::BudgetSplit)] = std::move(split_mask);

    double rho_hat = 0.0;
    if (level > 0) {
        const double n = static_cast<double>(finer.num_left());
        rho_hat = 1.0 - n / static_cast<double>(seq.level(level - 1).bipartite.num_left());
    }
    ex.input = make_denoiser_input(parent, std::move(expanded), FlowState{}, target_size, rho_hat, spectral_k, rng);
    return ex;
}

void noise_example(TrainingExample& ex, Rng& rng) {
    const BipartiteGraph& g = ex.input.graph;
    FlowState noise = sample_noise(g, rng);
    couple_siblings(noise, ex.target, g);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FlowState& s = ex.input.state;
    s.t = unit(rng);
    for (HeadKind h : kAllHeads) s[h] = interpolate(noise[h], ex.target[h], s.t);
}

ad::Var example_loss(ad::Tape& tape, const Denoiser& model, const TrainingExample& ex) {
    const auto heads = model.forward(tape, ex.input);
    std::vector<ad::Var> parts;
    for (HeadKind h : kAllHeads) {
        const std::size_t k = head_index(h);
        if (ex.target.heads[k].size() == 0) continue;
        parts.push_back(tape.masked_mse(heads[k], ex.target.heads[k], ex.mask[k]));
    }
    return tape.sum_all(parts);
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, std::vector<Hypergraph> train, std::vector<Hypergraph> val)
    : config_(with_feature_dims(std::move(config), train)),
      val_(std::move(val)),
      cache_(config_.coarsening),
      model_(config_.denoiser, config_.seed),
      adam_(config_.adam),
      rng_(config_.seed ^ 0x7261696eULL) {
    config_.validate();
    for (auto& g : train) cache_.add_graph(std::move(g));
}

double Trainer::step() {
    std::uniform_int_distribution<Index> pick(0, cache_.num_graphs() - 1);
    std::vector<TrainingExample> batch;
    for (Index b = 0; b < config_.batch_size; ++b) {
        const Index g = pick(rng_);
        const CachedLevel lvl = cache_.take(g, rng_);
        TrainingExample ex = build_example(*lvl.sequence, lvl.level, cache_.graph(g).num_nodes(), config_.flow,
                                           config_.denoiser.spectral_k, rng_);
        noise_example(ex, rng_);
        batch.push_back(std::move(ex));
    }
    auto& params = model_.params();
    params.zero_grad();
    double total = 0.0;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        ad::Tape tape(&params);
        const ad::Var loss = tape.scale(example_loss(tape, model_, ex), w);
        total += tape.value(loss)(0, 0);
        if (std::isfinite(total)) tape.backward(loss);
    }
    try {
        if (!std::isfinite(total)) throw Error("NonFinite", "training loss is not finite");
        const double progress = static_cast<double>(steps_done()) / static_cast<double>(std::max<Index>(1, config_.max_steps));
        const double decay = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
        adam_.set_lr(config_.adam.lr * (config_.final_lr_ratio + (1.0 - config_.final_lr_ratio) * decay));
        adam_.step(params);
    } catch (const Error& e) {
        if (e.code() != "NonFinite") throw;
        const Index step = steps_done() + 1;
        if (!config_.out_dir.empty()) {
            std::filesystem::create_directories(config_.out_dir);
            const auto dump = config_.out_dir / ("nonfinite_step" + std::to_string(step) + ".hfck");
            save_model(dump, config_, model_, step);
            throw Error("NonFinite", "non-finite loss or update at step " + std::to_string(step) +
                                         "; state written to " + dump.string());
        }
        throw Error("NonFinite", "non-finite loss or update at step " + std::to_string(step));
    }
    stats_.losses.push_back(total);
    const Index n = steps_done();
    const Index from = std::max<Index>(0, n - config_.log_window);
    const double window = std::accumulate(stats_.losses.begin() + from, stats_.losses.end(), 0.0);
    stats_.running.push_back(window / static_cast<double>(n - from));
    return total;
}

double Trainer::validation_loss() const {
    if (val_.empty()) throw Error("EmptyDataset", "no validation graphs");
    Rng rng(config_.seed ^ 0x76616cULL);
    double total = 0.0;
    Index count = 0;
    for (const auto& g : val_) {
        const CoarseningSequence seq = sample_coarsening_sequence(g, config_.coarsening, rng);
        for (Index l = 0; l < seq.num_levels(); ++l) {
            TrainingExample ex = build_example(seq, l, g.num_nodes(), config_.flow, config_.denoiser.spectral_k, rng);
            noise_example(ex, rng);
            ad::Tape tape(&std::as_const(model_).params());
            total += tape.value(example_loss(tape, model_, ex))(0, 0);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

const TrainStats& Trainer::run(const std::function<void(Index, double)>& on_step) {
    const bool write = !config_.out_dir.empty();
    std::ofstream log;
    if (write) {
        std::filesystem::create_directories(config_.out_dir);
        std::ofstream(config_.out_dir / "config.txt") << format_kv(config_.to_kv());
        log.open(config_.out_dir / "loss.csv");
        log << "step,loss,running_loss,val_loss\n";
    }
    while (steps_done() < config_.max_steps) {
        const double loss = step();
        const Index s = steps_done();
        std::string val_field;
        if (config_.eval_every > 0 && s % config_.eval_every == 0 && !val_.empty()) {
            const double v = validation_loss();
            val_field = fmt(v);
            if (!stats_.best_val || v < *stats_.best_val) {
                stats_.best_val = v;
                if (write) save_model(config_.out_dir / "best.hfck", config_, model_, s);
            }
        }
        if (write) {
            log << s << ',' << fmt(loss) << ',' << fmt(stats_.running.back()) << ',' << val_field << '\n';
            if (config_.checkpoint_every > 0 && s % config_.checkpoint_every == 0)
                save_model(config_.out_dir / ("checkpoint_step" + std::to_string(s) + ".hfck"), config_, model_, s);
        }
        if (on_step) on_step(s, loss);
    }
    if (write) save_model(config_.out_dir / "model.hfck", config_, model_, steps_done());
    return stats_;
}

// ---------------------------------------------------------------- model files

void save_model(const std::filesystem::path& path, const TrainConfig& config, const Denoiser& model,
                std::int64_t step) {
    auto kv = config.to_kv();
    // The model itself is what matters; the echo records the widths it was built with.
    const auto& d = model.config();
    kv["model.left_feature_dim"] = fmt_int(d.left_feature_dim);
    kv["model.right_feature_dim"] = fmt_int(d.right_feature_dim);
    save_checkpoint(path, snapshot(model.params(), std::move(kv), step));
}

LoadedModel load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    TrainConfig config;
    try {
        config = TrainConfig::from_kv(ckpt.config);
    } catch (const Error& e) {
        throw Error("CheckpointMismatch", std::string("stored configuration is invalid: ") + e.what());
    }
    LoadedModel out{config, Denoiser{config.denoiser}, ckpt.step};
    restore(out.model.params(), ckpt);
    return out;
}

// ---------------------------------------------------------------- sampling

SampleOptions SampleOptions::from(const TrainConfig& config) {
    SampleOptions o;
    o.steps = config.flow.steps;
    o.rho_min = config.coarsening.rho_min;
    o.rho_max = config.coarsening.rho_max;
    o.perturb = config.flow.perturb;
    o.perturb_radius = config.flow.perturb_radius;
    o.perturb_p = config.flow.perturb_p;
    return o;
}

Index num_additions(double rho, Index n, Index target) {
    if (n >= target) return 0;
    if (!(rho >= 0.0 && rho < 1.0)) throw Error("OutOfRange", "rho must lie in [0, 1)");
    const double x = rho * static_cast<double>(n) / (1.0 - rho);
    const auto k = static_cast<Index>(std::ceil(x - 1e-9));
    return std::min(std::max<Index>(k, 1), target - n);
}

std::vector<Index> select_expansions(const Vector& scores, const std::vector<Budget>& budgets, Index n_plus) {
    if (scores.size() != static_cast<Index>(budgets.size()))
        throw Error("ShapeMismatch", "one score per left node expected");
    std::vector<Index> candidates;
    for (Index i = 0; i < scores.size(); ++i)
        if (budgets[static_cast<std::size_t>(i)] >= 2) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
    std::vector<Index> v(budgets.size(), 1);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max<Index>(n_plus, 0)), candidates.size());
    for (std::size_t k = 0; k < take; ++k) v[static_cast<std::size_t>(candidates[k])] = 2;
    return v;
}

void apply_inpainting(FlowState& x, const BipartiteGraph& expanded, bool first_step) {
    Matrix& split = x[HeadKind::BudgetSplit];
    Matrix& fl = x[HeadKind::LeftFeature];
    const bool left_features = expanded.left_feature_dim() > 0;
    for (const auto& group : sibling_groups(expanded.cluster_of_left(), expanded.num_left())) {
        if (group.size() == 1) {
            const Index i = group[0];
            split(i, 0) = encode_split(1.0);
            if (left_features) fl.row(i) = expanded.left_features().row(i);
            continue;
        }
        Vector f(static_cast<Index>(group.size()));
        if (expanded.left_budgets()[static_cast<std::size_t>(group[0])] == 2) {
            f.setConstant(1.0 / static_cast<double>(group.size()));
        } else {
            for (std::size_t k = 0; k < group.size(); ++k) f[static_cast<Index>(k)] = decode_split(split(group[k], 0));
            f = simplex_project(f);
        }
        for (std::size_t k = 0; k < group.size(); ++k) split(group[k], 0) = encode_split(f[static_cast<Index>(k)]);
    }
    if (expanded.right_feature_dim() > 0) {
        Matrix& fr = x[HeadKind::RightFeature];
        for (const auto& group : sibling_groups(expanded.cluster_of_right(), expanded.num_right()))
            if (group.size() == 1) fr.row(group[0]) = expanded.right_features().row(group[0]);
    }
    if (first_step) x[HeadKind::EdgeKeep].setConstant(encode_edge_keep(true));
}

Hypergraph sample_hypergraph(const Denoiser& model, Index target, const SampleOptions& options, Rng& rng,
                             SampleTrace* trace) {
    if (target < 1) throw Error("OutOfRange", "target node count must be >= 1");
    if (options.steps < 1) throw Error("InvalidConfig", "flow steps must be >= 1");
    if (!(options.rho_min >= 0.0 && options.rho_min <= options.rho_max && options.rho_max < 1.0))
        throw Error("InvalidConfig", "need 0 <= rho_min <= rho_max < 1");
    const DenoiserConfig& mc = model.config();
    const Index cap = options.max_iterations > 0
                          ? options.max_iterations
                          : 4 * static_cast<Index>(std::ceil(std::log2(static_cast<double>(target)))) + 16;

    BipartiteGraph current = minimal_bipartite(target, mc.left_feature_dim, mc.right_feature_dim);
    ExpansionVectors v = ExpansionVectors::ones(current);
    if (trace) {
        *trace = {};
        trace->budget_sums.push_back(current.total_budget());
        trace->left_counts.push_back(current.num_left());
    }
    std::uniform_real_distribution<double> draw_rho(options.rho_min, options.rho_max);
    bool first = true;
    Index iterations = 0;
    while (current.num_left() < target) {
        if (++iterations > cap)
            throw Error("SamplingStalled", "reached " + std::to_string(target) + "-node target only up to " +
                                               std::to_string(current.num_left()) + " nodes after " +
                                               std::to_string(cap) + " iterations");
        BipartiteGraph expanded = options.perturb
                                      ? perturb_expand(current, v, options.perturb_radius, options.perturb_p, rng)
                                      : expand(current, v);
        const Index n = expanded.num_left();
        const Index n_plus = num_additions(draw_rho(rng), n, target);
        const double rho_hat = 1.0 - static_cast<double>(n) / static_cast<double>(n + n_plus);

        FlowState start = sample_noise(expanded, rng);
        DenoiserInput input =
            make_denoiser_input(current, std::move(expanded), FlowState{}, target, rho_hat, mc.spectral_k, rng);
        const BipartiteGraph& g = input.graph;
        auto predict = [&](const FlowState& s) {
            input.state = s;
            return model.predict(input);
        };
        auto project = [&](FlowState& s) { apply_inpainting(s, g, first); };
        const FlowState x1 = integrate(predict, std::move(start), options.steps, project);

        RefinementDecision d;
        d.edge_keep.resize(static_cast<std::size_t>(g.num_edges()));
        for (Index e = 0; e < g.num_edges(); ++e)
            d.edge_keep[static_cast<std::size_t>(e)] = decode_edge_keep(x1[HeadKind::EdgeKeep](e, 0)) ? 1 : 0;
        d.budget_split.resize(g.num_left());
        for (Index i = 0; i < g.num_left(); ++i) d.budget_split[i] = decode_split(x1[HeadKind::BudgetSplit](i, 0));
        d.left_features = x1[HeadKind::LeftFeature];
        d.right_features = x1[HeadKind::RightFeature];
        const BipartiteGraph refined = refine(g, d);
        if (refined.total_budget() != target)
            throw Error("Internal", "budget drifted to " + std::to_string(refined.total_budget()));

        std::vector<Index> kept;
        current = drop_empty_right(refined, kept);
        v.left = select_expansions(x1[HeadKind::LeftExpansion].col(0), current.left_budgets(), n_plus);
        v.right.clear();
        for (Index j : kept) v.right.push_back(decode_right_expansion(x1[HeadKind::RightExpansion](j, 0)));
        first = false;
        if (trace) {
            trace->budget_sums.push_back(current.total_budget());
            trace->left_counts.push_back(current.num_left());
        }
    }
    if (trace) trace->iterations = iterations;
    return collapse_unique(current);
}

std::vector<Hypergraph> sample_many(const Denoiser& model, Index target, Index count, const SampleOptions& options,
                                    std::uint64_t seed, Index threads) {
    if (count < 0) throw Error("OutOfRange", "count must be >= 0");
    std::vector<Hypergraph> out(static_cast<std::size_t>(count));
    auto work = [&](Index i) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(i)};
        Rng rng(seq);
        out[static_cast<std::size_t>(i)] = sample_hypergraph(model, target, options, rng);
    };
    threads = std::clamp<Index>(threads, 1, std::max<Index>(count, 1));
    if (threads == 1) {
        for (Index i = 0; i < count; ++i) work(i);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (Index t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (Index i = t; i < count; i += threads) work(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

void retain_heap_memory() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace hyperforge
