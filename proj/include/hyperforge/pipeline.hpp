// pipeline.hpp - training loop, size-controlled sampling and run configuration
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperforge/autodiff.hpp"
#include "hyperforge/coarsening.hpp"
#include "hyperforge/datasets.hpp"
#include "hyperforge/denoiser.hpp"
#include "hyperforge/flow.hpp"

namespace hyperforge {

struct FlowConfig {
    Index steps = 25;
    bool perturb = true;  // random extra edges on every expansion
    Index perturb_radius = 2;
    double perturb_p = 0.5;

    void validate() const;
};

// Run configuration. Stored as plain "key = value" lines; see to_kv() for
// the key names.
struct TrainConfig {
    std::filesystem::path data_dir;  // dataset directory; generated from `dataset` when empty
    DatasetSpec dataset;
    CoarseningParams coarsening;
    DenoiserConfig denoiser;
    FlowConfig flow;
    ad::AdamConfig adam{.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip_norm = 1.0};
    double final_lr_ratio = 1.0;  // cosine decay from lr to lr * ratio over max_steps
    Index max_steps = 1000;
    Index batch_size = 8;
    std::uint64_t seed = 0;
    Index checkpoint_every = 0;  // 0 writes only the final checkpoint
    Index eval_every = 0;        // 0 disables validation
    Index log_window = 50;       // steps averaged into the running loss
    std::filesystem::path out_dir;

    void validate() const;
    std::map<std::string, std::string> to_kv() const;
    // Unknown keys and unparsable values throw Error("InvalidConfig").
    static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
    static TrainConfig load(const std::filesystem::path& path);
};

// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_kv(const std::string& text);
std::string format_kv(const std::map<std::string, std::string>& kv);

// One supervised expansion step taken from a coarsening sequence.
struct TrainingExample {
    DenoiserInput input;  // input.state holds the noisy state x_t
    FlowState target;     // encoded endpoints x_1
    std::array<Matrix, kNumHeads> mask;  // 0x0 means every entry counts
    Index level = 0;
};

// Clean targets for `level` (0 = finest). The coarsest level is supervised
// from the minimal graph. input.state is left empty.
TrainingExample build_example(const CoarseningSequence& seq, Index level, Index target_size, const FlowConfig& flow,
                              Index spectral_k, Rng& rng);
// Draws t ~ U[0, 1) and prior noise (coupled within sibling groups) and
// writes the interpolated state.
void noise_example(TrainingExample& ex, Rng& rng);
// Sum over heads of the masked endpoint MSE.
ad::Var example_loss(ad::Tape& tape, const Denoiser& model, const TrainingExample& ex);

struct TrainStats {
    std::vector<double> losses;  // mean batch loss per step
    std::vector<double> running;  // mean over the last log_window steps
    std::optional<double> best_val;
};

class Trainer {
public:
    Trainer(TrainConfig config, std::vector<Hypergraph> train, std::vector<Hypergraph> val = {});

    // One optimizer step over batch_size examples; returns the mean loss.
    // Throws Error("NonFinite") after writing a state dump when out_dir is set.
    double step();
    // Runs until max_steps, writing loss.csv and checkpoints into out_dir
    // when it is set.
    const TrainStats& run(const std::function<void(Index, double)>& on_step = {});
    // Mean loss over fixed examples from the validation graphs.
    double validation_loss() const;

    const TrainConfig& config() const { return config_; }
    const Denoiser& model() const { return model_; }
    Denoiser& model() { return model_; }
    const TrainStats& stats() const { return stats_; }
    Index steps_done() const { return static_cast<Index>(stats_.losses.size()); }

private:
    TrainConfig config_;
    std::vector<Hypergraph> val_;
    CoarseningCache cache_;
    Denoiser model_;
    ad::Adam adam_;
    Rng rng_;
    TrainStats stats_;
};

// Feature widths are taken from the first training graph.
TrainConfig with_feature_dims(TrainConfig config, const std::vector<Hypergraph>& graphs);

void save_model(const std::filesystem::path& path, const TrainConfig& config, const Denoiser& model,
                std::int64_t step);
struct LoadedModel {
    TrainConfig config;
    Denoiser model;
    std::int64_t step = 0;
};
// Throws Error("CheckpointMismatch") when the stored tensors do not fit the
// stored configuration.
LoadedModel load_model(const std::filesystem::path& path);

struct SampleOptions {
    Index steps = 25;
    double rho_min = 0.1;
    double rho_max = 0.3;
    bool perturb = true;
    Index perturb_radius = 2;
    double perturb_p = 0.5;
    Index max_iterations = 0;  // 0 means 4 * ceil(log2 N) + 16

    static SampleOptions from(const TrainConfig& config);
};

struct SampleTrace {
    std::vector<Budget> budget_sums;  // after every refinement, starting with the minimal graph
    std::vector<Index> left_counts;
    Index iterations = 0;
};

// Smallest n+ with n+ = ceil(rho (n + n+)), at least 1 while n < N, capped
// at N - n.
Index num_additions(double rho, Index n, Index target);
// Expansion factors: the n_plus highest scores among nodes with budget >= 2
// get 2 (ties go to the lower index), everything else 1.
std::vector<Index> select_expansions(const Vector& scores, const std::vector<Budget>& budgets, Index n_plus);
// Endpoint constraints: singleton splits fixed to 1, budget-2 pairs split
// evenly, other pairs projected onto the simplex, features of unexpanded
// nodes copied from the parent, and every edge kept on the first step.
void apply_inpainting(FlowState& endpoints, const BipartiteGraph& expanded, bool first_step);

// Generates one hypergraph with exactly `target` nodes. Throws
// Error("SamplingStalled") past the iteration cap.
Hypergraph sample_hypergraph(const Denoiser& model, Index target, const SampleOptions& options, Rng& rng,
                             SampleTrace* trace = nullptr);
// Sample i uses its own generator seeded from (seed, i).
std::vector<Hypergraph> sample_many(const Denoiser& model, Index target, Index count, const SampleOptions& options,
                                    std::uint64_t seed, Index threads = 1);

// Keeps freed heap memory mapped between denoiser calls instead of returning
// it to the OS after every tape. No effect outside glibc.
void retain_heap_memory();

}  // namespace hyperforge
