// denoiser.hpp - endpoint-prediction network over expanded bipartite graphs
#pragma once

#include <array>
#include <span>

#include "hyperforge/autodiff.hpp"
#include "hyperforge/flow.hpp"
#include "hyperforge/hypergraph.hpp"
#include "hyperforge/spectral.hpp"

namespace hyperforge {

struct DenoiserConfig {
    Index hidden_dim = 64;
    Index num_layers = 4;
    Index spectral_k = 8;  // 0 switches to random node embeddings
    Index budget_encoding_dim = 32;
    double budget_base_freq = 1e-4;
    Index mlp_hidden = 32;  // width of the per-eigenvector sign-invariant map
    Index left_feature_dim = 0;
    Index right_feature_dim = 0;
    double head_init_scale = 1e-2;

    void validate() const;
};

// Interleaved sin/cos encoding: column 2i holds sin(b * w_i) and column
// 2i + 1 holds cos(b * w_i) with w_i = base_freq^(2i / dim).
Matrix budget_encoding(std::span<const Budget> budgets, Index dim = 32, double base_freq = 1e-4);

// Random embedding width used when spectral_k is 0.
inline constexpr Index kRandomEmbeddingDim = 8;

struct DenoiserInput {
    // Expanded graph with sibling maps; budgets and features are the ones
    // inherited from the parents.
    BipartiteGraph graph;
    FlowState state;
    // Spectral basis of the parent graph (parent left nodes first) and the
    // parent left count, used to replicate embeddings onto children.
    SpectralBasis parent_basis;
    Index parent_left = 0;
    Index target_size = 1;
    double rho_hat = 0.0;
};

// Computes the parent basis (or random embeddings when k = 0) and bundles the
// remaining inputs.
DenoiserInput make_denoiser_input(const BipartiteGraph& parent, BipartiteGraph expanded, FlowState state,
                                  Index target_size, double rho_hat, Index spectral_k, Rng& rng);

// Row index into the parent basis for every expanded node, left then right.
std::vector<Index> replication_index(const DenoiserInput& in);

class Denoiser {
public:
    explicit Denoiser(DenoiserConfig config, std::uint64_t seed = 0);

    const DenoiserConfig& config() const { return config_; }
    ad::ParameterStore& params() { return params_; }
    const ad::ParameterStore& params() const { return params_; }

    // Endpoint predictions for all six heads, recorded on the tape.
    std::array<ad::Var, kNumHeads> forward(ad::Tape& tape, const DenoiserInput& in) const;
    // Forward without gradient bookkeeping.
    FlowState predict(const DenoiserInput& in) const;

    // Sign-invariant embedding of every basis row (parent nodes), then
    // gathered to the rows listed in `replicate`.
    ad::Var spectral_embed(ad::Tape& tape, const SpectralBasis& basis, const std::vector<Index>& replicate) const;
    Matrix spectral_embedding(const SpectralBasis& basis, const std::vector<Index>& replicate) const;

private:
    void add_linear(const std::string& name, Index in, Index out, Rng& rng, double scale = 1.0, double bias = 0.0);
    ad::Var linear(ad::Tape& tape, const std::string& name, ad::Var x) const;

    DenoiserConfig config_;
    ad::ParameterStore params_;
};

}  // namespace hyperforge
