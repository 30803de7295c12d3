// flow.hpp - flow-matching kernels: priors, interpolation, projection, coupling
#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hyperforge/types.hpp"

namespace hyperforge {

enum class HeadKind { LeftExpansion, RightExpansion, EdgeKeep, BudgetSplit, LeftFeature, RightFeature };
inline constexpr std::size_t kNumHeads = 6;
inline constexpr std::array<HeadKind, kNumHeads> kAllHeads = {
    HeadKind::LeftExpansion, HeadKind::RightExpansion, HeadKind::EdgeKeep,
    HeadKind::BudgetSplit,   HeadKind::LeftFeature,    HeadKind::RightFeature};

enum class PriorKind { Gaussian, Dirichlet };
enum class TargetEncoding { Binary, Ternary, Simplex, Raw };

struct FlowHeadSpec {
    HeadKind head = HeadKind::LeftExpansion;
    PriorKind prior = PriorKind::Gaussian;
    double alpha = 1.5;
    TargetEncoding encoding = TargetEncoding::Binary;

    static FlowHeadSpec for_head(HeadKind head);
};

const char* head_name(HeadKind head);
inline std::size_t head_index(HeadKind head) { return static_cast<std::size_t>(head); }

// One matrix per head, rows aligned to left nodes, right nodes or edges of an
// expanded graph.
struct FlowState {
    double t = 0.0;
    std::array<Matrix, kNumHeads> heads;

    Matrix& operator[](HeadKind h) { return heads[head_index(h)]; }
    const Matrix& operator[](HeadKind h) const { return heads[head_index(h)]; }
};

// Target encodings.
double encode_left_expansion(Index children);   // 1 -> -1, 2 -> 1
double encode_right_expansion(Index children);  // 1 -> -1, 2 -> 0, 3 -> 1
double encode_edge_keep(bool keep);             // 0 -> -1, 1 -> 1
double encode_split(double fraction);           // f -> 2f - 1
double decode_split(double value);
// Thresholds the count x + 2 at 1.66 and 2.33.
Index decode_right_expansion(double value);
// Keep iff (x + 1) / 2 > 0.5.
bool decode_edge_keep(double value);

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t);

inline constexpr double kTerminalEpsilon = 1e-5;
// (x1_hat - x_t) / (1 - t). Throws Error("TerminalTime") when t >= 1 - 1e-5.
Matrix endpoint_velocity(const Matrix& x_t, const Matrix& x1_hat, double t);

// Mean squared error over entries with mask != 0. An empty mask (0x0) means
// all entries. Returns 0 when nothing is selected.
double fm_loss(const Matrix& pred, const Matrix& target, const Matrix& mask = {});

// Gaussian heads: i.i.d. N(0, 1). Dirichlet heads: one Dirichlet(alpha) draw
// per sibling group (group_of maps rows to groups, size 1 or 2), mapped by
// 2x - 1. Singleton groups get 1.
Matrix sample_prior(const FlowHeadSpec& spec, Index rows, Index cols, std::span<const Index> group_of, Rng& rng);

// Euclidean projection onto the probability simplex.
Vector simplex_project(const Vector& z);

// Row-wise noise/target pair for the coupling: columns are the concatenated
// per-head values of each left node.
// Within every sibling group (at most 3 rows) reassigns the noise rows to the
// permutation with the smallest summed squared distance to the targets; the
// identity wins ties. Returns the number of groups that changed. Throws
// Error("InvalidGroup") for larger groups.
Index ot_couple(std::span<const Index> group_of, Matrix& noise, const Matrix& targets);
// Assignment for a single group of at most 3 rows: noise row perm[i] goes to
// target row i, minimising the summed squared distance; identity on ties.
std::vector<Index> best_assignment(const Matrix& noise, const Matrix& targets);

// Endpoint predictor used by the integrator: returns predicted endpoints for
// every head given the current state.
using EndpointPredictor = std::function<FlowState(const FlowState&)>;
// Applied to every prediction before it is used (inpainting, simplex).
using EndpointProjector = std::function<void(FlowState&)>;

// Explicit Euler on t_i = i / steps. The last step jumps to the predicted
// endpoint. Throws Error("NonFinite") on NaN/inf.
FlowState integrate(const EndpointPredictor& predict, FlowState state, Index steps,
                    const EndpointProjector& project = {});

}  // namespace hyperforge
