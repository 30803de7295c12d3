// metrics.hpp - distribution distances, validity predicates and reports
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyperforge/datasets.hpp"
#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

// W1 between two empirical distributions (inverse-CDF integral).
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

inline constexpr Index kSpectralBins = 64;
// Normalised histogram (sums to 1) of the star-expansion normalised
// Laplacian eigenvalues over [0, 2].
Vector eigenvalue_histogram(const Hypergraph& h);
// Median of pairwise Euclidean distances between all histograms; falls back
// to 1 when every pair coincides.
double median_bandwidth(std::span<const Vector> hists);
// Biased squared MMD with k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
double mmd_squared(std::span<const Vector> a, std::span<const Vector> b, double sigma);
double spectral_mmd(std::span<const Hypergraph> a, std::span<const Hypergraph> b);

// Left degrees of the star expansion (hyperedges per node).
std::vector<double> degree_values(std::span<const Hypergraph> graphs);
// Right degrees of the star expansion (nodes per hyperedge).
std::vector<double> edge_size_values(std::span<const Hypergraph> graphs);

// Mean |n_i - target_i|.
double node_num_diff(std::span<const Hypergraph> generated, std::span<const Index> targets);

bool valid_tree(const Hypergraph& h);
bool valid_ego(const Hypergraph& h);
bool valid_sbm(const Hypergraph& h);
// Dispatches on kind; throws Error("UnknownKind") for meshes.
bool is_valid(DatasetKind kind, const Hypergraph& h);

// Area-uniform surface samples of a triangle mesh (positions in the node
// features). Throws Error("DegenerateMesh") for zero total area.
Matrix sample_surface(const Hypergraph& mesh, Index count, std::uint64_t seed);
// Mean nearest-neighbour distance from a to b plus from b to a.
double chamfer(const Matrix& a, const Matrix& b);
// Smallest Chamfer distance to any reference; all meshes use the same seed.
double chamfer_nearest(const Hypergraph& mesh, std::span<const Hypergraph> references, Index count = 1024,
                       std::uint64_t seed = 0);

struct MetricReport {
    double node_num_diff = 0.0;
    double degree_wasserstein = 0.0;
    double edge_size_wasserstein = 0.0;
    double spectral_mmd = 0.0;
    std::optional<double> validity_fraction;
    std::optional<double> chamfer_nearest;
    Index num_generated = 0;
    Index num_isolated = 0;  // generated graphs containing a node in no hyperedge

    std::string to_json() const;
};

// targets may be empty, in which case generated graph i is compared with
// reference i modulo the reference count.
MetricReport evaluate(std::span<const Hypergraph> generated, std::span<const Hypergraph> reference, DatasetKind kind,
                      std::span<const Index> targets = {});

}  // namespace hyperforge
