// spectral.hpp - normalized Laplacian and smallest non-zero eigenpairs
#pragma once

#include "hyperforge/hypergraph.hpp"

namespace hyperforge {

// Eigenvalues at or below this are treated as zero.
inline constexpr double kZeroEigenvalue = 1e-8;
// Graphs with at least this many nodes use Lanczos instead of a dense solver.
inline constexpr Index kDenseEigenLimit = 128;

struct SpectralBasis {
    Vector eigenvalues;   // k entries, ascending; zero padded
    Matrix eigenvectors;  // (num nodes) x k, unit columns; zero padded
};

// L = I - D^-1/2 A D^-1/2 over the bipartite adjacency, left nodes first.
// Isolated nodes get a zero row and column.
Matrix normalized_laplacian(const BipartiteGraph& b);

// k smallest eigenpairs with eigenvalue > kZeroEigenvalue, by dense
// decomposition. Throws Error("NotSymmetric") for asymmetric input.
SpectralBasis smallest_nonzero_eigs(const Matrix& laplacian, Index k);

// Same contract as smallest_nonzero_eigs(normalized_laplacian(b), k) but
// switches to a shift-invert Lanczos iteration on large graphs.
SpectralBasis spectral_basis(const BipartiteGraph& b, Index k);

// Lanczos path, exposed for testing against the dense solver.
SpectralBasis spectral_basis_lanczos(const BipartiteGraph& b, Index k);

}  // namespace hyperforge
