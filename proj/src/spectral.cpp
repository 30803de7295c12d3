// spectral.cpp - normalized Laplacian, dense and Lanczos eigenpairs
#include "hyperforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

namespace hyperforge {

namespace {

std::vector<double> bipartite_degrees(const BipartiteGraph& b) {
    std::vector<double> deg(static_cast<std::size_t>(b.num_nodes()), 0.0);
    for (const auto& e : b.edges()) {
        deg[static_cast<std::size_t>(e.left)] += 1.0;
        deg[static_cast<std::size_t>(b.num_left() + e.right)] += 1.0;
    }
    return deg;
}

SpectralBasis pad_basis(Index rows, Index k, const std::vector<double>& values,
                        const std::vector<Vector>& vectors) {
    SpectralBasis basis;
    basis.eigenvalues = Vector::Zero(k);
    basis.eigenvectors = Matrix::Zero(rows, k);
    for (std::size_t i = 0; i < values.size() && static_cast<Index>(i) < k; ++i) {
        basis.eigenvalues[static_cast<Index>(i)] = values[i];
        basis.eigenvectors.col(static_cast<Index>(i)) = vectors[i];
    }
    return basis;
}

}  // namespace

Matrix normalized_laplacian(const BipartiteGraph& b) {
    const Index n = b.num_nodes();
    const auto deg = bipartite_degrees(b);
    Matrix lap = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        if (deg[static_cast<std::size_t>(i)] > 0) lap(i, i) = 1.0;
    }
    for (const auto& e : b.edges()) {
        const Index i = e.left;
        const Index j = b.num_left() + e.right;
        const double w = -1.0 / std::sqrt(deg[static_cast<std::size_t>(i)] * deg[static_cast<std::size_t>(j)]);
        lap(i, j) = w;
        lap(j, i) = w;
    }
    return lap;
}

SpectralBasis smallest_nonzero_eigs(const Matrix& laplacian, Index k) {
    if (laplacian.rows() != laplacian.cols()) {
        throw Error("NotSymmetric", "Laplacian must be square");
    }
    if (k < 0) throw Error("InvalidArgument", "k must be non-negative");
    const Index n = laplacian.rows();
    const double scale = std::max(1.0, laplacian.cwiseAbs().maxCoeff());
    if (n > 0 && (laplacian - laplacian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error("NotSymmetric", "Laplacian is not symmetric");
    }
    if (n == 0 || k == 0) return pad_basis(n, k, {}, {});

    const Eigen::MatrixXd dense = laplacian;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    const Vector& evals = solver.eigenvalues();  // ascending
    std::vector<double> values;
    std::vector<Vector> vectors;
    for (Index i = 0; i < n && static_cast<Index>(values.size()) < k; ++i) {
        if (evals[i] > kZeroEigenvalue) {
            values.push_back(evals[i]);
            vectors.emplace_back(solver.eigenvectors().col(i).normalized());
        }
    }
    return pad_basis(n, k, values, vectors);
}

SpectralBasis spectral_basis(const BipartiteGraph& b, Index k) {
    if (b.num_nodes() >= kDenseEigenLimit) return spectral_basis_lanczos(b, k);
    return smallest_nonzero_eigs(normalized_laplacian(b), k);
}

SpectralBasis spectral_basis_lanczos(const BipartiteGraph& b, Index k) {
    const Index n = b.num_nodes();
    if (n == 0 || k == 0) return pad_basis(n, k, {}, {});
    const auto deg = bipartite_degrees(b);

    std::vector<Eigen::Triplet<double>> entries;
    for (Index i = 0; i < n; ++i) {
        if (deg[static_cast<std::size_t>(i)] > 0) entries.emplace_back(i, i, 1.0);
    }
    for (const auto& e : b.edges()) {
        const Index i = e.left;
        const Index j = b.num_left() + e.right;
        const double w = -1.0 / std::sqrt(deg[static_cast<std::size_t>(i)] * deg[static_cast<std::size_t>(j)]);
        entries.emplace_back(i, j, w);
        entries.emplace_back(j, i, w);
    }
    Eigen::SparseMatrix<double> lap(n, n);
    lap.setFromTriplets(entries.begin(), entries.end());

    // Shift-invert: the smallest eigenvalues of L become the largest of
    // (L + shift I)^-1, where Lanczos converges quickly.
    constexpr double shift = 1e-2;
    Eigen::SparseMatrix<double> shifted = lap;
    for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(shifted);
    if (factor.info() != Eigen::Success) throw Error("EigenFailure", "sparse factorization failed");

    // Known null space of L: D^1/2 1 on every component with edges, plus the
    // unit vector of every isolated node.
    std::vector<Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (const auto& e : b.edges()) {
        const Index a = find(e.left);
        const Index c = find(b.num_left() + e.right);
        if (a != c) parent[static_cast<std::size_t>(std::max(a, c))] = std::min(a, c);
    }
    std::map<Index, Vector> null_by_root;
    for (Index i = 0; i < n; ++i) {
        auto [it, inserted] = null_by_root.try_emplace(find(i), Vector::Zero(n));
        it->second[i] = deg[static_cast<std::size_t>(i)] > 0 ? std::sqrt(deg[static_cast<std::size_t>(i)]) : 1.0;
    }
    std::vector<Vector> deflate;
    for (auto& [root, v] : null_by_root) deflate.push_back(v.normalized());

    Rng rng(0x5eed);
    std::normal_distribution<double> normal;

    // Plain Lanczos finds one copy of a repeated eigenvalue per run, so
    // converged Ritz pairs are locked and deflated and the run is repeated
    // until a pass turns up nothing below the current k-th value.
    std::vector<double> locked_values;
    std::vector<Vector> locked_vectors;
    for (Index pass = 0; pass < k + 3; ++pass) {
        std::vector<Vector> fixed = deflate;
        fixed.insert(fixed.end(), locked_vectors.begin(), locked_vectors.end());
        const Index dim = n - static_cast<Index>(fixed.size());
        if (dim <= 0) break;
        const Index steps = std::min(dim, std::max<Index>(6 * k, 60));

        auto orthogonalise = [&](Vector& v, const std::vector<Vector>& basis) {
            for (int rep = 0; rep < 2; ++rep) {
                for (const auto& q : fixed) v -= q.dot(v) * q;
                for (const auto& q : basis) v -= q.dot(v) * q;
            }
        };

        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = normal(rng);
        std::vector<Vector> basis;
        std::vector<double> alpha;
        std::vector<double> beta;
        orthogonalise(v, basis);
        v.normalize();
        for (Index step = 0; step < steps; ++step) {
            basis.push_back(v);
            Vector w = factor.solve(v);
            alpha.push_back(v.dot(w));
            orthogonalise(w, basis);
            const double bnorm = w.norm();
            if (bnorm < 1e-12 || step + 1 == steps) break;
            beta.push_back(bnorm);
            v = w / bnorm;
        }

        const Index m = static_cast<Index>(alpha.size());
        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
        for (Index i = 0; i < m; ++i) {
            tri(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < m) {
                tri(i, i + 1) = beta[static_cast<std::size_t>(i)];
                tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(tri);
        Eigen::MatrixXd q(n, m);
        for (Index i = 0; i < m; ++i) q.col(i) = basis[static_cast<std::size_t>(i)];

        const double kth = static_cast<Index>(locked_values.size()) >= k
                               ? *std::max_element(locked_values.begin(), locked_values.end())
                               : 3.0;
        Index added = 0;
        for (Index i = m - 1; i >= 0 && added < k; --i) {
            const double theta = solver.eigenvalues()[i];
            if (theta <= 0.0) break;
            const double lambda = 1.0 / theta - shift;
            if (lambda >= kth) break;
            Vector x = (q * solver.eigenvectors().col(i)).normalized();
            const double rayleigh = x.dot(lap * x);
            if ((lap * x - rayleigh * x).norm() > 1e-8) break;
            if (rayleigh <= kZeroEigenvalue) continue;
            locked_values.push_back(rayleigh);
            locked_vectors.push_back(std::move(x));
            ++added;
        }
        if (added == 0) break;
    }

    std::vector<std::size_t> order(locked_values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return locked_values[a] < locked_values[c]; });
    std::vector<double> values;
    std::vector<Vector> vectors;
    for (std::size_t i : order) {
        values.push_back(locked_values[i]);
        vectors.push_back(locked_vectors[i]);
    }
    return pad_basis(n, k, values, vectors);
}

}  // namespace hyperforge
