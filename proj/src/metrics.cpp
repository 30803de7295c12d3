// metrics.cpp - evaluation metrics and validity predicates
#include "hyperforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "hyperforge/spectral.hpp"
#include "json.hpp"

namespace hyperforge {

double wasserstein_1d(std::span<const double> a_in, std::span<const double> b_in) {
    if (a_in.empty() || b_in.empty()) throw Error("EmptyInput", "wasserstein_1d needs non-empty samples");
    std::vector<double> a(a_in.begin(), a_in.end());
    std::vector<double> b(b_in.begin(), b_in.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto na = static_cast<std::size_t>(a.size());
    const auto nb = static_cast<std::size_t>(b.size());
    // Walk the merged quantile breakpoints i/na and j/nb.
    std::size_t i = 0;
    std::size_t j = 0;
    double u = 0.0;
    double total = 0.0;
    while (i < na && j < nb) {
        const std::size_t ka = (i + 1) * nb;
        const std::size_t kb = (j + 1) * na;
        const double next = static_cast<double>(std::min(ka, kb)) / static_cast<double>(na * nb);
        total += std::abs(a[i] - b[j]) * (next - u);
        u = next;
        if (ka <= kb) ++i;
        if (kb <= ka) ++j;
    }
    return total;
}

Vector eigenvalue_histogram(const Hypergraph& h) {
    Vector hist = Vector::Zero(kSpectralBins);
    const BipartiteGraph b = star_expand(h);
    if (b.num_nodes() == 0) return hist;
    const Eigen::MatrixXd lap = normalized_laplacian(b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw Error("EigenFailure", "eigenvalue solver did not converge");
    for (Index i = 0; i < solver.eigenvalues().size(); ++i) {
        const double lam = std::clamp(solver.eigenvalues()[i], 0.0, 2.0);
        const auto bin = std::min<Index>(kSpectralBins - 1, static_cast<Index>(lam / 2.0 * kSpectralBins));
        hist[bin] += 1.0;
    }
    return hist / hist.sum();
}

double median_bandwidth(std::span<const Vector> hists) {
    std::vector<double> d;
    for (std::size_t i = 0; i < hists.size(); ++i)
        for (std::size_t j = i + 1; j < hists.size(); ++j) d.push_back((hists[i] - hists[j]).norm());
    if (d.empty()) return 1.0;
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size() / 2;
    const double median = d.size() % 2 == 1 ? d[m] : 0.5 * (d[m - 1] + d[m]);
    return median > 0.0 ? median : 1.0;
}

double mmd_squared(std::span<const Vector> a, std::span<const Vector> b, double sigma) {
    if (a.empty() || b.empty()) throw Error("EmptyInput", "MMD needs two non-empty sets");
    if (!(sigma > 0.0)) throw Error("InvalidArgument", "bandwidth must be positive");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    auto mean_kernel = [&](std::span<const Vector> x, std::span<const Vector> y) {
        double s = 0.0;
        for (const auto& p : x)
            for (const auto& q : y) s += std::exp(-(p - q).squaredNorm() * inv);
        return s / static_cast<double>(x.size() * y.size());
    };
    return std::max(0.0, mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b));
}

double spectral_mmd(std::span<const Hypergraph> a, std::span<const Hypergraph> b) {
    if (a.empty() || b.empty()) throw Error("EmptyInput", "spectral_mmd needs two non-empty sets");
    std::vector<Vector> ha;
    std::vector<Vector> hb;
    for (const auto& h : a) ha.push_back(eigenvalue_histogram(h));
    for (const auto& h : b) hb.push_back(eigenvalue_histogram(h));
    std::vector<Vector> all = ha;
    all.insert(all.end(), hb.begin(), hb.end());
    return mmd_squared(ha, hb, median_bandwidth(all));
}

std::vector<double> degree_values(std::span<const Hypergraph> graphs) {
    std::vector<double> out;
    for (const auto& h : graphs)
        for (Index d : h.node_degrees()) out.push_back(static_cast<double>(d));
    return out;
}

std::vector<double> edge_size_values(std::span<const Hypergraph> graphs) {
    std::vector<double> out;
    for (const auto& h : graphs)
        for (Index s : h.hyperedge_sizes()) out.push_back(static_cast<double>(s));
    return out;
}

double node_num_diff(std::span<const Hypergraph> generated, std::span<const Index> targets) {
    if (generated.empty()) throw Error("EmptyInput", "node_num_diff needs generated graphs");
    if (generated.size() != targets.size()) throw Error("ShapeMismatch", "one target size per generated graph");
    double s = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i)
        s += std::abs(static_cast<double>(generated[i].num_nodes() - targets[i]));
    return s / static_cast<double>(generated.size());
}

namespace {

Index find_root(std::vector<Index>& parent, Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

double choose(Index n, Index k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

}  // namespace

bool valid_tree(const Hypergraph& h) {
    const Index n = h.num_nodes();
    if (n == 0) return false;
    Index components = 0;
    connected_components(clique_expand(h), &components);
    if (components != 1) return false;
    // A forest check on the incidence graph: nodes 0..n-1, hyperedges after.
    std::vector<Index> parent(static_cast<std::size_t>(n + h.num_hyperedges()));
    std::iota(parent.begin(), parent.end(), Index{0});
    for (Index e = 0; e < h.num_hyperedges(); ++e) {
        for (Index v : h.hyperedge(e)) {
            const Index a = find_root(parent, v);
            const Index b = find_root(parent, n + e);
            if (a == b) return false;
            parent[static_cast<std::size_t>(a)] = b;
        }
    }
    return true;
}

bool valid_ego(const Hypergraph& h) {
    if (h.num_hyperedges() == 0) return false;
    std::vector<Index> count(static_cast<std::size_t>(h.num_nodes()), 0);
    for (const auto& e : h.hyperedges())
        for (Index v : e) ++count[static_cast<std::size_t>(v)];
    return std::find(count.begin(), count.end(), h.num_hyperedges()) != count.end();
}

bool valid_sbm(const Hypergraph& h) {
    const Index n = h.num_nodes();
    if (n < 4 || h.num_hyperedges() == 0) return false;
    // Regularised spectral bipartition of the clique expansion.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [uv, w] : clique_expand(h).weighted_edges) {
        a(uv.first, uv.second) = w;
        a(uv.second, uv.first) = w;
    }
    const double tau = a.sum() / static_cast<double>(n);
    if (!(tau > 0.0)) return false;
    a.array() += tau / static_cast<double>(n);
    const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
    const Eigen::MatrixXd m = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) return false;
    const Eigen::VectorXd fiedler = solver.eigenvectors().col(n - 2);
    std::vector<int> side(static_cast<std::size_t>(n));
    Index left = 0;
    for (Index i = 0; i < n; ++i) {
        side[static_cast<std::size_t>(i)] = fiedler[i] >= 0.0 ? 0 : 1;
        left += side[static_cast<std::size_t>(i)] == 0;
    }
    const Index right = n - left;
    if (4 * left < n || 4 * right < n) return false;

    // Rates per candidate subset, weighting candidate counts by the observed
    // hyperedge-size mix.
    std::map<Index, Index> sizes;
    double intra = 0.0;
    double inter = 0.0;
    for (const auto& e : h.hyperedges()) {
        ++sizes[static_cast<Index>(e.size())];
        const int s0 = side[static_cast<std::size_t>(e.front())];
        const bool same = std::all_of(e.begin(), e.end(), [&](Index v) { return side[static_cast<std::size_t>(v)] == s0; });
        (same ? intra : inter) += 1.0;
    }
    double intra_candidates = 0.0;
    double inter_candidates = 0.0;
    const double m_total = static_cast<double>(h.num_hyperedges());
    for (const auto& [s, count] : sizes) {
        const double w = static_cast<double>(count) / m_total;
        const double in = choose(left, s) + choose(right, s);
        intra_candidates += w * in;
        inter_candidates += w * (choose(n, s) - in);
    }
    if (intra == 0.0 || intra_candidates == 0.0) return false;
    const double intra_rate = intra / intra_candidates;
    if (inter == 0.0) return true;
    if (inter_candidates == 0.0) return false;
    return intra_rate >= 10.0 * (inter / inter_candidates);
}

bool is_valid(DatasetKind kind, const Hypergraph& h) {
    switch (kind) {
        case DatasetKind::Tree: return valid_tree(h);
        case DatasetKind::Ego: return valid_ego(h);
        case DatasetKind::Sbm: return valid_sbm(h);
        case DatasetKind::MeshDir: break;
    }
    throw Error("UnknownKind", std::string("no validity predicate for ") + dataset_kind_name(kind));
}

Matrix sample_surface(const Hypergraph& mesh, Index count, std::uint64_t seed) {
    if (mesh.node_feature_dim() != 3) throw Error("NotAMesh", "surface sampling needs 3-D node positions");
    const Matrix& p = mesh.node_features();
    std::vector<double> cumulative;
    std::vector<Index> faces;
    double total = 0.0;
    for (Index f = 0; f < mesh.num_hyperedges(); ++f) {
        const auto& e = mesh.hyperedge(f);
        if (e.size() != 3) continue;
        const Eigen::Vector3d a = p.row(e[0]).transpose();
        const Eigen::Vector3d b = p.row(e[1]).transpose();
        const Eigen::Vector3d c = p.row(e[2]).transpose();
        const double area = 0.5 * (b - a).cross(c - a).norm();
        if (area <= 0.0) continue;
        total += area;
        cumulative.push_back(total);
        faces.push_back(f);
    }
    if (!(total > 0.0)) throw Error("DegenerateMesh", "mesh has zero surface area");
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix out(count, 3);
    for (Index i = 0; i < count; ++i) {
        const double r = unit(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
        if (it == cumulative.end()) --it;
        const auto& e = mesh.hyperedge(faces[static_cast<std::size_t>(it - cumulative.begin())]);
        const double s = std::sqrt(unit(rng));
        const double t = unit(rng);
        out.row(i) = (1.0 - s) * p.row(e[0]) + s * (1.0 - t) * p.row(e[1]) + s * t * p.row(e[2]);
    }
    return out;
}

double chamfer(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0 || b.rows() == 0) throw Error("EmptyInput", "chamfer needs non-empty point sets");
    auto directed = [](const Matrix& x, const Matrix& y) {
        double s = 0.0;
        for (Index i = 0; i < x.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < y.rows(); ++j) best = std::min(best, (x.row(i) - y.row(j)).squaredNorm());
            s += std::sqrt(best);
        }
        return s / static_cast<double>(x.rows());
    };
    return directed(a, b) + directed(b, a);
}

double chamfer_nearest(const Hypergraph& mesh, std::span<const Hypergraph> references, Index count, std::uint64_t seed) {
    if (references.empty()) throw Error("EmptyInput", "chamfer_nearest needs reference meshes");
    const Matrix points = sample_surface(mesh, count, seed);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : references) best = std::min(best, chamfer(points, sample_surface(r, count, seed)));
    return best;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["node_num_diff"] = node_num_diff;
    j["degree_wasserstein"] = degree_wasserstein;
    j["edge_size_wasserstein"] = edge_size_wasserstein;
    j["spectral_mmd"] = spectral_mmd;
    j["validity_fraction"] = validity_fraction ? nlohmann::json(*validity_fraction) : nlohmann::json(nullptr);
    j["chamfer_nearest"] = chamfer_nearest ? nlohmann::json(*chamfer_nearest) : nlohmann::json(nullptr);
    j["num_generated"] = num_generated;
    j["num_isolated"] = num_isolated;
    return j.dump();
}

MetricReport evaluate(std::span<const Hypergraph> generated, std::span<const Hypergraph> reference, DatasetKind kind,
                      std::span<const Index> targets) {
    if (generated.empty() || reference.empty()) throw Error("EmptyInput", "evaluation needs generated and reference graphs");
    MetricReport r;
    r.num_generated = static_cast<Index>(generated.size());
    std::vector<Index> goal(targets.begin(), targets.end());
    if (goal.empty())
        for (std::size_t i = 0; i < generated.size(); ++i) goal.push_back(reference[i % reference.size()].num_nodes());
    r.node_num_diff = node_num_diff(generated, goal);

    const auto gd = degree_values(generated);
    const auto rd = degree_values(reference);
    r.degree_wasserstein = gd.empty() || rd.empty() ? 0.0 : wasserstein_1d(gd, rd);
    const auto gs = edge_size_values(generated);
    const auto rs = edge_size_values(reference);
    r.edge_size_wasserstein = gs.empty() || rs.empty() ? 0.0 : wasserstein_1d(gs, rs);
    r.spectral_mmd = spectral_mmd(generated, reference);

    for (const auto& h : generated) {
        const auto deg = h.node_degrees();
        if (std::find(deg.begin(), deg.end(), 0) != deg.end()) ++r.num_isolated;
    }
    if (kind == DatasetKind::MeshDir) {
        double s = 0.0;
        for (const auto& h : generated) s += chamfer_nearest(h, reference);
        r.chamfer_nearest = s / static_cast<double>(generated.size());
    } else {
        Index valid = 0;
        for (const auto& h : generated) valid += is_valid(kind, h) ? 1 : 0;
        r.validity_fraction = static_cast<double>(valid) / static_cast<double>(generated.size());
    }
    return r;
}

}  // namespace hyperforge
