#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "hyperforge/datasets.hpp"
#include "hyperforge/metrics.hpp"
#include "test_support.hpp"

using namespace hyperforge;

namespace {

// W1 as the integral of |F_a - F_b| over the merged support.
double w1_cdf_oracle(std::vector<double> a, std::vector<double> b) {
    std::vector<double> pts = a;
    pts.insert(pts.end(), b.begin(), b.end());
    std::sort(pts.begin(), pts.end());
    auto cdf = [](const std::vector<double>& s, double x) {
        double c = 0.0;
        for (double v : s) c += v <= x ? 1.0 : 0.0;
        return c / static_cast<double>(s.size());
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) total += std::abs(cdf(a, pts[i]) - cdf(b, pts[i])) * (pts[i + 1] - pts[i]);
    return total;
}

std::vector<double> random_sample(Rng& rng, std::size_t n) {
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = std::round(normal(rng) * 4.0) / 2.0;
    return v;
}

Hypergraph tetrahedron(double shift = 0.0) {
    Matrix p(4, 3);
    p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
    p.col(0).array() += shift;
    return Hypergraph(4, {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}}, p);
}

}  // namespace

TEST_CASE("wasserstein examples") {
    const std::vector<double> a{0, 0};
    const std::vector<double> b{1, 1};
    const std::vector<double> c{0, 2};
    CHECK(wasserstein_1d(a, a) == 0.0);
    CHECK(wasserstein_1d(a, b) == doctest::Approx(1.0));
    CHECK(wasserstein_1d(c, b) == doctest::Approx(1.0));
    CHECK_THROWS_AS(wasserstein_1d({}, a), Error);
}

TEST_CASE("wasserstein matches the CDF integral and is a metric") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_sample(rng, 1 + trial % 9);
        const auto b = random_sample(rng, 1 + (trial * 7) % 13);
        const auto c = random_sample(rng, 1 + (trial * 3) % 5);
        const double ab = wasserstein_1d(a, b);
        CHECK(std::abs(ab - w1_cdf_oracle(a, b)) < 1e-10);
        CHECK(std::abs(ab - wasserstein_1d(b, a)) < 1e-12);
        CHECK(wasserstein_1d(a, c) <= ab + wasserstein_1d(b, c) + 1e-12);
    }
}

TEST_CASE("spectral MMD") {
    Rng rng(2);
    std::vector<Hypergraph> a;
    std::vector<Hypergraph> b;
    for (int i = 0; i < 5; ++i) {
        a.push_back(gen_tree(rng, 16));
        b.push_back(gen_sbm(rng));
    }
    CHECK(spectral_mmd(a, a) < 1e-12);
    CHECK(spectral_mmd(a, b) > 0.0);
    CHECK(spectral_mmd(a, b) == doctest::Approx(spectral_mmd(b, a)));
    for (const auto& h : a) CHECK(eigenvalue_histogram(h).sum() == doctest::Approx(1.0));

    // Disjoint supports with a tiny bandwidth: k(x, x) + k(y, y) = 2.
    Vector x = Vector::Zero(kSpectralBins);
    Vector y = Vector::Zero(kSpectralBins);
    x[0] = 1.0;
    y[5] = 1.0;
    const std::vector<Vector> xs{x};
    const std::vector<Vector> ys{y};
    CHECK(mmd_squared(xs, ys, 1e-3) == doctest::Approx(2.0));
    CHECK_THROWS_AS(spectral_mmd(a, std::vector<Hypergraph>{}), Error);
}

TEST_CASE("validity predicates") {
    Rng rng(3);
    int sbm_valid = 0;
    for (int i = 0; i < 50; ++i) {
        CHECK(valid_tree(gen_tree(rng, 32)));
        sbm_valid += valid_sbm(gen_sbm(rng)) ? 1 : 0;
    }
    CHECK(sbm_valid >= 45);

    std::vector<std::vector<Index>> triples;
    for (Index a = 0; a < 6; ++a)
        for (Index b = a + 1; b < 6; ++b)
            for (Index c = b + 1; c < 6; ++c) triples.push_back({a, b, c});
    const Hypergraph complete(6, triples);
    CHECK_FALSE(valid_tree(complete));
    CHECK_FALSE(valid_sbm(complete));
    // Two hyperedges sharing two nodes form a cycle in the incidence graph.
    CHECK_FALSE(valid_tree(Hypergraph(3, {{0, 1, 2}, {1, 2}})));
    CHECK_FALSE(valid_tree(Hypergraph(3, {{0, 1}})));
    CHECK(valid_tree(Hypergraph(1, {})));
    CHECK(valid_ego(Hypergraph(4, {{0, 1}, {0, 2, 3}})));
    CHECK_FALSE(valid_ego(Hypergraph(4, {{0, 1}, {2, 3}})));
    CHECK_THROWS_AS(is_valid(DatasetKind::MeshDir, complete), Error);
    // Uniform random 3-uniform hypergraphs have no community structure.
    int random_valid = 0;
    std::uniform_int_distribution<Index> node(0, 31);
    for (int i = 0; i < 20; ++i) {
        std::set<std::vector<Index>> edges;
        while (edges.size() < 60) {
            std::set<Index> t;
            while (t.size() < 3) t.insert(node(rng));
            edges.insert({t.begin(), t.end()});
        }
        random_valid += valid_sbm(Hypergraph(32, {edges.begin(), edges.end()})) ? 1 : 0;
    }
    CHECK(random_valid == 0);
}

TEST_CASE("node count difference") {
    std::vector<Hypergraph> g(10, Hypergraph(5, {}));
    std::vector<Index> t(10, 5);
    CHECK(node_num_diff(g, t) == 0.0);
    t[3] = 8;
    CHECK(node_num_diff(g, t) == doctest::Approx(0.3));
    CHECK_THROWS_AS(node_num_diff(g, std::vector<Index>{1}), Error);
}

TEST_CASE("chamfer distances") {
    const Hypergraph t = tetrahedron();
    const std::vector<Hypergraph> self{t};
    CHECK(chamfer_nearest(t, self, 1024, 4) < 1e-3);
    double last = 0.0;
    for (double d : {0.1, 0.3, 0.6, 1.0, 2.0}) {
        const double c = chamfer_nearest(tetrahedron(d), self, 256, 4);
        CHECK(c > last);
        last = c;
    }
    const std::vector<Hypergraph> refs{tetrahedron(2.0), tetrahedron(0.0), tetrahedron(-1.0)};
    CHECK(chamfer_nearest(t, refs, 256, 4) == doctest::Approx(chamfer_nearest(t, self, 256, 4)));
    Matrix flat(3, 3);
    flat << 0, 0, 0, 1, 0, 0, 2, 0, 0;
    CHECK_THROWS_AS(sample_surface(Hypergraph(3, {{0, 1, 2}}, flat), 10, 0), Error);
    const Matrix pts = sample_surface(t, 500, 1);
    for (Index i = 0; i < pts.rows(); ++i) {
        CHECK(pts.row(i).minCoeff() >= -1e-12);
        CHECK(pts.row(i).sum() <= 1.0 + 1e-12);
    }
}

TEST_CASE("evaluation report") {
    Rng rng(5);
    std::vector<Hypergraph> g;
    for (int i = 0; i < 6; ++i) g.push_back(gen_tree(rng, 10));
    const MetricReport r = evaluate(g, g, DatasetKind::Tree);
    CHECK(r.node_num_diff == 0.0);
    CHECK(r.degree_wasserstein == 0.0);
    CHECK(r.edge_size_wasserstein == 0.0);
    CHECK(r.spectral_mmd < 1e-12);
    CHECK(r.validity_fraction.value() == 1.0);
    CHECK(!r.chamfer_nearest.has_value());
    CHECK(r.to_json().find("\"chamfer_nearest\":null") != std::string::npos);
}
