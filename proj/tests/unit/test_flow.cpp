#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "hyperforge/flow.hpp"
#include "stats.hpp"

using namespace hyperforge;

namespace {

// Exact QP oracle: enumerate every support set, keep the feasible candidate
// closest to z.
Vector simplex_oracle(const Vector& z) {
    const Index k = z.size();
    Vector best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
        double sum = 0.0;
        int count = 0;
        for (Index i = 0; i < k; ++i)
            if (mask & (1u << i)) {
                sum += z[i];
                ++count;
            }
        const double shift = (sum - 1.0) / count;
        Vector x = Vector::Zero(k);
        bool feasible = true;
        for (Index i = 0; i < k; ++i)
            if (mask & (1u << i)) {
                x[i] = z[i] - shift;
                if (x[i] < -1e-15) feasible = false;
            }
        if (!feasible) continue;
        const double d = (x - z).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = x.cwiseMax(0.0);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("target encodings and decoders") {
    CHECK(encode_left_expansion(1) == -1.0);
    CHECK(encode_left_expansion(2) == 1.0);
    CHECK_THROWS_AS(encode_left_expansion(3), Error);
    CHECK(encode_right_expansion(1) == -1.0);
    CHECK(encode_right_expansion(2) == 0.0);
    CHECK(encode_right_expansion(3) == 1.0);
    for (Index c = 1; c <= 3; ++c) CHECK(decode_right_expansion(encode_right_expansion(c)) == c);
    CHECK(decode_right_expansion(-0.35) == 1);
    CHECK(decode_right_expansion(-0.33) == 2);
    CHECK(decode_right_expansion(0.32) == 2);
    CHECK(decode_right_expansion(0.34) == 3);
    CHECK(decode_edge_keep(0.01));
    CHECK_FALSE(decode_edge_keep(0.0));
    CHECK_FALSE(decode_edge_keep(-0.5));
    CHECK(decode_split(encode_split(0.3)) == doctest::Approx(0.3));
}

TEST_CASE("interpolation and endpoint velocity") {
    Matrix x0(2, 2);
    x0 << 1, 2, 3, 4;
    Matrix x1(2, 2);
    x1 << -1, 0, 5, 8;
    CHECK(interpolate(x0, x1, 0.0) == x0);
    CHECK(interpolate(x0, x1, 1.0) == x1);
    const Matrix mid = interpolate(x0, x1, 0.25);
    CHECK(mid(1, 1) == doctest::Approx(5.0));
    // The velocity of the straight path is x1 - x0 at every t.
    const Matrix v = endpoint_velocity(mid, x1, 0.25);
    CHECK((v - (x1 - x0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(endpoint_velocity(mid, x1, 1.0), Error);
    CHECK_THROWS_AS(endpoint_velocity(mid, x1, 1.0 - 1e-6), Error);
    CHECK_THROWS_AS(interpolate(x0, Matrix(3, 2), 0.5), Error);
}

TEST_CASE("masked flow-matching loss") {
    Matrix p(1, 3);
    p << 1, 2, 3;
    Matrix t(1, 3);
    t << 0, 0, 0;
    CHECK(fm_loss(p, t) == doctest::Approx(14.0 / 3.0));
    Matrix m(1, 3);
    m << 1, 0, 1;
    CHECK(fm_loss(p, t, m) == doctest::Approx(5.0));
    CHECK(fm_loss(p, t, Matrix::Zero(1, 3)) == 0.0);
}

TEST_CASE("simplex projection matches the active-set oracle") {
    Rng rng(3);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const Index k = 1 + trial % 6;
        Vector z(k);
        for (Index i = 0; i < k; ++i) z[i] = normal(rng);
        const Vector x = simplex_project(z);
        const Vector o = simplex_oracle(z);
        CHECK((x - o).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(std::abs(x.sum() - 1.0) < 1e-12);
        CHECK(x.minCoeff() >= 0.0);
    }
    Vector inside(3);
    inside << 0.2, 0.3, 0.5;
    CHECK((simplex_project(inside) - inside).norm() < 1e-15);
    Vector ties(2);
    ties << 5.0, 5.0;
    CHECK(simplex_project(ties)[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(simplex_project(Vector(0)), Error);
}

TEST_CASE("Dirichlet prior respects sibling groups") {
    Rng rng(9);
    const auto spec = FlowHeadSpec::for_head(HeadKind::BudgetSplit);
    const std::vector<Index> group_of{0, 0, 1, 2, 2};
    std::vector<double> first;
    for (int trial = 0; trial < 4000; ++trial) {
        const Matrix x = sample_prior(spec, 5, 1, group_of, rng);
        CHECK(decode_split(x(0, 0)) + decode_split(x(1, 0)) == doctest::Approx(1.0));
        CHECK(x(2, 0) == 1.0);
        first.push_back(decode_split(x(3, 0)));
    }
    const double d = testing::ks_statistic(first, [&](double u) { return testing::symmetric_beta_cdf(u, spec.alpha); });
    CHECK(testing::ks_pvalue(d, first.size()) > 0.001);
    CHECK_THROWS_AS(sample_prior(spec, 3, 1, std::vector<Index>{0, 0, 0}, rng), Error);
}

TEST_CASE("Gaussian prior is standard normal") {
    Rng rng(10);
    const Matrix x = sample_prior(FlowHeadSpec::for_head(HeadKind::EdgeKeep), 5000, 1, {}, rng);
    std::vector<double> xs(x.data(), x.data() + x.size());
    const double d = testing::ks_statistic(xs, testing::normal_cdf);
    CHECK(testing::ks_pvalue(d, xs.size()) > 0.001);
}

TEST_CASE("coupling swaps sibling noise only when it lowers the cost") {
    Rng rng(4);
    std::normal_distribution<double> normal;
    const std::vector<Index> group_of{0, 0, 1, 2, 2, 3, 3};
    for (int trial = 0; trial < 300; ++trial) {
        Matrix noise(7, 3);
        Matrix target(7, 3);
        for (Index i = 0; i < noise.size(); ++i) {
            noise.data()[i] = normal(rng);
            target.data()[i] = normal(rng);
        }
        const Matrix before = noise;
        ot_couple(group_of, noise, target);
        for (Index g = 0; g < 4; ++g) {
            std::vector<Index> m;
            for (Index r = 0; r < 7; ++r)
                if (group_of[static_cast<std::size_t>(r)] == g) m.push_back(r);
            if (m.size() == 1) {
                CHECK(noise.row(m[0]) == before.row(m[0]));
                continue;
            }
            const Index a = m[0];
            const Index b = m[1];
            const double keep = (before.row(a) - target.row(a)).squaredNorm() + (before.row(b) - target.row(b)).squaredNorm();
            const double swap = (before.row(b) - target.row(a)).squaredNorm() + (before.row(a) - target.row(b)).squaredNorm();
            const double got = (noise.row(a) - target.row(a)).squaredNorm() + (noise.row(b) - target.row(b)).squaredNorm();
            CHECK(got == doctest::Approx(std::min(keep, swap)));
            // The pair's noise rows are a permutation of the originals.
            const bool same = noise.row(a) == before.row(a) && noise.row(b) == before.row(b);
            const bool swapped = noise.row(a) == before.row(b) && noise.row(b) == before.row(a);
            CHECK((same || swapped));
        }
    }
    Matrix n4(4, 1);
    CHECK_THROWS_AS(ot_couple(std::vector<Index>{0, 0, 0, 0}, n4, Matrix::Zero(4, 1)), Error);
}

TEST_CASE("coupling of triples picks the best of all six assignments") {
    Rng rng(5);
    std::normal_distribution<double> normal;
    const std::vector<Index> group_of{0, 0, 0};
    for (int trial = 0; trial < 200; ++trial) {
        Matrix noise(3, 2);
        Matrix target(3, 2);
        for (Index i = 0; i < noise.size(); ++i) {
            noise.data()[i] = normal(rng);
            target.data()[i] = normal(rng);
        }
        const Matrix before = noise;
        ot_couple(group_of, noise, target);
        std::array<int, 3> p{0, 1, 2};
        double best = 1e300;
        do {
            double c = 0.0;
            for (int i = 0; i < 3; ++i) c += (before.row(p[static_cast<std::size_t>(i)]) - target.row(i)).squaredNorm();
            best = std::min(best, c);
        } while (std::next_permutation(p.begin(), p.end()));
        CHECK((noise - target).squaredNorm() == doctest::Approx(best));
    }
}

TEST_CASE("Euler integration with an exact endpoint stays on the straight path") {
    FlowState start;
    start.heads[0] = Matrix::Constant(3, 1, -2.0);
    const Matrix x1 = Matrix::Constant(3, 1, 4.0);
    std::vector<double> seen_t;
    Index calls = 0;
    auto predict = [&](const FlowState& s) {
        ++calls;
        seen_t.push_back(s.t);
        // On the straight path x_t = (1 - t) x0 + t x1.
        CHECK(s.heads[0](0, 0) == doctest::Approx((1.0 - s.t) * -2.0 + s.t * 4.0));
        FlowState out = s;
        out.heads[0] = x1;
        return out;
    };
    const FlowState end = integrate(predict, start, 8);
    CHECK(calls == 8);
    CHECK(end.t == 1.0);
    CHECK(end.heads[0] == x1);
    CHECK(seen_t.back() == doctest::Approx(7.0 / 8.0));

    auto bad = [](const FlowState& s) {
        FlowState out = s;
        out.heads[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
        return out;
    };
    CHECK_THROWS_AS(integrate(bad, start, 4), Error);
}

TEST_CASE("projector is applied to every prediction") {
    FlowState start;
    start.heads[head_index(HeadKind::BudgetSplit)] = Matrix::Zero(2, 1);
    auto predict = [](const FlowState& s) {
        FlowState out = s;
        out[HeadKind::BudgetSplit] << 3.0, 3.0;
        return out;
    };
    auto project = [](FlowState& s) { s[HeadKind::BudgetSplit].setConstant(0.0); };
    const FlowState end = integrate(predict, start, 5, project);
    CHECK(end[HeadKind::BudgetSplit].cwiseAbs().maxCoeff() == 0.0);
}
