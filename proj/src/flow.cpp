// flow.cpp - flow-matching kernels
#include "hyperforge/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hyperforge {

FlowHeadSpec FlowHeadSpec::for_head(HeadKind head) {
    switch (head) {
        case HeadKind::LeftExpansion: return {head, PriorKind::Gaussian, 0.0, TargetEncoding::Binary};
        case HeadKind::RightExpansion: return {head, PriorKind::Gaussian, 0.0, TargetEncoding::Ternary};
        case HeadKind::EdgeKeep: return {head, PriorKind::Gaussian, 0.0, TargetEncoding::Binary};
        case HeadKind::BudgetSplit: return {head, PriorKind::Dirichlet, 1.5, TargetEncoding::Simplex};
        case HeadKind::LeftFeature:
        case HeadKind::RightFeature: return {head, PriorKind::Gaussian, 0.0, TargetEncoding::Raw};
    }
    throw Error("InvalidArgument", "unknown head");
}

const char* head_name(HeadKind head) {
    switch (head) {
        case HeadKind::LeftExpansion: return "left_expansion";
        case HeadKind::RightExpansion: return "right_expansion";
        case HeadKind::EdgeKeep: return "edge_keep";
        case HeadKind::BudgetSplit: return "budget_split";
        case HeadKind::LeftFeature: return "left_feature";
        case HeadKind::RightFeature: return "right_feature";
    }
    return "unknown";
}

double encode_left_expansion(Index children) {
    if (children != 1 && children != 2) throw Error("InvalidArgument", "left expansion must be 1 or 2");
    return children == 2 ? 1.0 : -1.0;
}

double encode_right_expansion(Index children) {
    if (children < 1 || children > 3) throw Error("InvalidArgument", "right expansion must be 1, 2 or 3");
    return static_cast<double>(children) - 2.0;
}

double encode_edge_keep(bool keep) { return keep ? 1.0 : -1.0; }
double encode_split(double fraction) { return 2.0 * fraction - 1.0; }
double decode_split(double value) { return (value + 1.0) / 2.0; }

Index decode_right_expansion(double value) {
    const double count = value + 2.0;
    if (count < 1.66) return 1;
    if (count < 2.33) return 2;
    return 3;
}

bool decode_edge_keep(double value) { return (value + 1.0) / 2.0 > 0.5; }

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error("ShapeMismatch", std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" +
                                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                                         std::to_string(b.cols()) + " differ");
    }
}

}  // namespace

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t) {
    require_same_shape(x0, x1, "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) throw Error("InvalidArgument", "t must lie in [0, 1]");
    return t * x1 + (1.0 - t) * x0;
}

Matrix endpoint_velocity(const Matrix& x_t, const Matrix& x1_hat, double t) {
    require_same_shape(x_t, x1_hat, "endpoint_velocity");
    if (t >= 1.0 - kTerminalEpsilon) throw Error("TerminalTime", "velocity is undefined at t = 1");
    return (x1_hat - x_t) / (1.0 - t);
}

double fm_loss(const Matrix& pred, const Matrix& target, const Matrix& mask) {
    require_same_shape(pred, target, "fm_loss");
    if (mask.size() == 0 && mask.rows() == 0) {
        if (pred.size() == 0) return 0.0;
        return (pred - target).squaredNorm() / static_cast<double>(pred.size());
    }
    require_same_shape(pred, mask, "fm_loss mask");
    double sum = 0.0;
    double count = 0.0;
    for (Index i = 0; i < pred.size(); ++i) {
        if (mask.data()[i] != 0.0) {
            const double d = pred.data()[i] - target.data()[i];
            sum += d * d;
            count += 1.0;
        }
    }
    return count > 0.0 ? sum / count : 0.0;
}

Matrix sample_prior(const FlowHeadSpec& spec, Index rows, Index cols, std::span<const Index> group_of, Rng& rng) {
    Matrix out(rows, cols);
    if (spec.prior == PriorKind::Gaussian) {
        std::normal_distribution<double> normal;
        for (Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
        return out;
    }
    if (static_cast<Index>(group_of.size()) != rows) throw Error("ShapeMismatch", "group map must cover every row");
    std::vector<std::vector<Index>> groups;
    for (Index r = 0; r < rows; ++r) {
        const auto g = static_cast<std::size_t>(group_of[static_cast<std::size_t>(r)]);
        if (groups.size() <= g) groups.resize(g + 1);
        groups[g].push_back(r);
    }
    std::gamma_distribution<double> gamma(spec.alpha, 1.0);
    for (Index c = 0; c < cols; ++c) {
        for (const auto& members : groups) {
            if (members.empty()) continue;
            if (members.size() > 2) throw Error("InvalidGroup", "Dirichlet prior needs groups of size 1 or 2");
            if (members.size() == 1) {
                out(members[0], c) = 1.0;
                continue;
            }
            const double a = gamma(rng);
            const double b = gamma(rng);
            const double x = a / (a + b);
            out(members[0], c) = 2.0 * x - 1.0;
            out(members[1], c) = 2.0 * (1.0 - x) - 1.0;
        }
    }
    return out;
}

Vector simplex_project(const Vector& z) {
    const Index k = z.size();
    if (k == 0) throw Error("InvalidArgument", "cannot project an empty vector");
    if (!z.allFinite()) throw Error("NonFinite", "simplex projection input is not finite");
    std::vector<double> u(z.data(), z.data() + k);
    std::sort(u.begin(), u.end(), std::greater<>());
    // The condition holds for a prefix of indices; the threshold comes from
    // the largest index satisfying it.
    double prefix = 0.0;
    double tau = 0.0;
    for (Index r = 0; r < k; ++r) {
        prefix += u[static_cast<std::size_t>(r)];
        const double candidate = (prefix - 1.0) / static_cast<double>(r + 1);
        if (u[static_cast<std::size_t>(r)] - candidate > 0.0) tau = candidate;
    }
    Vector x = (z.array() - tau).max(0.0);
    // Remove the rounding residue so the sum is exact to machine precision.
    const double s = x.sum();
    if (s > 0.0) x /= s;
    return x;
}

std::vector<Index> best_assignment(const Matrix& noise, const Matrix& targets) {
    require_same_shape(noise, targets, "best_assignment");
    const auto k = static_cast<std::size_t>(noise.rows());
    if (k > 3) throw Error("InvalidGroup", "coupling supports groups of at most 3 rows");
    std::vector<Index> perm(k);
    std::iota(perm.begin(), perm.end(), Index{0});
    auto cost = [&](const std::vector<Index>& p) {
        double c = 0.0;
        for (std::size_t i = 0; i < k; ++i) c += (noise.row(p[i]) - targets.row(static_cast<Index>(i))).squaredNorm();
        return c;
    };
    std::vector<Index> best = perm;
    double best_cost = cost(perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
        const double c = cost(perm);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    }
    return best;
}

Index ot_couple(std::span<const Index> group_of, Matrix& noise, const Matrix& targets) {
    require_same_shape(noise, targets, "ot_couple");
    if (static_cast<Index>(group_of.size()) != noise.rows()) throw Error("ShapeMismatch", "group map must cover every row");
    std::vector<std::vector<Index>> groups;
    for (Index r = 0; r < noise.rows(); ++r) {
        const auto g = static_cast<std::size_t>(group_of[static_cast<std::size_t>(r)]);
        if (groups.size() <= g) groups.resize(g + 1);
        groups[g].push_back(r);
    }
    for (const auto& members : groups)
        if (members.size() > 3) throw Error("InvalidGroup", "coupling supports groups of at most 3 rows");
    Index permuted = 0;
    for (const auto& members : groups) {
        if (members.size() < 2) continue;
        const auto k = static_cast<Index>(members.size());
        Matrix n(k, noise.cols());
        Matrix t(k, noise.cols());
        for (Index i = 0; i < k; ++i) {
            n.row(i) = noise.row(members[static_cast<std::size_t>(i)]);
            t.row(i) = targets.row(members[static_cast<std::size_t>(i)]);
        }
        const auto best = best_assignment(n, t);
        if (std::is_sorted(best.begin(), best.end())) continue;
        for (Index i = 0; i < k; ++i) noise.row(members[static_cast<std::size_t>(i)]) = n.row(best[static_cast<std::size_t>(i)]);
        ++permuted;
    }
    return permuted;
}

FlowState integrate(const EndpointPredictor& predict, FlowState state, Index steps, const EndpointProjector& project) {
    if (steps < 1) throw Error("InvalidArgument", "integration needs at least one step");
    for (Index i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(steps);
        const double next_t = static_cast<double>(i + 1) / static_cast<double>(steps);
        state.t = t;
        FlowState x1 = predict(state);
        if (project) project(x1);
        for (std::size_t h = 0; h < kNumHeads; ++h) {
            if (!x1.heads[h].allFinite()) {
                throw Error("NonFinite", std::string("non-finite endpoint for head ") +
                                             head_name(kAllHeads[h]) + " at t = " + std::to_string(t));
            }
        }
        if (i + 1 == steps) {
            x1.t = 1.0;
            return x1;
        }
        for (std::size_t h = 0; h < kNumHeads; ++h) {
            if (state.heads[h].size() == 0) continue;
            state.heads[h] += (next_t - t) * endpoint_velocity(state.heads[h], x1.heads[h], t);
        }
    }
    return state;
}

}  // namespace hyperforge
