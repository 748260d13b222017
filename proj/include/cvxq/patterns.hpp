#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <unordered_set>
#include <vector>

#include "cvxq/errors.hpp"
#include "cvxq/rng.hpp"

namespace cvxq {

/// Boolean diagonal mask over the T rows of a design matrix.
struct ActivationPattern {
    std::vector<std::uint8_t> mask;   // 0/1 per row

    bool operator==(const ActivationPattern& o) const { return mask == o.mask; }
};

struct ActivationPatternHash {
    std::size_t operator()(const ActivationPattern& p) const {
        std::uint64_t h = 1469598103934665603ull;
        for (auto b : p.mask) {
            h ^= b;
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

/// Ordered set of distinct masks plus provenance of the matrix that
/// generated them. Masks may be applied to a different matrix later
/// (the fingerprint makes that detectable); the convex program stays
/// well-posed either way.
struct PatternSet {
    std::vector<ActivationPattern> patterns;
    std::uint64_t source_x_fingerprint = 0;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(patterns.size()); }
};

inline std::uint64_t fingerprint_matrix(const Eigen::MatrixXd& X) {
    std::uint64_t h = fnv1a64("matrix");
    h = mix64(h ^ static_cast<std::uint64_t>(X.rows()));
    h = mix64(h ^ static_cast<std::uint64_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            std::uint64_t bits;
            const double v = X(i, j);
            std::memcpy(&bits, &v, sizeof bits);
            h = mix64(h ^ bits);
        }
    return h;
}

/// Draws Gaussian gate vectors g and records the realized sign masks
/// 1[X_t g > 0] (strict, so the zero gate maps to the all-zeros mask).
/// Stops at `budget` distinct masks or after 200*budget draws.
inline PatternSet sample_patterns(const Eigen::MatrixXd& X, int budget, RngStream& rng) {
    if (budget < 1) throw std::invalid_argument("sample_patterns: budget must be >= 1");
    const int T = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    PatternSet set;
    set.source_x_fingerprint = fingerprint_matrix(X);
    set.seed = rng.seed();
    std::unordered_set<ActivationPattern, ActivationPatternHash> seen;
    const long max_draws = 200L * budget;
    Eigen::VectorXd g(d);
    for (long draw = 0; draw < max_draws && set.size() < budget; ++draw) {
        for (int j = 0; j < d; ++j) g[j] = rng.normal();
        ActivationPattern p;
        p.mask.resize(T);
        for (int t = 0; t < T; ++t) p.mask[t] = X.row(t).dot(g) > 0.0 ? 1 : 0;
        if (seen.insert(p).second) set.patterns.push_back(std::move(p));
    }
    return set;
}

namespace detail {

// Exact value of max delta s.t. a_t.g >= delta for all rows, |g|_inf <= 1.
// The LP always admits (g, delta) = (0, 0), so the optimum is >= 0 and
// finite; it is found by enumerating vertices (subsets of d+1 tight
// constraints). Small by construction: d <= 4, T <= 12.
inline double max_margin(const std::vector<Eigen::RowVectorXd>& rows, int d) {
    const int nr = static_cast<int>(rows.size());
    const int nv = d + 1;                 // variables: g (d), delta
    const int nc = nr + 2 * d;            // margin rows + box faces
    if (nr == 0) return std::numeric_limits<double>::infinity();

    // constraint i as  c_i . v >= b_i  with v = (g, delta)
    auto fill = [&](int i, Eigen::RowVectorXd& c, double& b) {
        c.setZero(nv);
        if (i < nr) {
            c.head(d) = rows[i];
            c[d] = -1.0;
            b = 0.0;
        } else {
            const int j = (i - nr) / 2;
            const bool upper = ((i - nr) % 2) == 0;
            c[j] = upper ? -1.0 : 1.0;    // g_j <= 1  /  g_j >= -1
            b = -1.0;
        }
    };

    Eigen::MatrixXd C(nc, nv);
    Eigen::VectorXd b(nc);
    for (int i = 0; i < nc; ++i) {
        Eigen::RowVectorXd ci;
        double bi;
        fill(i, ci, bi);
        C.row(i) = ci;
        b[i] = bi;
    }

    double best = 0.0;                    // (g, delta) = (0, 0) is feasible
    std::vector<int> idx(nv);
    // enumerate all subsets of size nv that include at least one margin row
    // (the optimum must have one tight, else delta could still increase)
    std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == nv) {
            bool has_margin = false;
            for (int i : idx)
                if (i < nr) has_margin = true;
            if (!has_margin) return;
            Eigen::MatrixXd M(nv, nv);
            Eigen::VectorXd rhs(nv);
            for (int r = 0; r < nv; ++r) {
                M.row(r) = C.row(idx[r]);
                rhs[r] = b[idx[r]];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
            if (!lu.isInvertible()) return;
            const Eigen::VectorXd v = lu.solve(rhs);
            if (v[d] <= best) return;
            for (int i = 0; i < nc; ++i)
                if (C.row(i).dot(v) < b[i] - 1e-10) return;
            best = v[d];
            return;
        }
        for (int i = start; i <= nc - (nv - k); ++i) {
            idx[k] = i;
            rec(i + 1, k + 1);
        }
    };
    rec(0, 0);
    return best;
}

constexpr double kPatternMarginTol = 1e-9;

}  // namespace detail

/// Exhaustive pattern oracle. A candidate mask s is realizable iff some
/// gate g achieves (2s_t - 1) X_t g > 0 on every nonzero row; zero rows
/// force mask 0. Realizability is decided by margin maximization over the
/// unit box with threshold 1e-9, searched depth-first over row sign
/// prefixes so infeasible subtrees are cut early.
inline PatternSet enumerate_patterns(const Eigen::MatrixXd& X, int max_T = 12) {
    const int T = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    if (T > max_T)
        throw std::invalid_argument("enumerate_patterns: T exceeds the enumeration cap");

    std::vector<int> nonzero_rows;
    for (int t = 0; t < T; ++t)
        if (X.row(t).norm() > 0.0) nonzero_rows.push_back(t);

    PatternSet set;
    set.source_x_fingerprint = fingerprint_matrix(X);

    std::vector<std::uint8_t> signs(nonzero_rows.size(), 0);
    std::vector<Eigen::RowVectorXd> rows;
    rows.reserve(nonzero_rows.size());

    std::function<void(std::size_t)> dfs = [&](std::size_t level) {
        if (!rows.empty() && detail::max_margin(rows, d) <= detail::kPatternMarginTol) return;
        if (level == nonzero_rows.size()) {
            ActivationPattern p;
            p.mask.assign(T, 0);
            for (std::size_t i = 0; i < nonzero_rows.size(); ++i)
                p.mask[nonzero_rows[i]] = signs[i];
            set.patterns.push_back(std::move(p));
            return;
        }
        for (std::uint8_t s : {std::uint8_t{1}, std::uint8_t{0}}) {
            signs[level] = s;
            rows.push_back((2.0 * s - 1.0) * X.row(nonzero_rows[level]));
            dfs(level + 1);
            rows.pop_back();
        }
    };
    dfs(0);
    return set;
}

/// Exact region count of T homogeneous hyperplanes in rank-r general
/// position: 2 * sum_{k<r} C(T-1, k). Dominates every realizable pattern
/// count for a T x d matrix of rank r.
inline unsigned long long cover_bound(int T, int r) {
    if (r < 1 || r > T) throw std::invalid_argument("cover_bound: need 1 <= r <= T");
    if (T > 63) throw std::invalid_argument("cover_bound: T too large for exact arithmetic");
    unsigned long long sum = 0, binom = 1;   // binom = C(T-1, k)
    for (int k = 0; k < r; ++k) {
        sum += binom;
        binom = binom * (T - 1 - k) / (k + 1);
    }
    return 2 * sum;
}

}  // namespace cvxq
