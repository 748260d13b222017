#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cvxq/convex_solver.hpp"
#include "cvxq/env.hpp"

namespace cvxq {

/// Signed ReLU network on the extended input z = [1, x', u']:
/// Q(z) = sum_i sign_i * max(direction_i . z, 0).
struct QNetwork {
    Eigen::MatrixXd directions;       // dim x units, one column per unit
    Eigen::VectorXd signs;            // +1 / -1
    std::vector<std::uint8_t> zero_direction;   // flags, units kept either way

    int dim() const { return static_cast<int>(directions.rows()); }
    int units() const { return static_cast<int>(directions.cols()); }
};

/// One +1 unit per w1 column followed by one -1 unit per w2 column.
/// Zero-norm directions are retained (they evaluate to 0) but flagged.
inline QNetwork from_convex(const ConvexWeights& w) {
    const int d = w.d(), P = w.P();
    QNetwork q;
    q.directions.resize(d, 2 * P);
    q.signs.resize(2 * P);
    q.zero_direction.resize(2 * P);
    for (int p = 0; p < P; ++p) {
        q.directions.col(p) = w.w1.col(p);
        q.signs[p] = 1.0;
        q.zero_direction[p] = w.w1.col(p).norm() == 0.0 ? 1 : 0;
    }
    for (int p = 0; p < P; ++p) {
        q.directions.col(P + p) = w.w2.col(p);
        q.signs[P + p] = -1.0;
        q.zero_direction[P + p] = w.w2.col(p).norm() == 0.0 ? 1 : 0;
    }
    return q;
}

inline double evaluate_row(const QNetwork& q, const Eigen::VectorXd& z) {
    if (z.size() != q.dim()) throw DimensionMismatch("qnet: input size does not match network");
    double out = 0.0;
    for (int i = 0; i < q.units(); ++i) {
        const double a = q.directions.col(i).dot(z);
        if (a > 0.0) out += q.signs[i] * a;
    }
    return out;
}

inline double evaluate(const QNetwork& q, const State& x, const Action& u) {
    Eigen::VectorXd z(1 + x.size() + u.size());
    z[0] = 1.0;
    z.segment(1, x.size()) = x;
    z.segment(1 + x.size(), u.size()) = u;
    return evaluate_row(q, z);
}

struct ActionChoice {
    double action = 0.0;
    double value = 0.0;
};

namespace detail {
// value first, then smallest |u|, then smaller u; comparisons are exact so
// ties on flat pieces resolve deterministically.
inline bool action_beats(double u, double v, double best_u, double best_v) {
    if (v != best_v) return v < best_v;
    const double au = std::abs(u), ab = std::abs(best_u);
    if (au != ab) return au < ab;
    return u < best_u;
}
}  // namespace detail

/// Exact minimizer of the piecewise-linear map u -> Q(x, u) on [-c_u, c_u]
/// for scalar actions. Candidates are the unit breakpoints, the interval
/// ends, and 0; the last makes the smallest-|u| tie rule exact on flat
/// minimizer regions (a constant network yields u = 0).
inline ActionChoice argmin_action_1d(const QNetwork& q, const State& x, double c_u) {
    if (c_u <= 0.0) throw std::invalid_argument("argmin_action_1d: c_u must be > 0");
    const int d = q.dim();
    const int n = static_cast<int>(x.size());
    if (d != n + 2) throw DimensionMismatch("argmin_action_1d: network is not scalar-action");

    Eigen::VectorXd z(d);
    z[0] = 1.0;
    z.segment(1, n) = x;
    z[d - 1] = 0.0;

    std::vector<double> candidates{0.0, -c_u, c_u};
    for (int i = 0; i < q.units(); ++i) {
        const double b = q.directions(d - 1, i);
        if (b == 0.0) continue;
        const double a = q.directions.col(i).head(d - 1).dot(z.head(d - 1));
        const double brk = -a / b;
        if (brk >= -c_u && brk <= c_u) candidates.push_back(brk);
    }

    auto q_at = [&](double u) {
        z[d - 1] = u;
        return evaluate_row(q, z);
    };
    ActionChoice best{candidates[0], q_at(candidates[0])};
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double v = q_at(candidates[i]);
        if (detail::action_beats(candidates[i], v, best.action, best.value))
            best = {candidates[i], v};
    }
    return best;
}

struct GridActionChoice {
    Action action;
    double value = 0.0;
};

/// Exhaustive action-grid minimum for any action dimension; same tie rule
/// with |u| read as the Euclidean norm, then lexicographic.
inline GridActionChoice argmin_action_grid(const QNetwork& q, const State& x, double c_u,
                                           int resolution) {
    if (resolution < 2) throw std::invalid_argument("argmin_action_grid: resolution must be >= 2");
    const int n = static_cast<int>(x.size());
    const int m = q.dim() - 1 - n;
    if (m < 1) throw DimensionMismatch("argmin_action_grid: network has no action inputs");
    const double h = 2.0 * c_u / (resolution - 1);

    std::vector<int> idx(m, 0);
    Action u(m);
    GridActionChoice best;
    bool first = true;
    double best_norm = 0.0;
    while (true) {
        for (int j = 0; j < m; ++j) u[j] = -c_u + idx[j] * h;
        const double v = evaluate(q, x, u);
        const double un = u.norm();
        bool take = first;
        if (!first) {
            if (v != best.value)
                take = v < best.value;
            else if (un != best_norm)
                take = un < best_norm;
            else
                for (int j = 0; j < m; ++j)
                    if (u[j] != best.action[j]) {
                        take = u[j] < best.action[j];
                        break;
                    }
        }
        if (take) {
            best = {u, v};
            best_norm = un;
            first = false;
        }
        int j = 0;
        while (j < m && ++idx[j] == resolution) idx[j++] = 0;
        if (j == m) break;
    }
    return best;
}

/// A hidden unit of the unconstrained two-layer parameterization: inner
/// direction w and scalar outer weight.
struct ReluUnit {
    Eigen::VectorXd w;
    double outer = 0.0;
};

/// Squared fit error of the two-layer network plus the scaled quadratic
/// regularizer (rho_T/2) * sum_i (|w_i|^2 + outer_i^2). At the balanced
/// scaling |w_i| = |outer_i| this equals the group-lasso objective of the
/// constrained convex form, which is what the tests exercise.
inline double nonconvex_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  double rho_T, const std::vector<ReluUnit>& units) {
    Eigen::VectorXd fit = Eigen::VectorXd::Zero(X.rows());
    double reg = 0.0;
    for (const auto& unit : units) {
        if (unit.w.size() != X.cols())
            throw DimensionMismatch("nonconvex_objective: unit dimension mismatch");
        fit += (X * unit.w).cwiseMax(0.0) * unit.outer;
        reg += unit.w.squaredNorm() + unit.outer * unit.outer;
    }
    return (fit - y).squaredNorm() + 0.5 * rho_T * reg;
}

}  // namespace cvxq
