#pragma once

#include <algorithm>
#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "cvxq/errors.hpp"
#include "cvxq/patterns.hpp"

namespace cvxq {

/// Decision variables of the per-episode program, one (w1, w2) column pair
/// per pattern. Flattening is unit-major: the P columns of w1, then the P
/// columns of w2.
struct ConvexWeights {
    Eigen::MatrixXd w1;   // d x P
    Eigen::MatrixXd w2;   // d x P

    static ConvexWeights zero(int d, int P) {
        return {Eigen::MatrixXd::Zero(d, P), Eigen::MatrixXd::Zero(d, P)};
    }

    int d() const { return static_cast<int>(w1.rows()); }
    int P() const { return static_cast<int>(w1.cols()); }

    Eigen::VectorXd flatten() const {
        const int dd = d(), PP = P();
        Eigen::VectorXd v(2 * dd * PP);
        for (int p = 0; p < PP; ++p) v.segment(p * dd, dd) = w1.col(p);
        for (int p = 0; p < PP; ++p) v.segment((PP + p) * dd, dd) = w2.col(p);
        return v;
    }

    static ConvexWeights unflatten(const Eigen::VectorXd& v, int d, int P) {
        if (v.size() != 2 * d * P)
            throw DimensionMismatch("ConvexWeights: flat vector has wrong length");
        ConvexWeights w = zero(d, P);
        for (int p = 0; p < P; ++p) w.w1.col(p) = v.segment(p * d, d);
        for (int p = 0; p < P; ++p) w.w2.col(p) = v.segment((P + p) * d, d);
        return w;
    }

    double norm_inf() const {
        const double a = w1.size() ? w1.cwiseAbs().maxCoeff() : 0.0;
        const double b = w2.size() ? w2.cwiseAbs().maxCoeff() : 0.0;
        return std::max(a, b);
    }
};

/// min |A w - y|^2 + rho_T * sum_g |w_g|_2   s.t.  G w >= 0
///
/// A's column groups are [D_1 X, ..., D_P X | -D_1 X, ..., -D_P X]; G is
/// block diagonal with (2 D_p - I) X per unit, so unit j's feasibility is
/// exactly the activation-pattern constraint of its mask.
struct ConvexProblem {
    Eigen::MatrixXd A;    // T x 2dP
    Eigen::MatrixXd G;    // 2PT x 2dP
    Eigen::VectorXd y;    // T
    double rho_T = 0.0;
    int T = 0, d = 0, P = 0;
    bool foreign_patterns = false;   // masks came from a different X

    int groups() const { return 2 * P; }
    int cols() const { return 2 * d * P; }
};

struct SolverConfig {
    int max_iter = 200000;
    double kkt_tol = 1e-7;
    double feas_tol = 1e-8;
    double penalty = 0.5;        // initial splitting penalty, a multiple of rho_T
    bool adapt_penalty = true;   // residual balancing with geometric backoff
    double over_relax = 1.7;
    int check_every = 25;
};

struct SolverReport {
    double objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double kkt_residual = 0.0;
    double max_violation = 0.0;
    bool converged = false;
    double wall_time_s = 0.0;
};

/// prox of kappa*|.|_2: shrinks z toward the origin, zeroing it when
/// |z| <= kappa.
inline Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& z, double kappa) {
    if (kappa < 0.0) throw std::invalid_argument("group_soft_threshold: kappa must be >= 0");
    const double n = z.norm();
    if (n <= kappa) return Eigen::VectorXd::Zero(z.size());
    return z * (1.0 - kappa / n);
}

inline ConvexProblem assemble(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const PatternSet& patterns, double rho_T) {
    const int T = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    const int P = patterns.size();
    if (y.size() != T) throw DimensionMismatch("assemble: y length must equal T");
    if (P < 1) throw std::invalid_argument("assemble: need at least one pattern");
    if (rho_T <= 0.0) throw std::invalid_argument("assemble: rho_T must be > 0");
    for (const auto& p : patterns.patterns)
        if (static_cast<int>(p.mask.size()) != T)
            throw DimensionMismatch("assemble: pattern length must equal T");

    ConvexProblem prob;
    prob.T = T;
    prob.d = d;
    prob.P = P;
    prob.y = y;
    prob.rho_T = rho_T;
    prob.A.setZero(T, 2 * d * P);
    prob.G.setZero(2 * P * T, 2 * d * P);
    for (int p = 0; p < P; ++p) {
        const auto& mask = patterns.patterns[p].mask;
        for (int t = 0; t < T; ++t) {
            const double m = mask[t] ? 1.0 : 0.0;
            const double s = 2.0 * m - 1.0;
            prob.A.row(t).segment(p * d, d) = m * X.row(t);
            prob.A.row(t).segment((P + p) * d, d) = -m * X.row(t);
            prob.G.row(p * T + t).segment(p * d, d) = s * X.row(t);
            prob.G.row((P + p) * T + t).segment((P + p) * d, d) = s * X.row(t);
        }
    }
    prob.foreign_patterns = patterns.source_x_fingerprint != fingerprint_matrix(X);
    return prob;
}

inline double objective_value(const ConvexProblem& prob, const Eigen::VectorXd& w_flat) {
    double reg = 0.0;
    for (int j = 0; j < prob.groups(); ++j) reg += w_flat.segment(j * prob.d, prob.d).norm();
    return (prob.A * w_flat - prob.y).squaredNorm() + prob.rho_T * reg;
}

inline double objective_value(const ConvexProblem& prob, const ConvexWeights& w) {
    return objective_value(prob, w.flatten());
}

namespace detail {

// Lawson-Hanson nonnegative least squares: min |B mu - r| over mu >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& B, const Eigen::VectorXd& r) {
    const int n = static_cast<int>(B.cols());
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
    if (n == 0) return mu;
    std::vector<bool> passive(n, false);
    Eigen::VectorXd grad = B.transpose() * (r - B * mu);
    const double tol = 1e-12 * (1.0 + grad.cwiseAbs().maxCoeff());
    const int max_outer = 3 * n + 30;
    for (int outer = 0; outer < max_outer; ++outer) {
        int best = -1;
        double best_g = tol;
        for (int i = 0; i < n; ++i)
            if (!passive[i] && grad[i] > best_g) {
                best_g = grad[i];
                best = i;
            }
        if (best < 0) break;
        passive[best] = true;
        for (int inner = 0; inner < max_outer; ++inner) {
            std::vector<int> pidx;
            for (int i = 0; i < n; ++i)
                if (passive[i]) pidx.push_back(i);
            if (pidx.empty()) break;
            Eigen::MatrixXd Bp(B.rows(), pidx.size());
            for (std::size_t c = 0; c < pidx.size(); ++c) Bp.col(c) = B.col(pidx[c]);
            const Eigen::VectorXd z = Bp.colPivHouseholderQr().solve(r);
            if (z.size() == 0) break;
            if (z.minCoeff() > 0.0) {
                mu.setZero();
                for (std::size_t c = 0; c < pidx.size(); ++c) mu[pidx[c]] = z[c];
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < pidx.size(); ++c)
                if (z[c] <= 0.0) {
                    const double denom = mu[pidx[c]] - z[c];
                    if (denom > 0.0) alpha = std::min(alpha, mu[pidx[c]] / denom);
                }
            if (!std::isfinite(alpha)) alpha = 0.0;
            for (std::size_t c = 0; c < pidx.size(); ++c) {
                mu[pidx[c]] += alpha * (z[c] - mu[pidx[c]]);
                if (mu[pidx[c]] <= 1e-14) {
                    mu[pidx[c]] = 0.0;
                    passive[pidx[c]] = false;
                }
            }
        }
        grad = B.transpose() * (r - B * mu);
    }
    return mu;
}

}  // namespace detail

/// Norm of the nearest zero in the subdifferential plus normal cone at w.
/// Ingredients: the smooth gradient, the exact group subgradient on nonzero
/// groups, a rho_T-ball subgradient on zero groups, and nonnegative
/// multipliers on the rows active at w (slack below feas_tol). The ball
/// choice and the multipliers couple, so they are minimized jointly by
/// exact alternation (ball projection <-> NNLS); the value is monotone
/// nonincreasing across rounds and any early stop only over-estimates,
/// never falsely certifies.
inline double kkt_residual(const ConvexProblem& prob, const ConvexWeights& w,
                           double feas_tol = 1e-8) {
    const Eigen::VectorXd wf = w.flatten();
    Eigen::VectorXd v = 2.0 * prob.A.transpose() * (prob.A * wf - prob.y);
    std::vector<int> zero_groups;
    for (int j = 0; j < prob.groups(); ++j) {
        const auto seg = wf.segment(j * prob.d, prob.d);
        const double n = seg.norm();
        if (n > 0.0)
            v.segment(j * prob.d, prob.d) += prob.rho_T * seg / n;
        else
            zero_groups.push_back(j);
    }

    // residual after the optimal ball subgradient for fixed multipliers
    auto shrunk_norm = [&](const Eigen::VectorXd& r) {
        double sq = r.squaredNorm();
        for (int j : zero_groups) {
            const auto rg = r.segment(j * prob.d, prob.d);
            sq -= rg.squaredNorm();
            const double left = std::max(rg.norm() - prob.rho_T, 0.0);
            sq += left * left;
        }
        return std::sqrt(std::max(sq, 0.0));
    };

    const Eigen::VectorXd slack = prob.G * wf;
    std::vector<int> active;
    for (int i = 0; i < slack.size(); ++i)
        if (slack[i] < feas_tol) active.push_back(i);
    if (active.empty()) return shrunk_norm(v);

    Eigen::MatrixXd Ga_t(prob.cols(), active.size());
    for (std::size_t c = 0; c < active.size(); ++c) Ga_t.col(c) = prob.G.row(active[c]).transpose();

    // s = 0 start: fit multipliers on the raw vector first, then shrink.
    // A ball-clip start can drop the alternation into a slow-decay corner.
    Eigen::VectorXd s = Eigen::VectorXd::Zero(v.size());
    double best = shrunk_norm(v);
    for (int round = 0; round < 100; ++round) {
        const Eigen::VectorXd mu = detail::nnls(Ga_t, v + s);
        const Eigen::VectorXd r = v - Ga_t * mu;
        const double val = shrunk_norm(r);
        for (int j : zero_groups) {
            const auto rg = r.segment(j * prob.d, prob.d);
            const double n = rg.norm();
            s.segment(j * prob.d, prob.d) =
                n > 0.0 ? (-std::min(1.0, prob.rho_T / n) * rg).eval()
                        : Eigen::VectorXd::Zero(prob.d);
        }
        if (val >= best - 1e-13 * (1.0 + best)) {
            best = std::min(best, val);
            break;
        }
        best = val;
    }
    return best;
}

namespace detail {

// Per-unit view of the problem. G is block diagonal with one T x d block
// per unit and the fit Gram matrix has rank <= T, so the w-update system
// (2 A'A + sigma (I + G'G)) is a block-diagonal matrix plus a rank-T
// correction: Woodbury reduces each solve to 2P small block backsolves and
// one T x T capacitance solve.
struct BlockKernel {
    int T, d, P, N;
    double sigma;
    std::vector<Eigen::MatrixXd> Gb;            // unit blocks of G, T x d
    std::vector<Eigen::LLT<Eigen::MatrixXd>> Dllt;   // sigma (I + Gb'Gb), d x d
    Eigen::LLT<Eigen::MatrixXd> Kllt;           // I/2 + A D^{-1} A'
    Eigen::VectorXd scratch_N, scratch_T;

    BlockKernel(const ConvexProblem& prob, double sigma_in)
        : T(prob.T), d(prob.d), P(prob.P), N(prob.cols()), sigma(sigma_in) {
        Gb.reserve(2 * P);
        Dllt.reserve(2 * P);
        for (int j = 0; j < 2 * P; ++j) {
            Gb.push_back(prob.G.block(j * T, j * d, T, d));
            Eigen::MatrixXd Dj = sigma * (Eigen::MatrixXd::Identity(d, d) +
                                          Gb[j].transpose() * Gb[j]);
            Dllt.emplace_back(Dj);
            if (Dllt.back().info() != Eigen::Success)
                throw std::runtime_error("solve: block system is not positive definite");
        }
        Eigen::MatrixXd K = 0.5 * Eigen::MatrixXd::Identity(T, T);
        for (int j = 0; j < 2 * P; ++j) {
            const Eigen::MatrixXd Aj = prob.A.middleCols(j * d, d);
            K.noalias() += Aj * Dllt[j].solve(Aj.transpose());
        }
        Kllt.compute(K);
        if (Kllt.info() != Eigen::Success)
            throw std::runtime_error("solve: capacitance system is not positive definite");
        scratch_N.resize(N);
        scratch_T.resize(T);
    }

    void dinv_inplace(Eigen::VectorXd& v) const {
        for (int j = 0; j < 2 * P; ++j) {
            Eigen::Map<Eigen::VectorXd> seg(v.data() + j * d, d);
            seg = Dllt[j].solve(seg);
        }
    }

    // x = (D + 2 A'A)^{-1} b via Woodbury
    void solve_system(const ConvexProblem& prob, const Eigen::VectorXd& b,
                      Eigen::VectorXd& x) {
        x = b;
        dinv_inplace(x);
        scratch_T.noalias() = prob.A * x;
        scratch_T = Kllt.solve(scratch_T);
        scratch_N.noalias() = prob.A.transpose() * scratch_T;
        dinv_inplace(scratch_N);
        x -= scratch_N;
    }

    void apply_G(const Eigen::VectorXd& w, Eigen::VectorXd& out) const {
        for (int j = 0; j < 2 * P; ++j)
            out.segment(j * T, T).noalias() = Gb[j] * w.segment(j * d, d);
    }

    void apply_Gt(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
        for (int j = 0; j < 2 * P; ++j)
            out.segment(j * d, d).noalias() = Gb[j].transpose() * v.segment(j * T, T);
    }
};

}  // namespace detail

/// Operator-splitting solve with two auxiliary copies: one carries the
/// group prox, the other the nonnegativity projection of the slack G w.
/// The w-update factorizations are built once per solve and reused every
/// iteration. Convergence is declared on the KKT residual and feasibility
/// of the returned (exactly sparse) iterate, not on ADMM residuals alone.
inline std::pair<ConvexWeights, SolverReport> solve(const ConvexProblem& prob,
                                                    const SolverConfig& cfg = {},
                                                    const ConvexWeights* warm_start = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const int N = prob.cols();
    const int R = static_cast<int>(prob.G.rows());
    double sigma = cfg.penalty * prob.rho_T;
    if (sigma <= 0.0) throw std::invalid_argument("solve: penalty must be > 0");

    detail::BlockKernel kernel(prob, sigma);
    const Eigen::VectorXd Aty2 = 2.0 * prob.A.transpose() * prob.y;

    Eigen::VectorXd z1 = warm_start ? warm_start->flatten() : Eigen::VectorXd::Zero(N);
    if (z1.size() != N) throw DimensionMismatch("solve: warm start has the wrong shape");
    Eigen::VectorXd Gz(R), z2(R);
    kernel.apply_G(z1, Gz);
    z2 = Gz.cwiseMax(0.0);
    Eigen::VectorXd u1 = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd u2 = Eigen::VectorXd::Zero(R);
    Eigen::VectorXd w = z1, Gw = Gz;
    Eigen::VectorXd b(N), gt(N), z1_prev(N), z2_prev(R), dz(N);

    SolverReport rep;
    double kappa = prob.rho_T / sigma;
    const double alpha = cfg.over_relax;

    auto finish = [&](bool converged, int iters) {
        rep.converged = converged;
        rep.iterations = iters;
        rep.objective = objective_value(prob, z1);
        kernel.apply_G(z1, Gz);
        rep.max_violation = std::max(0.0, -Gz.minCoeff());
        rep.kkt_residual = kkt_residual(prob, ConvexWeights::unflatten(z1, prob.d, prob.P),
                                        cfg.feas_tol);
        rep.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return std::make_pair(ConvexWeights::unflatten(z1, prob.d, prob.P), rep);
    };

    long next_check = cfg.check_every;
    long next_balance = cfg.check_every;
    int balance_updates = 0;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        z2_prev = z2;
        z1_prev = z1;

        kernel.apply_Gt(z2 - u2, gt);
        b = Aty2 + sigma * (z1 - u1) + sigma * gt;
        kernel.solve_system(prob, b, w);
        kernel.apply_G(w, Gw);

        for (int j = 0; j < prob.groups(); ++j) {
            const Eigen::VectorXd wr = alpha * w.segment(j * prob.d, prob.d) +
                                       (1.0 - alpha) * z1.segment(j * prob.d, prob.d) +
                                       u1.segment(j * prob.d, prob.d);
            z1.segment(j * prob.d, prob.d) = group_soft_threshold(wr, kappa);
        }
        u1 += alpha * w + (1.0 - alpha) * z1_prev - z1;
        Gz = alpha * Gw + (1.0 - alpha) * z2_prev + u2;
        z2 = Gz.cwiseMax(0.0);
        u2 = Gz - z2;

        if (iter >= next_check || iter == cfg.max_iter) {
            next_check = iter + std::min<long>(iter, 2000L);
            const double primal =
                std::sqrt((w - z1).squaredNorm() + (Gw - z2).squaredNorm());
            dz = z1 - z1_prev;
            kernel.apply_Gt(z2 - z2_prev, gt);
            const double dual = sigma * (dz + gt).norm();
            rep.primal_residual = primal;
            rep.dual_residual = dual;
            const double scale = 1.0 + z1.norm();
            if ((primal <= 1e-2 * scale && dual <= 1e-2 * scale) || iter == cfg.max_iter) {
                kernel.apply_G(z1, Gz);
                const double feas = std::max(0.0, -Gz.minCoeff());
                if (feas <= cfg.feas_tol) {
                    const double kkt = kkt_residual(
                        prob, ConvexWeights::unflatten(z1, prob.d, prob.P), cfg.feas_tol);
                    if (kkt <= cfg.kkt_tol) return finish(true, iter);
                }
            }

            // residual balancing: move the penalty toward the scale where
            // primal and dual residuals match, on a capped interval so the
            // factorization still lives for long stretches between rebuilds
            constexpr double kBalanceThreshold = 10.0;   // BAL_THRESH
            constexpr double kBalanceClamp = 2.0;       // BAL_CLAMP
            constexpr long kBalanceDiv = 4;             // BAL_DIV
            constexpr long kBalanceCap = 2000;          // BAL_CAP
            if (cfg.adapt_penalty && iter >= next_balance && balance_updates < 100 &&
                iter < cfg.max_iter && dual > 0.0 && primal > 0.0) {
                const double ratio = primal / dual;
                if (ratio > kBalanceThreshold || ratio < 1.0 / kBalanceThreshold) {
                    const double factor =
                        std::clamp(std::sqrt(ratio), 1.0 / kBalanceClamp, kBalanceClamp);
                    sigma *= factor;
                    kappa = prob.rho_T / sigma;
                    u1 /= factor;
                    u2 /= factor;
                    kernel = detail::BlockKernel(prob, sigma);
                    ++balance_updates;
                }
                next_balance =
                    iter + std::clamp<long>(iter / kBalanceDiv, cfg.check_every, kBalanceCap);
            }
        }
    }
    return finish(false, cfg.max_iter);
}

}  // namespace cvxq
