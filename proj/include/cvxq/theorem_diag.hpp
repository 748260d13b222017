#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <vector>

#include "cvxq/convex_solver.hpp"
#include "cvxq/rollout.hpp"

namespace cvxq {

/// Per-unit regularization floor rho / (2 v^2) with v the unit's group
/// norm at the converged solution. Zero-norm units have no finite entry
/// and are reported separately.
struct FDiagonal {
    std::vector<double> entries;       // rho / (2 |w_{i,p}|^2), nonzero units only
    std::vector<double> group_norms;   // v = |w_{i,p}|, aligned with entries
    std::vector<int> units;            // unit index in [0, 2P), aligned with entries
    std::vector<int> zero_units;       // excluded units
    int P = 0;

    double f_min() const {   // min over nonzero units of 1/v
        double best = std::numeric_limits<double>::infinity();
        for (double v : group_norms) best = std::min(best, 1.0 / v);
        return best;
    }
    double f_max() const {
        double best = 0.0;
        for (double v : group_norms) best = std::max(best, 1.0 / v);
        return best;
    }
};

inline FDiagonal effective_F(const ConvexWeights& w, double rho) {
    if (rho <= 0.0) throw std::invalid_argument("effective_F: rho must be > 0");
    FDiagonal F;
    F.P = w.P();
    for (int j = 0; j < 2 * w.P(); ++j) {
        const Eigen::VectorXd col = j < w.P() ? w.w1.col(j) : w.w2.col(j - w.P());
        const double v = col.norm();
        if (v > 0.0) {
            F.entries.push_back(rho / (2.0 * v * v));
            F.group_norms.push_back(v);
            F.units.push_back(j);
        } else {
            F.zero_units.push_back(j);
        }
    }
    if (F.entries.empty())
        throw EmptyFError("effective_F: all units have zero norm; diagnostics impossible");
    return F;
}

struct StabilityConstants {
    double lambda = 0.0;
    double beta = 0.0;
    bool side1_empty = false;   // no nonzero w1 units contributed to the floor
    bool side2_empty = false;
};

/// beta = max_t max(|x_t|^2, |u_t|^2) over the first T steps; lambda is the
/// minimum eigenvalue of (1/T)(sum_t [X_t'; -X_t'][X_t -X_t] + F_c) where
/// F_c collapses the per-unit diagonal to one d-block per side using the
/// side's minimum entry. The collapse is this artifact's dimensional
/// reading of the 2P-entry diagonal against the 2d-column row stack; the
/// report carries the flag so the interpretation stays visible.
inline StabilityConstants stability_constants(const RolloutBatch& batch, const FDiagonal& F,
                                              int d, int P) {
    const int T = static_cast<int>(batch.X.rows());
    if (T < 1) throw DimensionMismatch("stability_constants: empty batch");
    if (F.entries.empty()) throw EmptyFError("stability_constants: empty F");

    StabilityConstants out;
    for (int t = 0; t < T; ++t) {
        const double xs = batch.trajectory.states[t].lpNorm<Eigen::Infinity>();
        const double us = batch.trajectory.actions[t].lpNorm<Eigen::Infinity>();
        out.beta = std::max(out.beta, std::max(xs * xs, us * us));
    }

    double f1 = std::numeric_limits<double>::infinity();
    double f2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < F.entries.size(); ++i) {
        if (F.units[i] < P)
            f1 = std::min(f1, F.entries[i]);
        else
            f2 = std::min(f2, F.entries[i]);
    }
    out.side1_empty = !std::isfinite(f1);
    out.side2_empty = !std::isfinite(f2);
    if (out.side1_empty) f1 = 0.0;
    if (out.side2_empty) f2 = 0.0;

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    for (int t = 0; t < T; ++t) {
        Eigen::VectorXd m(2 * d);
        m.head(d) = batch.X.row(t).transpose();
        m.tail(d) = -batch.X.row(t).transpose();
        S += m * m.transpose();
    }
    S.topLeftCorner(d, d) += f1 * Eigen::MatrixXd::Identity(d, d);
    S.bottomRightCorner(d, d) += f2 * Eigen::MatrixXd::Identity(d, d);
    S /= static_cast<double>(T);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    out.lambda = eig.eigenvalues().minCoeff();
    return out;
}

struct HorizonCheck {
    double t_min = 0.0;
    bool ok = false;
    double mu = std::numeric_limits<double>::quiet_NaN();
};

/// T_min = (3/2)(gamma beta / lambda)^2; when T clears it, the contraction
/// modulus term mu = 1 - sqrt(3 gamma^2 beta^2 / (2 lambda^2 T)) lies in (0,1).
inline HorizonCheck horizon_check(double gamma, double beta, double lambda, double T) {
    if (lambda <= 0.0) throw std::invalid_argument("horizon_check: lambda must be > 0");
    HorizonCheck out;
    const double ratio = gamma * beta / lambda;
    out.t_min = 1.5 * ratio * ratio;
    out.ok = T > out.t_min;
    if (out.ok) out.mu = 1.0 - std::sqrt(1.5 * ratio * ratio / T);
    return out;
}

/// (e^mu / mu)(f_max / lambda) |w| rho, with |w| the converged weight norm
/// standing in for the unobservable optimum; every caller labels the
/// result an estimate.
inline double bound_estimate(double mu, double f_max, double lambda, double w_norm, double rho) {
    if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("bound_estimate: mu must be in (0,1)");
    return std::exp(mu) / mu * (f_max / lambda) * w_norm * rho;
}

/// Convergence radius reported for the constant step schedule:
/// (mu a / (1 - mu a)) (rho f_max / lambda) |w|.
inline double constant_alpha_radius(double mu, double alpha, double f_max, double lambda,
                                    double w_norm, double rho) {
    const double ma = mu * alpha;
    return ma / (1.0 - ma) * (rho * f_max / lambda) * w_norm;
}

struct TheoremReport {
    double beta = 0.0;
    double lambda = 0.0;
    FDiagonal f_diagonal;
    double t_min = 0.0;
    bool horizon_ok = false;
    double mu = std::numeric_limits<double>::quiet_NaN();
    double f_min = 0.0, f_max = 0.0;
    double w_norm_inf_estimate = 0.0;
    double bound_estimate_value = std::numeric_limits<double>::quiet_NaN();
    double constant_alpha_radius_estimate = std::numeric_limits<double>::quiet_NaN();
    bool side1_empty = false, side2_empty = false;
    int zero_unit_count = 0;
    int horizon = 0;
};

/// Assembles every checkable quantity from a batch and a converged
/// solution. `constant_alpha` is passed only under the constant schedule.
inline TheoremReport theorem_report(const RolloutBatch& batch, const ConvexWeights& w,
                                    double rho, double gamma,
                                    double constant_alpha = std::numeric_limits<double>::quiet_NaN()) {
    TheoremReport rep;
    rep.horizon = static_cast<int>(batch.X.rows());
    rep.f_diagonal = effective_F(w, rho);
    rep.zero_unit_count = static_cast<int>(rep.f_diagonal.zero_units.size());
    const StabilityConstants sc = stability_constants(batch, rep.f_diagonal, w.d(), w.P());
    rep.beta = sc.beta;
    rep.lambda = sc.lambda;
    rep.side1_empty = sc.side1_empty;
    rep.side2_empty = sc.side2_empty;
    rep.f_min = rep.f_diagonal.f_min();
    rep.f_max = rep.f_diagonal.f_max();
    rep.w_norm_inf_estimate = w.norm_inf();
    if (sc.lambda > 0.0) {
        const HorizonCheck hc = horizon_check(gamma, sc.beta, sc.lambda, rep.horizon);
        rep.t_min = hc.t_min;
        rep.horizon_ok = hc.ok;
        rep.mu = hc.mu;
        if (hc.ok) {
            rep.bound_estimate_value =
                bound_estimate(hc.mu, rep.f_max, sc.lambda, rep.w_norm_inf_estimate, rho);
            if (std::isfinite(constant_alpha))
                rep.constant_alpha_radius_estimate = constant_alpha_radius(
                    hc.mu, constant_alpha, rep.f_max, sc.lambda, rep.w_norm_inf_estimate, rho);
        }
    }
    return rep;
}

}  // namespace cvxq
