#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cvxq/env.hpp"

namespace cvxq {

/// Uniform 1-D grids for backward induction; the action axis spans the
/// plant's box [-c_u, c_u].
struct DpGrid {
    double x_lo = -3.0;
    double x_hi = 3.0;
    int nx = 2001;
    int nu = 1001;
};

/// value[i] holds V_{i+1} on the state grid for i = 0..T (value[T] is the
/// zero terminal table); policy[i] holds the minimizing action per grid
/// point for stages 1..T.
struct DpSolution {
    DpGrid grid;
    double c_u = 0.0;
    int horizon = 0;
    std::vector<Eigen::VectorXd> value;
    std::vector<Eigen::VectorXd> policy;
};

namespace detail {

inline double interp_clamped(const DpGrid& g, const Eigen::VectorXd& table, double x) {
    if (x <= g.x_lo) return table[0];
    if (x >= g.x_hi) return table[g.nx - 1];
    const double h = (g.x_hi - g.x_lo) / (g.nx - 1);
    const double s = (x - g.x_lo) / h;
    int i = static_cast<int>(s);
    if (i >= g.nx - 1) i = g.nx - 2;
    const double frac = s - i;
    return table[i] * (1.0 - frac) + table[i + 1] * frac;
}

inline int nearest_index(const DpGrid& g, double x, bool* outside = nullptr) {
    if (outside) *outside = x < g.x_lo || x > g.x_hi;
    const double h = (g.x_hi - g.x_lo) / (g.nx - 1);
    int i = static_cast<int>(std::lround((x - g.x_lo) / h));
    if (i < 0) i = 0;
    if (i >= g.nx) i = g.nx - 1;
    return i;
}

}  // namespace detail

/// Finite-horizon backward induction with linear interpolation of the next
/// stage's table (clamped at the grid ends). Ties in the action minimum go
/// to the smallest |u|, then the smaller u.
inline DpSolution solve_dp(const EnvModel& env, int T, const DpGrid& grid) {
    if (env.state_dim != 1 || env.action_dim != 1)
        throw DimensionMismatch("solve_dp: gridding supports scalar plants only");
    if (grid.nx < 2 || grid.nu < 2)
        throw std::invalid_argument("solve_dp: grids need at least two points");
    if (T < 0) throw std::invalid_argument("solve_dp: horizon must be >= 0");

    DpSolution sol;
    sol.grid = grid;
    sol.c_u = env.action_bound;
    sol.horizon = T;
    sol.value.assign(T + 1, Eigen::VectorXd::Zero(grid.nx));
    sol.policy.assign(T, Eigen::VectorXd::Zero(grid.nx));

    const double hu = 2.0 * env.action_bound / (grid.nu - 1);
    const double hx = (grid.x_hi - grid.x_lo) / (grid.nx - 1);
    State xv(1);
    Action uv(1);
    for (int t = T - 1; t >= 0; --t) {
        Eigen::VectorXd& vt = sol.value[t];
        Eigen::VectorXd& pt = sol.policy[t];
        const Eigen::VectorXd& vnext = sol.value[t + 1];
        for (int i = 0; i < grid.nx; ++i) {
            xv[0] = grid.x_lo + i * hx;
            double best_v = 0.0, best_u = 0.0;
            bool first = true;
            for (int j = 0; j < grid.nu; ++j) {
                const double u = -env.action_bound + j * hu;
                uv[0] = u;
                const double q = env.stage_cost(xv, uv) +
                                 detail::interp_clamped(grid, vnext, env.transition(xv, uv)[0]);
                bool take = first;
                if (!first) {
                    if (q != best_v)
                        take = q < best_v;
                    else if (std::abs(u) != std::abs(best_u))
                        take = std::abs(u) < std::abs(best_u);
                    else
                        take = u < best_u;
                }
                if (take) {
                    best_v = q;
                    best_u = u;
                    first = false;
                }
            }
            vt[i] = best_v;
            pt[i] = best_u;
        }
    }
    return sol;
}

/// Interpolated V_{t}(x) lookup, t = 1..T+1.
inline double dp_value_at(const DpSolution& sol, int t, double x) {
    if (t < 1 || t > sol.horizon + 1) throw std::invalid_argument("dp_value_at: stage out of range");
    return detail::interp_clamped(sol.grid, sol.value[t - 1], x);
}

struct PolicyRollout {
    double cost = 0.0;
    bool left_grid = false;   // a visited state fell outside the grid span
};

/// Rolls the true (ungridded) dynamics under the tabulated controller,
/// reading each stage's action at the nearest state grid point. Returns
/// the undiscounted T-step cost.
inline PolicyRollout simulate_policy(const EnvModel& env, const DpSolution& sol, double x0) {
    PolicyRollout out;
    State x(1);
    x[0] = x0;
    Action u(1);
    for (int t = 0; t < sol.horizon; ++t) {
        bool outside = false;
        const int i = detail::nearest_index(sol.grid, x[0], &outside);
        out.left_grid = out.left_grid || outside;
        u[0] = sol.policy[t][i];
        out.cost += env.stage_cost(x, u);
        x = env.transition(x, u);
    }
    return out;
}

}  // namespace cvxq
