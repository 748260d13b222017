#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "cvxq/env.hpp"

namespace cvxq {

using Policy = std::function<Action(const State&)>;

/// T+1 states and T+1 actions; the extra action is the policy's choice at
/// the terminal state, which the regression targets need.
struct Trajectory {
    std::vector<State> states;
    std::vector<Action> actions;

    int horizon() const { return static_cast<int>(states.size()) - 1; }
};

/// One episode's regression data. Row t of X is [1, x_t', u_t']; row t of Z
/// is the same row of the extended sequence shifted by one.
struct RolloutBatch {
    Eigen::MatrixXd X;   // T x d, d = 1 + n + m
    Eigen::MatrixXd Z;   // T x d
    Eigen::VectorXd c;   // stage costs
    Eigen::VectorXd y;   // regression targets
    Trajectory trajectory;
    int episode_index = 0;
};

struct CollectResult {
    Trajectory trajectory;   // the prefix when diverged
    bool diverged = false;
};

/// Rolls the policy for T steps. A state beyond the divergence guard ends
/// the episode early; the prefix collected so far is returned with the
/// diverged flag set.
inline CollectResult collect_episode(const EnvModel& env, const Policy& policy,
                                     const State& x1, int T) {
    if (T < 1) throw std::invalid_argument("collect_episode: horizon must be >= 1");
    CollectResult out;
    Trajectory& traj = out.trajectory;
    traj.states.reserve(T + 1);
    traj.actions.reserve(T + 1);
    traj.states.push_back(x1);
    if (x1.lpNorm<Eigen::Infinity>() > env.state_guard) {
        out.diverged = true;
        return out;
    }
    for (int t = 0; t < T; ++t) {
        const Action u = policy(traj.states.back());
        traj.actions.push_back(u);
        const State next = step(env, traj.states.back(), u);
        traj.states.push_back(next);
        if (next.lpNorm<Eigen::Infinity>() > env.state_guard) {
            out.diverged = true;
            return out;
        }
    }
    traj.actions.push_back(policy(traj.states.back()));
    return out;
}

/// Builds X, Z and the stage-cost vector from a complete trajectory.
inline RolloutBatch build_design_matrices(const EnvModel& env, const Trajectory& traj) {
    const int T = traj.horizon();
    if (T < 1 || traj.actions.size() != traj.states.size())
        throw DimensionMismatch("build_design_matrices: need T+1 states and T+1 actions");
    const int n = env.state_dim, m = env.action_dim;
    const int d = 1 + n + m;
    RolloutBatch batch;
    batch.X.resize(T, d);
    batch.Z.resize(T, d);
    batch.c.resize(T);
    for (int t = 0; t < T; ++t) {
        batch.X(t, 0) = 1.0;
        batch.X.row(t).segment(1, n) = traj.states[t].transpose();
        batch.X.row(t).segment(1 + n, m) = traj.actions[t].transpose();
        batch.Z(t, 0) = 1.0;
        batch.Z.row(t).segment(1, n) = traj.states[t + 1].transpose();
        batch.Z.row(t).segment(1 + n, m) = traj.actions[t + 1].transpose();
        batch.c[t] = cost(env, traj.states[t], traj.actions[t]);
    }
    batch.trajectory = traj;
    return batch;
}

/// y_t = c_t + gamma * q_next(z_t) where z_t is row t of Z, i.e. the frozen
/// network evaluated at (x_{t+1}, u_{t+1}). The evaluator is passed as a
/// row functional so this header does not depend on the network type.
inline Eigen::VectorXd compute_targets(const RolloutBatch& batch,
                                       const std::function<double(const Eigen::VectorXd&)>& q_next,
                                       double gamma) {
    if (gamma < 0.0 || gamma > 1.0)
        throw std::invalid_argument("compute_targets: gamma must be in [0,1]");
    const int T = static_cast<int>(batch.c.size());
    Eigen::VectorXd y(T);
    for (int t = 0; t < T; ++t) y[t] = batch.c[t] + gamma * q_next(batch.Z.row(t).transpose());
    return y;
}

}  // namespace cvxq
