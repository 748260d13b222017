#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>

#include "cvxq/errors.hpp"
#include "cvxq/rng.hpp"

namespace cvxq {

using State = Eigen::VectorXd;
using Action = Eigen::VectorXd;

/// A controlled deterministic plant x+ = f(x,u) with nonnegative stage cost.
///
/// Actions live in the per-coordinate box |u_i| <= action_bound. States with
/// |x|_inf > state_guard are treated as diverged rather than clamped, so bad
/// rollouts surface as errors instead of silently corrupting training data.
struct EnvModel {
    int state_dim = 1;
    int action_dim = 1;
    std::function<State(const State&, const Action&)> transition;
    std::function<double(const State&, const Action&)> stage_cost;
    double action_bound = 5.0;                 // c_u
    Eigen::VectorXd init_lo, init_hi;          // initial-state box
    double state_guard = 10.0;                 // x_max divergence cutoff
    std::string name;
};

enum class BuiltinPlant { paper_scalar, deadbeat_linear };

/// Scalar benchmark plant: x+ = 0.9 x^2 + 0.1 u, c = x^2 + (0.1u - 2x)^2,
/// |u| <= 5, initial states uniform on [0,1].
inline EnvModel make_paper_scalar() {
    EnvModel env;
    env.state_dim = 1;
    env.action_dim = 1;
    env.transition = [](const State& x, const Action& u) {
        State next(1);
        next[0] = 0.9 * x[0] * x[0] + 0.1 * u[0];
        return next;
    };
    env.stage_cost = [](const State& x, const Action& u) {
        const double e = 0.1 * u[0] - 2.0 * x[0];
        return x[0] * x[0] + e * e;
    };
    env.action_bound = 5.0;
    env.init_lo = Eigen::VectorXd::Zero(1);
    env.init_hi = Eigen::VectorXd::Ones(1);
    env.state_guard = 10.0;
    env.name = "paper_scalar";
    return env;
}

/// Analytic test plant: x+ = u, c = x^2. One step of u = 0 parks the state
/// at the origin, so finite-horizon values are known in closed form.
inline EnvModel make_deadbeat_linear() {
    EnvModel env;
    env.state_dim = 1;
    env.action_dim = 1;
    env.transition = [](const State&, const Action& u) { return u; };
    env.stage_cost = [](const State& x, const Action&) { return x[0] * x[0]; };
    env.action_bound = 5.0;
    env.init_lo = Eigen::VectorXd::Zero(1);
    env.init_hi = Eigen::VectorXd::Ones(1);
    env.state_guard = 10.0;
    env.name = "deadbeat_linear";
    return env;
}

inline EnvModel make_builtin(BuiltinPlant which) {
    return which == BuiltinPlant::paper_scalar ? make_paper_scalar() : make_deadbeat_linear();
}

namespace detail {
inline void check_inputs(const EnvModel& env, const State& x, const Action& u) {
    if (x.size() != env.state_dim || u.size() != env.action_dim)
        throw DimensionMismatch("env: state/action size does not match the model");
    if (u.lpNorm<Eigen::Infinity>() > env.action_bound)
        throw ActionOutOfBounds("env: |u|_inf exceeds action bound " +
                                std::to_string(env.action_bound));
    if (x.lpNorm<Eigen::Infinity>() > env.state_guard)
        throw StateDiverged("env: |x|_inf exceeds state guard " +
                            std::to_string(env.state_guard));
}
}  // namespace detail

inline State step(const EnvModel& env, const State& x, const Action& u) {
    detail::check_inputs(env, x, u);
    return env.transition(x, u);
}

inline double cost(const EnvModel& env, const State& x, const Action& u) {
    detail::check_inputs(env, x, u);
    const double c = env.stage_cost(x, u);
    if (c < 0.0)
        throw std::logic_error("env: stage cost is negative; the model violates its contract");
    return c;
}

/// Uniform sample from the initial-state box. Degenerate boxes return the
/// single point they contain.
inline State sample_initial_state(const EnvModel& env, RngStream& rng) {
    State x(env.state_dim);
    for (int i = 0; i < env.state_dim; ++i) x[i] = rng.uniform(env.init_lo[i], env.init_hi[i]);
    return x;
}

}  // namespace cvxq
