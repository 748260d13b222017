#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cvxq/convex_solver.hpp"
#include "cvxq/env.hpp"
#include "cvxq/patterns.hpp"
#include "cvxq/qnet.hpp"
#include "cvxq/rng.hpp"
#include "cvxq/rollout.hpp"

namespace cvxq {

enum class PatternPolicy { fixed_initial, per_episode };

/// How the first episode's weights come about. `zero` starts from Q == 0,
/// whose greedy action is identically 0 by the tie rule; on plants whose
/// data then carries no action variation the refits can never grow an
/// action response, so the loop parks at the u == 0 policy. `bootstrap_fit`
/// solves one program on the bootstrap rollout itself (random actions,
/// targets = stage costs), which seeds a genuine action response.
enum class InitPolicy { zero, bootstrap_fit };

struct StepSchedule {
    enum class Kind { constant, harmonic };
    Kind kind = Kind::harmonic;
    double alpha = 0.5;   // used by the constant schedule only
};

struct LearnerConfig {
    double gamma = 0.9;
    double rho = 1e-4;
    int horizon = 5;             // T
    int episodes = 1000;         // K
    int pattern_budget = 22;     // P cap
    PatternPolicy pattern_policy = PatternPolicy::fixed_initial;
    InitPolicy init_policy = InitPolicy::bootstrap_fit;
    StepSchedule schedule;
    std::uint64_t seed = 1;
    SolverConfig solver;
    bool warm_start = true;
    int action_grid_resolution = 101;   // only used when action_dim > 1

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("learner.gamma", "must be in [0,1]");
        if (rho <= 0.0) throw ConfigError("learner.rho", "must be > 0");
        if (horizon < 1) throw ConfigError("learner.horizon", "must be >= 1");
        if (episodes < 0) throw ConfigError("learner.episodes", "must be >= 0");
        if (pattern_budget < 1) throw ConfigError("learner.pattern_budget", "must be >= 1");
        if (schedule.kind == StepSchedule::Kind::constant &&
            (schedule.alpha <= 0.0 || schedule.alpha >= 1.0))
            throw ConfigError("learner.step_schedule.alpha", "must be in (0,1)");
    }
};

inline double step_size(const StepSchedule& s, int k) {
    if (k < 1) throw std::invalid_argument("step_size: episode index starts at 1");
    return s.kind == StepSchedule::Kind::constant ? s.alpha : 1.0 / k;
}

/// w_k + alpha * (w - w_k), unit index p blending with unit index p.
inline ConvexWeights blend(const ConvexWeights& w_k, const ConvexWeights& w, double alpha) {
    if (w_k.d() != w.d() || w_k.P() != w.P())
        throw DimensionMismatch("blend: weight shapes differ");
    ConvexWeights out = w_k;
    out.w1 += alpha * (w.w1 - w_k.w1);
    out.w2 += alpha * (w.w2 - w_k.w2);
    return out;
}

struct EpisodeStats {
    int k = 0;
    bool aborted = false;
    bool solver_converged = false;
    double objective = 0.0;
    double step_norm_inf = 0.0;
    double bellman_mse = 0.0;
    double max_abs_x = 0.0;
    double max_abs_u = 0.0;
    int solver_iterations = 0;
    double kkt_residual = 0.0;
};

struct TrainingTrace {
    double gamma = 0.0, rho = 0.0;
    int horizon = 0, episodes = 0;
    std::uint64_t seed = 0;
    std::string pattern_policy, schedule;
    int aborted_episodes = 0;
    int unconverged_solves = 0;
    int foreign_pattern_episodes = 0;
    std::vector<EpisodeStats> rows;
};

/// Everything a per-episode observer can see. Used by tests to check the
/// per-episode identities without re-running the training loop.
struct EpisodeView {
    int k;
    const RolloutBatch& batch;
    const ConvexProblem& problem;
    const ConvexWeights& solution;   // this episode's convex optimum
    const SolverReport& report;
    const ConvexWeights& previous;   // w_k
    const ConvexWeights& blended;    // w_{k+1}
    double alpha;
};

using EpisodeObserver = std::function<void(const EpisodeView&)>;

struct TrainResult {
    ConvexWeights weights;
    QNetwork net;
    TrainingTrace trace;
    PatternSet patterns;
};

struct BootstrapResult {
    PatternSet patterns;
    ConvexWeights initial_weights;
    Eigen::MatrixXd X;
};

/// One uniform-random-action rollout from a sampled x1; its design matrix
/// seeds the pattern set. Divergence resamples the actions, up to 10 times.
inline BootstrapResult bootstrap(const EnvModel& env, const LearnerConfig& cfg) {
    RngStream boot(cfg.seed, "bootstrap");
    const State x1 = sample_initial_state(env, boot);
    Policy random_policy = [&](const State&) {
        Action u(env.action_dim);
        for (int j = 0; j < env.action_dim; ++j) u[j] = boot.uniform(-env.action_bound, env.action_bound);
        return u;
    };
    CollectResult rolled;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        rolled = collect_episode(env, random_policy, x1, cfg.horizon);
        ok = !rolled.diverged;
    }
    if (!ok) throw StateDiverged("bootstrap: rollout diverged in 10 attempts");
    const RolloutBatch batch = build_design_matrices(env, rolled.trajectory);
    RngStream gates(cfg.seed, "gates", 0);
    BootstrapResult out{sample_patterns(batch.X, cfg.pattern_budget, gates),
                        ConvexWeights::zero(1 + env.state_dim + env.action_dim,
                                            0),
                        batch.X};
    out.initial_weights = ConvexWeights::zero(1 + env.state_dim + env.action_dim,
                                              out.patterns.size());
    return out;
}

namespace detail {

inline Policy greedy_policy(const QNetwork& net, const EnvModel& env, int grid_resolution) {
    if (env.action_dim == 1)
        return [&net, &env](const State& x) {
            Action u(1);
            u[0] = argmin_action_1d(net, x, env.action_bound).action;
            return u;
        };
    return [&net, &env, grid_resolution](const State& x) {
        return argmin_action_grid(net, x, env.action_bound, grid_resolution).action;
    };
}

// Keeps the pattern count fixed across episodes: truncate extra masks, pad
// shortfalls with all-ones masks so blending by unit index stays shaped.
inline PatternSet fit_to_budget(PatternSet set, int P, int T) {
    while (set.size() > P) set.patterns.pop_back();
    while (set.size() < P) {
        ActivationPattern ones;
        ones.mask.assign(T, 1);
        set.patterns.push_back(std::move(ones));
    }
    return set;
}

}  // namespace detail

/// Runs the full episodic loop: greedy rollout under the frozen network,
/// target construction, convex refit, blended update. Deterministic given
/// the config seed. Diverged episodes are skipped (k still advances);
/// unconverged solves are blended anyway and flagged in the trace.
inline TrainResult train(const EnvModel& env, const LearnerConfig& cfg,
                         const EpisodeObserver& observer = {}) {
    cfg.validate();
    const int T = cfg.horizon;
    const double rho_T = cfg.rho * T;

    BootstrapResult boot = bootstrap(env, cfg);
    const int P = boot.patterns.size();
    ConvexWeights w_k = boot.initial_weights;
    QNetwork net = from_convex(w_k);

    TrainingTrace trace;
    trace.gamma = cfg.gamma;
    trace.rho = cfg.rho;
    trace.horizon = T;
    trace.episodes = cfg.episodes;
    trace.seed = cfg.seed;
    trace.pattern_policy =
        cfg.pattern_policy == PatternPolicy::fixed_initial ? "fixed_initial" : "per_episode";
    trace.schedule = cfg.schedule.kind == StepSchedule::Kind::constant
                         ? "constant(" + std::to_string(cfg.schedule.alpha) + ")"
                         : "harmonic";

    for (int k = 1; k <= cfg.episodes; ++k) {
        EpisodeStats row;
        row.k = k;
        RngStream init_stream(cfg.seed, "episode-init", static_cast<std::uint64_t>(k));
        const State x1 = sample_initial_state(env, init_stream);
        const Policy policy = detail::greedy_policy(net, env, cfg.action_grid_resolution);
        const CollectResult rolled = collect_episode(env, policy, x1, T);

        for (const auto& s : rolled.trajectory.states)
            row.max_abs_x = std::max(row.max_abs_x, s.lpNorm<Eigen::Infinity>());
        for (const auto& a : rolled.trajectory.actions)
            row.max_abs_u = std::max(row.max_abs_u, a.lpNorm<Eigen::Infinity>());

        if (rolled.diverged) {
            row.aborted = true;
            trace.aborted_episodes += 1;
            trace.rows.push_back(row);
            continue;
        }

        RolloutBatch batch = build_design_matrices(env, rolled.trajectory);
        batch.episode_index = k;
        batch.y = compute_targets(
            batch, [&](const Eigen::VectorXd& z) { return evaluate_row(net, z); }, cfg.gamma);

        PatternSet masks = boot.patterns;
        if (cfg.pattern_policy == PatternPolicy::per_episode) {
            RngStream gates(cfg.seed, "gates", static_cast<std::uint64_t>(k));
            masks = detail::fit_to_budget(sample_patterns(batch.X, cfg.pattern_budget, gates),
                                          P, T);
        }

        const ConvexProblem problem = assemble(batch.X, batch.y, masks, rho_T);
        if (problem.foreign_patterns) trace.foreign_pattern_episodes += 1;
        auto [w_solve, report] = cvxq::solve(problem, cfg.solver, cfg.warm_start ? &w_k : nullptr);
        if (!report.converged) trace.unconverged_solves += 1;

        const double alpha = step_size(cfg.schedule, k);
        const ConvexWeights w_next = blend(w_k, w_solve, alpha);
        const QNetwork net_next = from_convex(w_next);

        row.solver_converged = report.converged;
        row.objective = report.objective;
        row.solver_iterations = report.iterations;
        row.kkt_residual = report.kkt_residual;
        row.step_norm_inf = std::max((w_next.w1 - w_k.w1).cwiseAbs().maxCoeff(),
                                     (w_next.w2 - w_k.w2).cwiseAbs().maxCoeff());
        double mse = 0.0;
        for (int t = 0; t < T; ++t) {
            const double r = batch.y[t] - evaluate_row(net_next, batch.X.row(t).transpose());
            mse += r * r;
        }
        row.bellman_mse = mse / T;
        trace.rows.push_back(row);

        if (observer)
            observer(EpisodeView{k, batch, problem, w_solve, report, w_k, w_next, alpha});

        w_k = w_next;
        net = net_next;
    }

    return TrainResult{w_k, net, std::move(trace), std::move(boot.patterns)};
}

}  // namespace cvxq
