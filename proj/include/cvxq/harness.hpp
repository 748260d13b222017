#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxq/dp_baseline.hpp"
#include "cvxq/learner.hpp"
#include "cvxq/theorem_diag.hpp"

namespace cvxq {

using nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

struct PlantConfig {
    std::string name = "paper_scalar";
    std::optional<double> x_max;
    std::optional<double> c_u;
    std::optional<double> init_lo;
    std::optional<double> init_hi;
};

struct EvalConfig {
    std::vector<double> initial_states{0.25, 0.5, 0.75, 1.0};
    int horizon = 5;
};

struct RunConfig {
    PlantConfig plant;
    LearnerConfig learner;
    DpGrid dp;
    EvalConfig eval;
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& path,
                                std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                                   "unknown key");
    }
}

template <typename T>
void read_field(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key, "wrong type");
    }
}

}  // namespace detail

inline EnvModel make_env(const PlantConfig& pc) {
    EnvModel env;
    if (pc.name == "paper_scalar")
        env = make_paper_scalar();
    else if (pc.name == "deadbeat_linear")
        env = make_deadbeat_linear();
    else
        throw ConfigError("plant.name", "unknown plant '" + pc.name + "'");
    if (pc.x_max) env.state_guard = *pc.x_max;
    if (pc.c_u) env.action_bound = *pc.c_u;
    if (pc.init_lo) env.init_lo.setConstant(*pc.init_lo);
    if (pc.init_hi) env.init_hi.setConstant(*pc.init_hi);
    if (env.state_guard <= 0.0) throw ConfigError("plant.x_max", "must be > 0");
    if (env.action_bound <= 0.0) throw ConfigError("plant.c_u", "must be > 0");
    if ((env.init_hi - env.init_lo).minCoeff() < 0.0)
        throw ConfigError("plant.init_lo", "initial region is empty");
    return env;
}

inline RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    detail::reject_unknown_keys(j, "", {"plant", "learner", "solver", "dp", "eval", "seeds"});

    if (j.contains("plant")) {
        const json& p = j.at("plant");
        detail::reject_unknown_keys(p, "plant", {"name", "x_max", "c_u", "init_lo", "init_hi"});
        detail::read_field(p, "plant", "name", cfg.plant.name);
        if (p.contains("x_max")) cfg.plant.x_max = p.at("x_max").get<double>();
        if (p.contains("c_u")) cfg.plant.c_u = p.at("c_u").get<double>();
        if (p.contains("init_lo")) cfg.plant.init_lo = p.at("init_lo").get<double>();
        if (p.contains("init_hi")) cfg.plant.init_hi = p.at("init_hi").get<double>();
    }

    if (j.contains("learner")) {
        const json& l = j.at("learner");
        detail::reject_unknown_keys(l, "learner",
                                    {"gamma", "rho", "horizon", "episodes", "pattern_budget",
                                     "pattern_policy", "step_schedule", "warm_start",
                                     "action_grid_resolution"});
        detail::read_field(l, "learner", "gamma", cfg.learner.gamma);
        detail::read_field(l, "learner", "rho", cfg.learner.rho);
        detail::read_field(l, "learner", "horizon", cfg.learner.horizon);
        detail::read_field(l, "learner", "episodes", cfg.learner.episodes);
        detail::read_field(l, "learner", "pattern_budget", cfg.learner.pattern_budget);
        detail::read_field(l, "learner", "warm_start", cfg.learner.warm_start);
        detail::read_field(l, "learner", "action_grid_resolution",
                           cfg.learner.action_grid_resolution);
        if (l.contains("pattern_policy")) {
            const std::string s = l.at("pattern_policy").get<std::string>();
            if (s == "fixed_initial")
                cfg.learner.pattern_policy = PatternPolicy::fixed_initial;
            else if (s == "per_episode")
                cfg.learner.pattern_policy = PatternPolicy::per_episode;
            else
                throw ConfigError("learner.pattern_policy",
                                  "must be 'fixed_initial' or 'per_episode'");
        }
        if (l.contains("step_schedule")) {
            const json& s = l.at("step_schedule");
            detail::reject_unknown_keys(s, "learner.step_schedule", {"kind", "alpha"});
            std::string kind = "harmonic";
            detail::read_field(s, "learner.step_schedule", "kind", kind);
            if (kind == "harmonic") {
                cfg.learner.schedule.kind = StepSchedule::Kind::harmonic;
            } else if (kind == "constant") {
                cfg.learner.schedule.kind = StepSchedule::Kind::constant;
                detail::read_field(s, "learner.step_schedule", "alpha",
                                   cfg.learner.schedule.alpha);
            } else {
                throw ConfigError("learner.step_schedule.kind",
                                  "must be 'harmonic' or 'constant'");
            }
        }
        if (cfg.learner.gamma <= 0.0 || cfg.learner.gamma > 1.0)
            throw ConfigError("learner.gamma", "must be in (0,1]");
    }

    if (j.contains("solver")) {
        const json& s = j.at("solver");
        detail::reject_unknown_keys(
            s, "solver", {"max_iter", "kkt_tol", "feas_tol", "penalty", "over_relax",
                          "check_every"});
        detail::read_field(s, "solver", "max_iter", cfg.learner.solver.max_iter);
        detail::read_field(s, "solver", "kkt_tol", cfg.learner.solver.kkt_tol);
        detail::read_field(s, "solver", "feas_tol", cfg.learner.solver.feas_tol);
        detail::read_field(s, "solver", "penalty", cfg.learner.solver.penalty);
        detail::read_field(s, "solver", "over_relax", cfg.learner.solver.over_relax);
        detail::read_field(s, "solver", "check_every", cfg.learner.solver.check_every);
    }

    if (j.contains("dp")) {
        const json& d = j.at("dp");
        detail::reject_unknown_keys(d, "dp", {"x_lo", "x_hi", "nx", "nu"});
        detail::read_field(d, "dp", "x_lo", cfg.dp.x_lo);
        detail::read_field(d, "dp", "x_hi", cfg.dp.x_hi);
        detail::read_field(d, "dp", "nx", cfg.dp.nx);
        detail::read_field(d, "dp", "nu", cfg.dp.nu);
        if (cfg.dp.x_lo >= cfg.dp.x_hi) throw ConfigError("dp.x_lo", "must be below dp.x_hi");
        if (cfg.dp.nx < 2 || cfg.dp.nu < 2) throw ConfigError("dp.nx", "grids need >= 2 points");
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        detail::reject_unknown_keys(e, "eval", {"initial_states", "horizon"});
        detail::read_field(e, "eval", "initial_states", cfg.eval.initial_states);
        detail::read_field(e, "eval", "horizon", cfg.eval.horizon);
        if (cfg.eval.horizon < 1) throw ConfigError("eval.horizon", "must be >= 1");
    }

    if (j.contains("seeds")) {
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ConfigError("seeds", "must not be empty");
    }

    cfg.learner.validate();
    make_env(cfg.plant);   // surfaces plant errors at parse time
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

inline std::string config_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// weights persistence

constexpr int kWeightsFormatVersion = 1;

struct WeightsFile {
    int format_version = kWeightsFormatVersion;
    int d = 0, P = 0;
    ConvexWeights weights;
    PatternSet patterns;
    std::string config_hash;
    std::uint64_t seed = 0;
    int episode_count = 0;
};

inline json weights_to_json(const WeightsFile& wf) {
    json j;
    j["format_version"] = wf.format_version;
    j["d"] = wf.d;
    j["P"] = wf.P;
    auto dump_cols = [](const Eigen::MatrixXd& m) {
        std::vector<double> flat;
        flat.reserve(m.size());
        for (int c = 0; c < m.cols(); ++c)
            for (int r = 0; r < m.rows(); ++r) flat.push_back(m(r, c));
        return flat;
    };
    j["w1"] = dump_cols(wf.weights.w1);
    j["w2"] = dump_cols(wf.weights.w2);
    json masks = json::array();
    for (const auto& p : wf.patterns.patterns) {
        json row = json::array();
        for (auto b : p.mask) row.push_back(static_cast<int>(b));
        masks.push_back(row);
    }
    j["patterns"] = masks;
    j["provenance"] = {{"config_hash", wf.config_hash},
                       {"seed", wf.seed},
                       {"episode_count", wf.episode_count}};
    return j;
}

inline void save_weights(const std::string& path, const WeightsFile& wf) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << weights_to_json(wf).dump(2) << "\n";
    if (!out) throw IoError("short write to '" + path + "'");
}

inline WeightsFile load_weights(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weights file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw MalformedFile("weights file '" + path + "': " + e.what());
    }
    try {
        detail::reject_unknown_keys(j, "weights",
                                    {"format_version", "d", "P", "w1", "w2", "patterns",
                                     "provenance"});
        WeightsFile wf;
        wf.format_version = j.at("format_version").get<int>();
        if (wf.format_version != kWeightsFormatVersion)
            throw VersionMismatch("weights format_version " +
                                  std::to_string(wf.format_version) + " is not supported");
        wf.d = j.at("d").get<int>();
        wf.P = j.at("P").get<int>();
        if (wf.d < 1 || wf.P < 1) throw MalformedFile("weights file: bad dimensions");
        const auto w1 = j.at("w1").get<std::vector<double>>();
        const auto w2 = j.at("w2").get<std::vector<double>>();
        if (static_cast<int>(w1.size()) != wf.d * wf.P ||
            static_cast<int>(w2.size()) != wf.d * wf.P)
            throw MalformedFile("weights file: array length does not match d*P");
        wf.weights = ConvexWeights::zero(wf.d, wf.P);
        for (int p = 0; p < wf.P; ++p)
            for (int r = 0; r < wf.d; ++r) {
                wf.weights.w1(r, p) = w1[p * wf.d + r];
                wf.weights.w2(r, p) = w2[p * wf.d + r];
            }
        for (const auto& row : j.at("patterns")) {
            ActivationPattern pat;
            for (const auto& b : row) pat.mask.push_back(b.get<int>() ? 1 : 0);
            wf.patterns.patterns.push_back(std::move(pat));
        }
        const json& prov = j.at("provenance");
        detail::reject_unknown_keys(prov, "weights.provenance",
                                    {"config_hash", "seed", "episode_count"});
        wf.config_hash = prov.at("config_hash").get<std::string>();
        wf.seed = prov.at("seed").get<std::uint64_t>();
        wf.episode_count = prov.at("episode_count").get<int>();
        return wf;
    } catch (const VersionMismatch&) {
        throw;
    } catch (const json::exception& e) {
        throw MalformedFile("weights file '" + path + "': " + e.what());
    } catch (const ConfigError& e) {
        throw MalformedFile("weights file '" + path + "': " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// CSV helpers

/// 17 significant digits: round-trip exact for IEEE doubles.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << body;
    if (!out) throw IoError("short write to '" + path + "'");
}

inline std::string trace_to_csv(const TrainingTrace& trace) {
    std::ostringstream os;
    os << "k,objective,step_norm,bellman_mse,max_x,max_u,aborted,solver_converged\n";
    for (const auto& r : trace.rows) {
        os << r.k << ',' << fmt_g17(r.objective) << ',' << fmt_g17(r.step_norm_inf) << ','
           << fmt_g17(r.bellman_mse) << ',' << fmt_g17(r.max_abs_x) << ','
           << fmt_g17(r.max_abs_u) << ',' << (r.aborted ? 1 : 0) << ','
           << (r.solver_converged ? 1 : 0) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// commands

/// Undiscounted T-step cost of the network's greedy policy from x0 on the
/// true plant. A diverged trajectory reports an infinite cost rather than
/// aborting the whole table.
inline double eval_policy_cost(const EnvModel& env, const QNetwork& net, double x0, int T,
                               int grid_resolution = 101) {
    State x(1);
    if (env.state_dim != 1) throw DimensionMismatch("eval_policy_cost: scalar states only");
    x[0] = x0;
    double total = 0.0;
    for (int t = 0; t < T; ++t) {
        if (x.lpNorm<Eigen::Infinity>() > env.state_guard)
            return std::numeric_limits<double>::infinity();
        Action u(env.action_dim);
        if (env.action_dim == 1)
            u[0] = argmin_action_1d(net, x, env.action_bound).action;
        else
            u = argmin_action_grid(net, x, env.action_bound, grid_resolution).action;
        total += cost(env, x, u);
        x = step(env, x, u);
    }
    return total;
}

struct TrainArtifacts {
    TrainResult result;
    WeightsFile weights_file;
};

inline TrainArtifacts run_training(const RunConfig& cfg, std::uint64_t seed,
                                   const std::string& cfg_hash,
                                   const EpisodeObserver& observer = {}) {
    const EnvModel env = make_env(cfg.plant);
    LearnerConfig lc = cfg.learner;
    lc.seed = seed;
    TrainArtifacts out{train(env, lc, observer), {}};
    out.weights_file.d = out.result.weights.d();
    out.weights_file.P = out.result.weights.P();
    out.weights_file.weights = out.result.weights;
    out.weights_file.patterns = out.result.patterns;
    out.weights_file.config_hash = cfg_hash;
    out.weights_file.seed = seed;
    out.weights_file.episode_count = cfg.learner.episodes;
    return out;
}

inline std::string eval_to_csv(const EnvModel& env, const QNetwork& net,
                               const std::vector<double>& x0s, int T) {
    std::ostringstream os;
    os << "x0,cost\n";
    for (double x0 : x0s)
        os << fmt_g17(x0) << ',' << fmt_g17(eval_policy_cost(env, net, x0, T)) << '\n';
    return os.str();
}

struct BaselineRow {
    double x0 = 0.0;
    double lower_bound = 0.0;
    bool left_grid = false;
};

inline std::vector<BaselineRow> run_baseline(const RunConfig& cfg,
                                             const std::vector<double>& x0s) {
    const EnvModel env = make_env(cfg.plant);
    const DpSolution dp = solve_dp(env, cfg.eval.horizon, cfg.dp);
    std::vector<BaselineRow> rows;
    for (double x0 : x0s) {
        const PolicyRollout r = simulate_policy(env, dp, x0);
        rows.push_back({x0, r.cost, r.left_grid});
    }
    return rows;
}

inline std::string baseline_to_csv(const std::vector<BaselineRow>& rows) {
    std::ostringstream os;
    os << "x0,lower_bound\n";
    for (const auto& r : rows) os << fmt_g17(r.x0) << ',' << fmt_g17(r.lower_bound) << '\n';
    return os.str();
}

struct Table1Row {
    double x0 = 0.0;
    double lower_bound = 0.0;
    double learned_cost = 0.0;   // median over seeds
    double ratio = 0.0;
    std::vector<double> per_seed;
};

/// Trains once per config seed, evaluates the greedy policy at each x0,
/// joins with the DP lower bound, and reports the per-seed costs plus the
/// median. Deterministic given the config.
inline std::vector<Table1Row> run_table1(const RunConfig& cfg, const std::string& cfg_hash) {
    const EnvModel env = make_env(cfg.plant);
    std::vector<QNetwork> nets;
    for (std::uint64_t seed : cfg.seeds)
        nets.push_back(run_training(cfg, seed, cfg_hash).result.net);

    const std::vector<BaselineRow> base = run_baseline(cfg, cfg.eval.initial_states);
    std::vector<Table1Row> rows;
    for (std::size_t i = 0; i < cfg.eval.initial_states.size(); ++i) {
        Table1Row row;
        row.x0 = cfg.eval.initial_states[i];
        row.lower_bound = base[i].lower_bound;
        for (const auto& net : nets)
            row.per_seed.push_back(eval_policy_cost(env, net, row.x0, cfg.eval.horizon));
        std::vector<double> sorted = row.per_seed;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        row.learned_cost =
            n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        row.ratio = row.learned_cost / row.lower_bound;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string table1_to_csv(const std::vector<Table1Row>& rows,
                                 const std::vector<std::uint64_t>& seeds) {
    std::ostringstream os;
    os << "x0,lower_bound,learned_cost,ratio";
    for (std::uint64_t s : seeds) os << ",cost_seed_" << s;
    os << '\n';
    for (const auto& r : rows) {
        os << fmt_g17(r.x0) << ',' << fmt_g17(r.lower_bound) << ',' << fmt_g17(r.learned_cost)
           << ',' << fmt_g17(r.ratio);
        for (double c : r.per_seed) os << ',' << fmt_g17(c);
        os << '\n';
    }
    return os.str();
}

/// Recomputes the theorem quantities for saved weights. One greedy rollout
/// under the loaded network (stream "diag" of the given seed) supplies the
/// final-episode batch; re-solving that episode's convex program against
/// the stored masks supplies the per-episode solution whose group norms
/// define F. The optimal-weight norm is estimated from the loaded blended
/// weights. All-zero weights surface the empty-F error up front.
inline TheoremReport run_diag(const RunConfig& cfg, const WeightsFile& wf, std::uint64_t seed) {
    const EnvModel env = make_env(cfg.plant);
    effective_F(wf.weights, cfg.learner.rho);   // fail fast on zero weights
    const QNetwork net = from_convex(wf.weights);
    RngStream diag_stream(seed, "diag");
    const State x1 = sample_initial_state(env, diag_stream);
    const Policy policy = [&](const State& x) {
        Action u(1);
        u[0] = argmin_action_1d(net, x, env.action_bound).action;
        return u;
    };
    const CollectResult rolled = collect_episode(env, policy, x1, cfg.learner.horizon);
    if (rolled.diverged) throw StateDiverged("diag: greedy rollout diverged");
    RolloutBatch batch = build_design_matrices(env, rolled.trajectory);
    batch.y = compute_targets(
        batch, [&](const Eigen::VectorXd& z) { return evaluate_row(net, z); }, cfg.learner.gamma);

    const ConvexProblem problem =
        assemble(batch.X, batch.y, wf.patterns, cfg.learner.rho * cfg.learner.horizon);
    auto [episode_solution, report] = solve(problem, cfg.learner.solver, &wf.weights);
    (void)report;

    const double const_alpha = cfg.learner.schedule.kind == StepSchedule::Kind::constant
                                   ? cfg.learner.schedule.alpha
                                   : std::numeric_limits<double>::quiet_NaN();
    TheoremReport rep = theorem_report(batch, episode_solution, cfg.learner.rho,
                                       cfg.learner.gamma, const_alpha);
    // the optimum's norm is unobservable; the converged blend stands in
    rep.w_norm_inf_estimate = wf.weights.norm_inf();
    if (rep.horizon_ok) {
        rep.bound_estimate_value = bound_estimate(rep.mu, rep.f_max, rep.lambda,
                                                  rep.w_norm_inf_estimate, cfg.learner.rho);
        if (std::isfinite(const_alpha))
            rep.constant_alpha_radius_estimate =
                constant_alpha_radius(rep.mu, const_alpha, rep.f_max, rep.lambda,
                                      rep.w_norm_inf_estimate, cfg.learner.rho);
    }
    return rep;
}

inline std::string diag_to_text(const TheoremReport& rep) {
    std::ostringstream os;
    os << "theorem diagnostics\n";
    os << "  horizon T           = " << rep.horizon << '\n';
    os << "  beta                = " << fmt_g17(rep.beta) << '\n';
    os << "  lambda              = " << fmt_g17(rep.lambda) << '\n';
    os << "  F entries           = " << rep.f_diagonal.entries.size() << " (zero units excluded: "
       << rep.zero_unit_count << ")\n";
    os << "  f_min / f_max       = " << fmt_g17(rep.f_min) << " / " << fmt_g17(rep.f_max) << '\n';
    os << "  T_min               = " << fmt_g17(rep.t_min) << '\n';
    os << "  horizon_ok          = " << (rep.horizon_ok ? "true" : "false") << '\n';
    os << "  mu                  = " << fmt_g17(rep.mu) << '\n';
    os << "  w_norm_estimate     = " << fmt_g17(rep.w_norm_inf_estimate) << '\n';
    os << "  bound_estimate      = " << fmt_g17(rep.bound_estimate_value) << '\n';
    if (std::isfinite(rep.constant_alpha_radius_estimate))
        os << "  const_alpha_radius_estimate = " << fmt_g17(rep.constant_alpha_radius_estimate)
           << '\n';
    if (rep.side1_empty || rep.side2_empty)
        os << "  note: F floor missing on side " << (rep.side1_empty ? "1" : "")
           << (rep.side1_empty && rep.side2_empty ? "," : "") << (rep.side2_empty ? "2" : "")
           << " (all units zero there)\n";
    os << "  F reading: per-unit diagonal collapsed to per-side minimum d-blocks\n";
    return os.str();
}

}  // namespace cvxq
