#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cvxq/harness.hpp"

using namespace cvxq;

namespace {
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("cvxq_test_" + std::to_string(std::rand()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("config parsing applies defaults and rejects bad fields") {
    const RunConfig base = parse_run_config(json::object());
    CHECK(base.plant.name == "paper_scalar");
    CHECK(base.learner.gamma == 0.9);
    CHECK(base.dp.nx == 2001);
    CHECK(base.seeds.size() == 3);

    SECTION("gamma out of range names the field") {
        json j = {{"learner", {{"gamma", 1.5}}}};
        try {
            parse_run_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("learner.gamma") != std::string::npos);
        }
    }
    SECTION("unknown keys are rejected with their path") {
        json j = {{"learner", {{"gama", 0.9}}}};
        try {
            parse_run_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("learner.gama") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_run_config(json{{"bogus", 1}}), ConfigError);
    }
    SECTION("schedules parse both kinds") {
        json j = {{"learner", {{"step_schedule", {{"kind", "constant"}, {"alpha", 0.25}}}}}};
        const RunConfig c = parse_run_config(j);
        CHECK(c.learner.schedule.kind == StepSchedule::Kind::constant);
        CHECK(c.learner.schedule.alpha == 0.25);
    }
    SECTION("unknown plant is rejected") {
        CHECK_THROWS_AS(parse_run_config(json{{"plant", {{"name", "nope"}}}}), ConfigError);
    }
}

TEST_CASE("weights files round trip bit for bit") {
    TempDir tmp;
    WeightsFile wf;
    wf.d = 3;
    wf.P = 2;
    wf.weights = ConvexWeights::zero(3, 2);
    RngStream rng(9);
    for (int p = 0; p < 2; ++p)
        for (int r = 0; r < 3; ++r) {
            wf.weights.w1(r, p) = rng.normal() * 1e3;
            wf.weights.w2(r, p) = rng.normal() / 7.0;
        }
    wf.patterns.patterns.push_back(ActivationPattern{{1, 0, 1, 1, 0}});
    wf.patterns.patterns.push_back(ActivationPattern{{0, 0, 1, 0, 1}});
    wf.config_hash = "deadbeef00000000";
    wf.seed = 42;
    wf.episode_count = 17;

    const std::string path = tmp.file("w.json");
    save_weights(path, wf);
    const WeightsFile back = load_weights(path);
    CHECK(back.weights.w1 == wf.weights.w1);
    CHECK(back.weights.w2 == wf.weights.w2);
    CHECK(back.patterns.patterns[1].mask == wf.patterns.patterns[1].mask);
    CHECK(back.seed == 42);
    CHECK(back.episode_count == 17);

    // byte-identical re-serialization
    save_weights(tmp.file("w2.json"), back);
    std::ifstream f1(path), f2(tmp.file("w2.json"));
    const std::string s1((std::istreambuf_iterator<char>(f1)), {});
    const std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

TEST_CASE("weights loading rejects damage and version bumps") {
    TempDir tmp;
    WeightsFile wf;
    wf.d = 2;
    wf.P = 1;
    wf.weights = ConvexWeights::zero(2, 1);
    wf.patterns.patterns.push_back(ActivationPattern{{1, 1}});
    wf.config_hash = "x";
    const std::string path = tmp.file("w.json");
    save_weights(path, wf);

    SECTION("truncation is malformed") {
        std::ifstream in(path);
        std::string body((std::istreambuf_iterator<char>(in)), {});
        in.close();
        std::ofstream out(path, std::ios::trunc);
        out << body.substr(0, body.size() / 2);
        out.close();
        CHECK_THROWS_AS(load_weights(path), MalformedFile);
    }
    SECTION("version bump is a version mismatch") {
        json j = weights_to_json(wf);
        j["format_version"] = 2;
        std::ofstream out(path, std::ios::trunc);
        out << j.dump();
        out.close();
        CHECK_THROWS_AS(load_weights(path), VersionMismatch);
    }
    SECTION("wrong array length is malformed") {
        json j = weights_to_json(wf);
        j["w1"].push_back(3.14);
        std::ofstream out(path, std::ios::trunc);
        out << j.dump();
        out.close();
        CHECK_THROWS_AS(load_weights(path), MalformedFile);
    }
    SECTION("missing file is an io error") {
        CHECK_THROWS_AS(load_weights(tmp.file("absent.json")), IoError);
    }
}

TEST_CASE("g17 formatting round-trips doubles") {
    RngStream rng(123);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.next_u64() % 13) - 6.0);
        CHECK(std::stod(fmt_g17(v)) == v);
    }
}

TEST_CASE("training smoke run writes plausible artifacts") {
    json j = {{"learner", {{"episodes", 10}, {"pattern_budget", 8}}},
              {"seeds", {7}}};
    const RunConfig cfg = parse_run_config(j);
    const TrainArtifacts art = run_training(cfg, 7, config_hash(j));
    CHECK(art.result.trace.rows.size() <= 10);
    CHECK(art.weights_file.seed == 7);
    const std::string csv = trace_to_csv(art.result.trace);
    CHECK(csv.rfind("k,objective,step_norm,bellman_mse,max_x,max_u,aborted,solver_converged\n",
                    0) == 0);
    // one header plus one line per episode row
    CHECK(std::count(csv.begin(), csv.end(), '\n') ==
          1 + static_cast<long>(art.result.trace.rows.size()));

    // determinism across repeat runs
    const TrainArtifacts art2 = run_training(cfg, 7, config_hash(j));
    CHECK(trace_to_csv(art2.result.trace) == csv);
    CHECK(weights_to_json(art2.weights_file).dump() ==
          weights_to_json(art.weights_file).dump());
}

TEST_CASE("zero-weight evaluation reproduces the uncontrolled trajectory cost") {
    const RunConfig cfg = parse_run_config(json::object());
    const EnvModel env = make_env(cfg.plant);
    const QNetwork net = from_convex(ConvexWeights::zero(3, 4));

    // oracle: iterate x+ = 0.9 x^2 from 0.5 with u = 0, sum c = 5 x^2
    double x = 0.5, expect = 0.0;
    for (int t = 0; t < 5; ++t) {
        expect += 5.0 * x * x;
        x = 0.9 * x * x;
    }
    CHECK(expect == Approx(1.5135).margin(1e-3));
    CHECK(eval_policy_cost(env, net, 0.5, 5) == Approx(expect).margin(1e-12));
    CHECK(eval_policy_cost(env, net, 0.0, 5) == 0.0);
}

TEST_CASE("baseline rows match the recomputed lower bounds") {
    json j = {{"dp", {{"nx", 601}, {"nu", 201}}}};
    const RunConfig cfg = parse_run_config(j);
    const auto rows = run_baseline(cfg, {0.0, 0.5});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].lower_bound == 0.0);
    CHECK(rows[1].lower_bound == Approx(1.4945).epsilon(2e-2));
    const std::string csv = baseline_to_csv(rows);
    CHECK(csv.rfind("x0,lower_bound\n", 0) == 0);

    json jd = {{"plant", {{"name", "deadbeat_linear"}}},
               {"dp", {{"nx", 601}, {"nu", 101}}},
               {"eval", {{"horizon", 2}}}};
    const auto drows = run_baseline(parse_run_config(jd), {1.0});
    CHECK(drows[0].lower_bound == Approx(1.0).margin(1e-12));
}

TEST_CASE("diag surfaces the empty-F error on zero weights") {
    const RunConfig cfg = parse_run_config(json::object());
    WeightsFile wf;
    wf.d = 3;
    wf.P = 2;
    wf.weights = ConvexWeights::zero(3, 2);
    CHECK_THROWS_AS(run_diag(cfg, wf, 1), EmptyFError);
}

TEST_CASE("diag halves its bound estimate when rho halves") {
    json j = {{"learner", {{"episodes", 25}, {"pattern_budget", 10}}}};
    const RunConfig cfg = parse_run_config(j);
    const TrainArtifacts art = run_training(cfg, 3, config_hash(j));
    REQUIRE(art.result.weights.norm_inf() > 0.0);

    const TheoremReport rep = run_diag(cfg, art.weights_file, 3);
    if (rep.horizon_ok) {
        json j2 = j;
        j2["learner"]["rho"] = cfg.learner.rho / 2.0;
        const RunConfig cfg2 = parse_run_config(j2);
        const TheoremReport rep2 = run_diag(cfg2, art.weights_file, 3);
        // same weights and rollout; mu, f entries change with rho, but the
        // estimate's explicit rho factor halves when everything else is held
        const double manual = bound_estimate(rep.mu, rep.f_max, rep.lambda,
                                             rep.w_norm_inf_estimate, cfg.learner.rho / 2.0);
        CHECK(manual == Approx(rep.bound_estimate_value / 2.0).epsilon(1e-12));
        CHECK(rep2.horizon == rep.horizon);
    }
    const std::string text = diag_to_text(rep);
    CHECK(text.find("T_min") != std::string::npos);
    CHECK(text.find("horizon_ok") != std::string::npos);
}
