// Command-line front end: train | eval | baseline | table1 | diag.
// Exit code 0 on success; on failure one line "error: <category>: <detail>"
// goes to stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cvxq/harness.hpp"

namespace {

using namespace cvxq;

void emit(const std::string& body, const std::string& out_path) {
    if (out_path.empty())
        std::cout << body;
    else
        write_text_file(out_path, body);
}

json read_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"episodic Q-learning with per-episode convex refits"};
    app.require_subcommand(1);

    std::string config_path, weights_path, out_path;
    std::optional<std::uint64_t> seed_override;
    std::vector<double> x0s;

    auto* train_cmd = app.add_subcommand("train", "train and write weights + trace");
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    train_cmd->add_option("--seed", seed_override, "override the first config seed");
    train_cmd->add_option("--out", out_path, "output directory (default .)");

    auto* eval_cmd = app.add_subcommand("eval", "greedy-policy cost of saved weights");
    eval_cmd->add_option("--config", config_path, "run config JSON")->required();
    eval_cmd->add_option("--weights", weights_path, "weights JSON")->required();
    eval_cmd->add_option("--x0", x0s, "initial state (repeatable)");
    eval_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

    auto* base_cmd = app.add_subcommand("baseline", "dynamic-programming lower bound");
    base_cmd->add_option("--config", config_path, "run config JSON")->required();
    base_cmd->add_option("--x0", x0s, "initial state (repeatable)");
    base_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

    auto* table_cmd = app.add_subcommand("table1", "train per seed, join with lower bound");
    table_cmd->add_option("--config", config_path, "run config JSON")->required();
    table_cmd->add_option("--seed", seed_override, "use a single seed instead of the config list");
    table_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

    auto* diag_cmd = app.add_subcommand("diag", "theorem diagnostics for saved weights");
    diag_cmd->add_option("--config", config_path, "run config JSON")->required();
    diag_cmd->add_option("--weights", weights_path, "weights JSON")->required();
    diag_cmd->add_option("--seed", seed_override, "stream seed for the diagnostic rollout");
    diag_cmd->add_option("--out", out_path, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    const json cfg_json = read_config_json(config_path);
    const RunConfig cfg = parse_run_config(cfg_json);
    const std::string cfg_hash = config_hash(cfg_json);

    if (train_cmd->parsed()) {
        const std::uint64_t seed = seed_override.value_or(cfg.seeds.front());
        const TrainArtifacts art = run_training(cfg, seed, cfg_hash);
        const std::string dir = out_path.empty() ? "." : out_path;
        std::filesystem::create_directories(dir);
        save_weights(dir + "/weights.json", art.weights_file);
        write_text_file(dir + "/trace.csv", trace_to_csv(art.result.trace));
        std::cerr << "wrote " << dir << "/weights.json and " << dir << "/trace.csv ("
                  << art.result.trace.rows.size() << " episodes, "
                  << art.result.trace.aborted_episodes << " aborted)\n";
    } else if (eval_cmd->parsed()) {
        const WeightsFile wf = load_weights(weights_path);
        const EnvModel env = make_env(cfg.plant);
        if (wf.d != 1 + env.state_dim + env.action_dim)
            throw MalformedFile("weights dimension does not match the configured plant");
        const QNetwork net = from_convex(wf.weights);
        const std::vector<double>& states = x0s.empty() ? cfg.eval.initial_states : x0s;
        emit(eval_to_csv(env, net, states, cfg.eval.horizon), out_path);
    } else if (base_cmd->parsed()) {
        const std::vector<double>& states = x0s.empty() ? cfg.eval.initial_states : x0s;
        const auto rows = run_baseline(cfg, states);
        for (const auto& r : rows)
            if (r.left_grid)
                std::cerr << "warning: x0=" << r.x0 << " left the state grid during simulation\n";
        emit(baseline_to_csv(rows), out_path);
    } else if (table_cmd->parsed()) {
        RunConfig c = cfg;
        if (seed_override) c.seeds = {*seed_override};
        emit(table1_to_csv(run_table1(c, cfg_hash), c.seeds), out_path);
    } else if (diag_cmd->parsed()) {
        const WeightsFile wf = load_weights(weights_path);
        const std::uint64_t seed = seed_override.value_or(wf.seed);
        emit(diag_to_text(run_diag(cfg, wf, seed)), out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cvxq::ConfigError& e) {
        std::cerr << "error: " << cvxq::ConfigError::category << ": " << e.what() << "\n";
    } catch (const cvxq::MalformedFile& e) {
        std::cerr << "error: " << cvxq::MalformedFile::category << ": " << e.what() << "\n";
    } catch (const cvxq::VersionMismatch& e) {
        std::cerr << "error: " << cvxq::VersionMismatch::category << ": " << e.what() << "\n";
    } catch (const cvxq::EmptyFError& e) {
        std::cerr << "error: " << cvxq::EmptyFError::category << ": " << e.what() << "\n";
    } catch (const cvxq::StateDiverged& e) {
        std::cerr << "error: " << cvxq::StateDiverged::category << ": " << e.what() << "\n";
    } catch (const cvxq::ActionOutOfBounds& e) {
        std::cerr << "error: " << cvxq::ActionOutOfBounds::category << ": " << e.what() << "\n";
    } catch (const cvxq::IoError& e) {
        std::cerr << "error: " << cvxq::IoError::category << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
    }
    return 1;
}
