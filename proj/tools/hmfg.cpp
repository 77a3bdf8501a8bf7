// Command-line front end. Two forms:
//
//   hmfg --config run.toml [--out DIR] [--seed N] [--quiet]
//   hmfg games [--config run.toml] --N 4 --paths 10000 --T 50 --dt 0.015625 [--out DIR]
//
// The second form runs the N-player task and verifies player 0 by simulation.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hmfg/cli.hpp"

namespace {

using hmfg::cli::json;

int execute(json cfg, const std::string& out_flag, bool quiet) {
    try {
        const hmfg::cli::RunConfig c = hmfg::cli::from_json(cfg);
        const std::string out = !out_flag.empty() ? out_flag : c.out;
        if (out.empty()) throw hmfg::cli::ConfigError("out: no output directory (set 'out' or pass --out)");
        const auto res = hmfg::cli::run(c, out, quiet);
        if (!quiet && res.exit_code == 0) std::cout << res.summary.dump(2) << '\n';
        return res.exit_code;
    } catch (const hmfg::DomainError& e) {
        std::cerr << "hmfg: invalid configuration: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ergodic mean field games with Hormander vector fields on the torus"};
    app.set_version_flag("--version", std::string(hmfg::cli::kVersion));
    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--config", config_path, "TOML run configuration");
    app.add_option("--out", out, "output directory (overrides 'out')");
    app.add_option("--seed", seed, "random seed (overrides 'seed')");
    app.add_flag("--quiet", quiet, "print nothing on success");

    auto* games = app.add_subcommand("games", "N-player Nash system, simulation and equilibrium verification");
    std::optional<long long> N, paths;
    std::optional<double> T, dt;
    games->add_option("--N", N, "number of players");
    games->add_option("--paths", paths, "Monte Carlo paths");
    games->add_option("--T", T, "time horizon");
    games->add_option("--dt", dt, "time step (at most the grid spacing)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    json cfg = json::object();
    try {
        if (!config_path.empty()) cfg = hmfg::config::parse_file(config_path);
        else if (!games->parsed()) throw hmfg::cli::ConfigError("--config is required");
    } catch (const hmfg::DomainError& e) {
        std::cerr << "hmfg: invalid configuration: " << e.what() << '\n';
        return 1;
    }
    if (seed) cfg["seed"] = *seed;
    if (games->parsed()) {
        cfg["task"] = "nplayer";
        cfg["game"]["verify"] = true;
        if (N) cfg["game"]["N"] = *N;
        if (paths) cfg["simulation"]["paths"] = *paths;
        if (T) cfg["simulation"]["T"] = *T;
        if (dt) cfg["simulation"]["dt"] = *dt;
    }
    return execute(cfg, out, quiet);
}
