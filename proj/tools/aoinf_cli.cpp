// Command-line front end: aoinf <solve|evaluate|simulate|sweep|verify> [options]

#include "aoinf/experiments.hpp"

#include <iostream>

#include "CLI11.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Average-cost scheduling of onboard inference and downlink for a satellite"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::string policy_path;
    bool inject_fault = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a config key, e.g. model.p_tx=0.4")
            ->type_name("KEY=VALUE")
            ->take_all();
        cmd->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    };

    auto* solve = app.add_subcommand("solve", "Solve for the optimal policy; write report, policy and values");
    auto* evaluate = app.add_subcommand("evaluate", "Exactly evaluate the optimal policy and baselines, or a policy file");
    auto* simulate = app.add_subcommand("simulate", "Simulate a policy slot by slot");
    auto* sweep = app.add_subcommand("sweep", "Compare optimal and baseline gains over a probability grid");
    auto* verify = app.add_subcommand("verify", "Run the structural and optimality checks");
    for (auto* cmd : {solve, evaluate, simulate, sweep, verify}) add_common(cmd);
    for (auto* cmd : {evaluate, simulate})
        cmd->add_option("--policy", policy_path, "Policy CSV written by solve")->check(CLI::ExistingFile);
    auto* seed_opt = simulate->add_option("--seed", seed, "Run a single seed instead of simulation.seeds");
    verify->add_flag("--inject-fault", inject_fault, "Corrupt the compute cost of the kernel before solving");

    CLI11_PARSE(app, argc, argv);

    try {
        aoinf::ExperimentConfig cfg = aoinf::load_config(
            config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
            overrides);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        aoinf::CommandOptions opts;
        if (!policy_path.empty()) opts.policy_file = policy_path;
        if (seed_opt->count() > 0) opts.seed = seed;
        opts.inject_fault = inject_fault;

        if (*simulate && !cfg.simulation) cfg.simulation = aoinf::SimulationBlock{};
        if (*sweep && !cfg.sweep) cfg.sweep = aoinf::SweepGrid{};

        if (*solve) return aoinf::cmd_solve(cfg, std::cout);
        if (*evaluate) return aoinf::cmd_evaluate(cfg, opts, std::cout);
        if (*simulate) return aoinf::cmd_simulate(cfg, opts, std::cout);
        if (*sweep) return aoinf::cmd_sweep(cfg, std::cout);
        return aoinf::cmd_verify(cfg, opts, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
