#pragma once

// Experiment configuration, result files and the solve / evaluate / simulate /
// sweep / verify drivers behind the command-line tool.

#include "aoinf/model.hpp"
#include "aoinf/policy_tools.hpp"
#include "aoinf/rvi.hpp"
#include "aoinf/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace aoinf {

/// Bad configuration, override, or input file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SweepGrid {
    std::vector<double> p_tx{0.2, 0.4, 0.6, 0.8};
    std::vector<double> p_offload{0.2, 0.4, 0.6, 0.8};
};

struct SimulationBlock {
    long horizon = 1000000;
    std::vector<std::uint64_t> seeds{1};
    long warmup = 0;
    bool write_trace = true;
};

struct ExperimentConfig {
    ModelParams model = baseline_params();
    SolveConfig solver{};
    std::optional<SweepGrid> sweep;
    std::optional<SimulationBlock> simulation;
    SystemState start_state = default_start_state(baseline_params());
    std::filesystem::path output_dir = "out";
    bool write_csv = true;
    bool write_json = true;
    /// Worker threads for grid points and seeds; 0 means hardware concurrency.
    int workers = 0;

    /// Throws std::invalid_argument naming the violated invariant.
    void validate() const;
    int resolved_workers() const;
};

/// Builds a config from JSON. Missing keys keep their defaults; unknown keys
/// are rejected. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads the optional config file, applies overrides, parses and validates.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides);

/// Fixed-format number: 12 significant digits.
std::string format_number(double x);

// Plot-ready tables. Headers are fixed.
void write_policy_csv(std::ostream& out, const StateSpace& space, const Policy& policy);
void write_values_csv(std::ostream& out, const StateSpace& space, const ValueFunction& values);
void write_trace_csv(std::ostream& out, const TrajectoryLog& log);
void write_events_csv(std::ostream& out, const TrajectoryLog& log);

/// Reads a policy table written by write_policy_csv; every state of `space`
/// must appear exactly once. Throws ConfigError.
Policy read_policy_csv(std::istream& in, const StateSpace& space);
ValueFunction read_values_csv(std::istream& in, const StateSpace& space);
Policy load_policy_file(const std::filesystem::path& path, const StateSpace& space);

nlohmann::json summary_to_json(const TrajectorySummary& summary);

struct SweepRow {
    double p_tx = 0.0;
    double p_offload = 0.0;
    bool ok = false;
    std::string error;
    double gain_opt = 0.0;
    double gain_random = 0.0;
    double gain_onboard = 0.0;
    double gain_offload = 0.0;
    bool converged = false;
};

/// Solves and exactly evaluates the optimal policy and the three baselines at
/// every grid point. Rows come back in grid order (p_tx outer) for any worker
/// count; a failing point is recorded in its row.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg);

struct CheckResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;
    long count = 0;
    std::string detail;
};

struct VerifyOptions {
    /// Corrupts the transformed kernel before solving.
    std::optional<KernelFault> fault;
    std::vector<double> thetas{0.25, 0.5, 0.9};
    double agreement_tolerance = 1e-6;
    double residual_tolerance = 1e-6;
    double structure_tolerance = 1e-8;
};

std::vector<CheckResult> run_verify(const ExperimentConfig& cfg, const VerifyOptions& opts);

// Command drivers. Each writes its files under cfg.output_dir and returns the
// process exit status: 0 iff everything requested converged and passed.
struct CommandOptions {
    std::optional<std::filesystem::path> policy_file;
    std::optional<std::uint64_t> seed;
    bool inject_fault = false;
};

int cmd_solve(const ExperimentConfig& cfg, std::ostream& log);
int cmd_evaluate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
int cmd_simulate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
int cmd_verify(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);

}  // namespace aoinf
