#pragma once

// Slot-level Monte Carlo simulation of a stationary decision rule.
//
// Slot n belongs to the action that started at the latest epoch <= n. An action
// of length L started at slot t with AoInf D charges min(D + i, cap) to slot
// t + i; a successful delivery sets the AoInf of slot t + L to the reset level.

#include "aoinf/model.hpp"
#include "aoinf/policy_tools.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace aoinf {

/// Portable per-run random stream: mt19937_64 seeded with SplitMix64(seed).
/// Variates are (x >> 11) * 2^-53, so traces match across platforms.
class RunStream {
public:
    explicit RunStream(std::uint64_t seed);
    double uniform();

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct UpdateEvent {
    long generated_at = 0;
    long delivered_at = 0;
    bool success = false;
    Action kind = Action::Tx;
};

struct ActionSegment {
    long start = 0;
    Action action = Action::Idle;
    int duration = 0;
};

struct TrajectoryLog {
    std::vector<int> per_slot_aoinf;
    /// -1 while the cache is empty.
    std::vector<int> cache_age_per_slot;
    std::vector<ActionSegment> action_segments;
    std::vector<UpdateEvent> update_events;
    /// State at each decision epoch, aligned with action_segments.
    std::vector<SystemState> epoch_states;
    std::uint64_t seed = 0;
    long warmup = 0;
    ModelParams params;

    long horizon() const { return static_cast<long>(per_slot_aoinf.size()); }
    /// Phase of slot n and whether the link is up there.
    int phase_at(long slot) const;
    bool visible_at(long slot) const;
    /// Action in progress at every slot.
    std::vector<Action> action_per_slot() const;
};

struct SimulationConfig {
    long horizon = 1000000;
    long warmup = 0;  // leading slots excluded from summaries
    std::uint64_t seed = 1;
};

/// Simulates `horizon` slots from `start`. Actions are chosen at completions;
/// the last one may run past the horizon, in which case its delivery is not
/// logged. Throws FeasibilityError naming the state when the rule picks an
/// infeasible action, std::invalid_argument on horizon < 1 or warmup outside
/// [0, horizon).
TrajectoryLog simulate(const DecisionRule& rule, const StateSpace& space, const SystemState& start,
                       const SimulationConfig& cfg);
inline TrajectoryLog simulate(const Policy& policy, const StateSpace& space,
                              const SystemState& start, const SimulationConfig& cfg) {
    return simulate(DecisionRule(policy), space, start, cfg);
}

struct TrajectorySummary {
    double time_average_aoinf = 0.0;
    long slots = 0;  // slots after warm-up
    std::map<Action, long> action_counts;
    std::map<Action, double> action_frequency;
    /// AoInf level right after each successful delivery -> count.
    std::map<int, long> reset_levels;
    long link_actions = 0;
    /// Share of Tx/Offload segments that started with enough residual visibility.
    double feasible_link_fraction = 1.0;
    long successful_deliveries = 0;
};

/// Throws std::invalid_argument on a log without action segments.
TrajectorySummary summarize(const TrajectoryLog& log);

}  // namespace aoinf
