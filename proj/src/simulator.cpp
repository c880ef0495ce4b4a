#include "aoinf/simulator.hpp"

#include <algorithm>
#include <stdexcept>

namespace aoinf {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RunStream::RunStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

double RunStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int TrajectoryLog::phase_at(long slot) const {
    const int start = epoch_states.empty() ? 0 : epoch_states.front().mode.phase;
    return static_cast<int>((start + slot) % params.period);
}

bool TrajectoryLog::visible_at(long slot) const { return phase_at(slot) < params.window; }

std::vector<Action> TrajectoryLog::action_per_slot() const {
    std::vector<Action> out(per_slot_aoinf.size(), Action::Idle);
    for (const ActionSegment& seg : action_segments) {
        const long end = std::min<long>(seg.start + seg.duration, horizon());
        for (long n = seg.start; n < end; ++n) out[static_cast<std::size_t>(n)] = seg.action;
    }
    return out;
}

TrajectoryLog simulate(const DecisionRule& rule, const StateSpace& space, const SystemState& start,
                       const SimulationConfig& cfg) {
    const ModelParams& params = space.params();
    if (cfg.horizon < 1) throw std::invalid_argument("simulation horizon must be >= 1");
    if (cfg.warmup < 0 || cfg.warmup >= cfg.horizon)
        throw std::invalid_argument("warm-up must lie in [0, horizon)");
    if (rule.size() != space.size())
        throw std::invalid_argument("decision rule does not match the state space");
    if (!is_admissible(start, params))
        throw std::invalid_argument("start state " + to_string(start) + " is not admissible");

    const int cap = params.aoinf_cap;
    TrajectoryLog log;
    log.seed = cfg.seed;
    log.warmup = cfg.warmup;
    log.params = params;
    const auto horizon = static_cast<std::size_t>(cfg.horizon);
    log.per_slot_aoinf.reserve(horizon);
    log.cache_age_per_slot.reserve(horizon);

    RunStream rng(cfg.seed);
    SystemState state = start;
    long slot = 0;
    while (slot < cfg.horizon) {
        const std::size_t idx = space.index(state);
        // Deterministic rules consume no variate for the action.
        const Action action = rule.is_deterministic() ? rule.sample(idx, 0.0)
                                                      : rule.sample(idx, rng.uniform());
        if (!is_feasible(state.mode, action, params))
            throw FeasibilityError(std::string(to_string(action)) + " infeasible at state " +
                                   to_string(state));
        const int length = holding_time(action, params);
        log.epoch_states.push_back(state);
        log.action_segments.push_back({slot, action, length});

        for (int i = 0; i < length && slot + i < cfg.horizon; ++i) {
            log.per_slot_aoinf.push_back(std::min(state.aoinf + i, cap));
            log.cache_age_per_slot.push_back(
                state.mode.cache_full ? std::min(state.mode.cache_age + i, cap) : -1);
        }

        const bool link = action == Action::Tx || action == Action::Offload;
        const bool success = link && rng.uniform() < success_prob(action, params);
        const long done = slot + length;
        if (link && done < cfg.horizon) {
            const long generated = action == Action::Tx ? slot - state.mode.cache_age : slot;
            log.update_events.push_back({generated, done, success, action});
        }
        const Mode next_mode = mode_after(state.mode, action, params);
        const int next_aoinf =
            success ? success_reset(action, state.mode, params) : aged_aoinf(state.aoinf, action, params);
        state = {next_aoinf, next_mode};
        slot = done;
    }
    return log;
}

TrajectorySummary summarize(const TrajectoryLog& log) {
    if (log.action_segments.empty()) throw std::invalid_argument("trajectory log has no action segments");
    TrajectorySummary out;
    const long from = std::clamp<long>(log.warmup, 0, log.horizon());
    double total = 0.0;
    for (long n = from; n < log.horizon(); ++n) total += log.per_slot_aoinf[static_cast<std::size_t>(n)];
    out.slots = log.horizon() - from;
    out.time_average_aoinf = out.slots > 0 ? total / static_cast<double>(out.slots) : 0.0;

    long feasible_links = 0, segments = 0;
    for (const ActionSegment& seg : log.action_segments) {
        if (seg.start < from) continue;
        ++segments;
        ++out.action_counts[seg.action];
        if (seg.action == Action::Tx || seg.action == Action::Offload) {
            ++out.link_actions;
            const int residual = remaining_visibility(log.phase_at(seg.start), log.params);
            const int needed = seg.action == Action::Tx ? log.params.tx_dur : log.params.upload_dur;
            if (residual >= needed) ++feasible_links;
        }
    }
    for (const auto& [a, count] : out.action_counts)
        out.action_frequency[a] = static_cast<double>(count) / static_cast<double>(segments);
    if (out.link_actions > 0)
        out.feasible_link_fraction =
            static_cast<double>(feasible_links) / static_cast<double>(out.link_actions);

    for (const UpdateEvent& ev : log.update_events) {
        if (!ev.success || ev.delivered_at < from) continue;
        ++out.successful_deliveries;
        ++out.reset_levels[log.per_slot_aoinf[static_cast<std::size_t>(ev.delivered_at)]];
    }
    return out;
}

}  // namespace aoinf
