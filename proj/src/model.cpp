#include "aoinf/model.hpp"

#include <algorithm>
#include <sstream>

namespace aoinf {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid model parameters: ") + what);
}

void check_phase(int phase, const ModelParams& params) {
    if (phase < 0 || phase >= params.period)
        throw std::domain_error("phase " + std::to_string(phase) + " outside [0, " +
                                std::to_string(params.period) + ")");
}

void check_aoinf(int aoinf, const ModelParams& params) {
    if (aoinf < 1 || aoinf > params.aoinf_cap)
        throw std::domain_error("aoinf " + std::to_string(aoinf) + " outside [1, " +
                                std::to_string(params.aoinf_cap) + "]");
}

}  // namespace

std::string_view to_string(Action a) {
    switch (a) {
        case Action::Idle: return "idle";
        case Action::Compute: return "compute";
        case Action::Tx: return "tx";
        case Action::Offload: return "offload";
    }
    return "?";
}

Action parse_action(std::string_view name) {
    for (Action a : kAllActions)
        if (to_string(a) == name) return a;
    throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

void ModelParams::validate() const {
    require(aoinf_cap >= 1, "aoinf_cap >= 1");
    require(period >= 1, "period >= 1");
    require(window >= 0, "window >= 0");
    require(window <= period, "window <= period");
    require(compute_dur >= 1, "compute_dur >= 1");
    require(tx_dur >= 1, "tx_dur >= 1");
    require(upload_dur >= 1, "upload_dur >= 1");
    require(ground_infer_dur >= 0, "ground_infer_dur >= 0");
    require(p_tx >= 0.0 && p_tx <= 1.0, "p_tx in [0, 1]");
    require(p_offload >= 0.0 && p_offload <= 1.0, "p_offload in [0, 1]");
}

ModelParams baseline_params() { return ModelParams{}; }

std::string to_string(const SystemState& s) {
    std::ostringstream os;
    os << "(aoinf=" << s.aoinf << ", phase=" << s.mode.phase
       << ", cache_full=" << (s.mode.cache_full ? 1 : 0) << ", cache_age=" << s.mode.cache_age
       << ")";
    return os.str();
}

std::vector<Action> ActionSet::to_vector() const {
    std::vector<Action> out;
    for (Action a : kAllActions)
        if (contains(a)) out.push_back(a);
    return out;
}

int remaining_visibility(int phase, const ModelParams& params) {
    check_phase(phase, params);
    return phase < params.window ? params.window - phase : 0;
}

int holding_time(Action action, const ModelParams& params) {
    switch (action) {
        case Action::Idle: return 1;
        case Action::Compute: return params.compute_dur;
        case Action::Tx: return params.tx_dur;
        case Action::Offload: return params.offload_dur();
    }
    return 1;
}

bool is_admissible(const Mode& mode, const ModelParams& params) {
    if (mode.phase < 0 || mode.phase >= params.period) return false;
    if (mode.cache_age < 0 || mode.cache_age > params.aoinf_cap) return false;
    return mode.cache_full || mode.cache_age == 0;
}

bool is_admissible(const SystemState& state, const ModelParams& params) {
    return state.aoinf >= 1 && state.aoinf <= params.aoinf_cap &&
           is_admissible(state.mode, params);
}

ActionSet feasible_actions(const Mode& mode, const ModelParams& params) {
    const int visible = remaining_visibility(mode.phase, params);
    ActionSet set;
    set.insert(Action::Idle);
    set.insert(Action::Compute);
    if (mode.cache_full && visible >= params.tx_dur) set.insert(Action::Tx);
    if (visible >= params.upload_dur) set.insert(Action::Offload);
    return set;
}

bool is_feasible(const Mode& mode, Action action, const ModelParams& params) {
    return feasible_actions(mode, params).contains(action);
}

int phase_after(int phase, Action action, const ModelParams& params) {
    check_phase(phase, params);
    return (phase + holding_time(action, params)) % params.period;
}

Mode mode_after(const Mode& mode, Action action, const ModelParams& params) {
    if (!is_feasible(mode, action, params))
        throw FeasibilityError(std::string(to_string(action)) + " infeasible at phase " +
                               std::to_string(mode.phase));
    const int cap = params.aoinf_cap;
    const int next_phase = phase_after(mode.phase, action, params);
    switch (action) {
        case Action::Idle:
            if (mode.cache_full) return {next_phase, true, std::min(mode.cache_age + 1, cap)};
            return {next_phase, false, 0};
        case Action::Compute:
            return {next_phase, true, std::min(params.compute_dur, cap)};
        case Action::Tx:
            return {next_phase, false, 0};
        case Action::Offload:
            if (mode.cache_full)
                return {next_phase, true, std::min(mode.cache_age + params.offload_dur(), cap)};
            return {next_phase, false, 0};
    }
    return mode;
}

int success_reset(Action action, const Mode& mode, const ModelParams& params) {
    switch (action) {
        case Action::Tx: return std::min(mode.cache_age + params.tx_dur, params.aoinf_cap);
        case Action::Offload: return std::min(params.offload_dur(), params.aoinf_cap);
        default:
            throw std::domain_error(std::string(to_string(action)) +
                                    " never delivers an update");
    }
}

int aged_aoinf(int aoinf, Action action, const ModelParams& params) {
    check_aoinf(aoinf, params);
    return std::min(aoinf + holding_time(action, params), params.aoinf_cap);
}

std::int64_t slot_cost(int aoinf, Action action, const ModelParams& params) {
    check_aoinf(aoinf, params);
    const std::int64_t cap = params.aoinf_cap;
    const std::int64_t len = holding_time(action, params);
    // Uncapped ramp aoinf, ..., cap-1 followed by a flat run at the cap.
    const std::int64_t ramp = std::min<std::int64_t>(len, cap - aoinf);
    const std::int64_t a = aoinf;
    return ramp * a + ramp * (ramp - 1) / 2 + (len - ramp) * cap;
}

double success_prob(Action action, const ModelParams& params) {
    switch (action) {
        case Action::Tx: return params.p_tx;
        case Action::Offload: return params.p_offload;
        default: return 0.0;
    }
}

TransitionDist transition_dist(const SystemState& state, Action action,
                               const ModelParams& params) {
    check_aoinf(state.aoinf, params);
    TransitionDist dist;
    dist.holding = holding_time(action, params);
    dist.cost = slot_cost(state.aoinf, action, params);

    const Mode next_mode = mode_after(state.mode, action, params);
    const double p = success_prob(action, params);
    const SystemState fail{aged_aoinf(state.aoinf, action, params), next_mode};
    if (p <= 0.0) {
        dist.outcomes.push_back({fail, 1.0});
        return dist;
    }
    const SystemState hit{success_reset(action, state.mode, params), next_mode};
    if (p >= 1.0 || hit == fail) {
        dist.outcomes.push_back({p >= 1.0 ? hit : fail, 1.0});
        return dist;
    }
    dist.outcomes.push_back({fail, 1.0 - p});
    dist.outcomes.push_back({hit, p});
    return dist;
}

StateSpace::StateSpace(const ModelParams& params) : params_(params) {
    params_.validate();
    const int cap = params_.aoinf_cap;
    states_.reserve(static_cast<std::size_t>(cap) * params_.period * modes_per_phase());
    for (int d = 1; d <= cap; ++d)
        for (int phase = 0; phase < params_.period; ++phase) {
            states_.push_back({d, {phase, false, 0}});
            for (int age = 0; age <= cap; ++age) states_.push_back({d, {phase, true, age}});
        }
}

std::size_t StateSpace::index(const SystemState& s) const {
    if (!is_admissible(s, params_))
        throw std::out_of_range("inadmissible state " + to_string(s));
    const std::size_t block =
        static_cast<std::size_t>(s.aoinf - 1) * params_.period + s.mode.phase;
    const std::size_t offset =
        s.mode.cache_full ? 1 + static_cast<std::size_t>(s.mode.cache_age) : 0;
    return block * modes_per_phase() + offset;
}

StateSpace enumerate_states(const ModelParams& params) { return StateSpace(params); }

SystemState default_start_state(const ModelParams& params) {
    return {params.aoinf_cap, {0, false, 0}};
}

}  // namespace aoinf
