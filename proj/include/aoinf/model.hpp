#pragma once

// Contact-constrained hybrid inference model: state space, action feasibility,
// transitions and holding-time costs of the average-cost semi-Markov decision
// process controlling ground-side Age of Inference.

#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aoinf {

/// Raised when an action is selected in a mode that does not admit it.
class FeasibilityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised when a linear solve or similar numerical routine cannot proceed.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Canonical order Idle < Compute < Tx < Offload is used for tie-breaking.
enum class Action : std::uint8_t { Idle = 0, Compute = 1, Tx = 2, Offload = 3 };

inline constexpr std::array<Action, 4> kAllActions{Action::Idle, Action::Compute,
                                                   Action::Tx, Action::Offload};
inline constexpr std::size_t kNumActions = kAllActions.size();

std::string_view to_string(Action a);
/// Accepts the lower-case names produced by to_string.
Action parse_action(std::string_view name);

/// All scalar parameters of the model. Durations are in slots.
struct ModelParams {
    int aoinf_cap = 40;
    int period = 30;
    int window = 20;
    int compute_dur = 2;
    int tx_dur = 3;
    int upload_dur = 5;
    int ground_infer_dur = 1;
    double p_tx = 0.6;
    double p_offload = 0.7;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

    int offload_dur() const { return upload_dur + ground_infer_dur; }

    bool operator==(const ModelParams&) const = default;
};

/// Baseline numerical setting: cap 40, period 30, window 20, C_S=2, U_tx=3,
/// U_img=5, C_L=1, with the trajectory-figure success probabilities.
ModelParams baseline_params();

struct Mode {
    int phase = 0;
    bool cache_full = false;
    int cache_age = 0;

    auto operator<=>(const Mode&) const = default;
};

struct SystemState {
    int aoinf = 1;
    Mode mode{};

    auto operator<=>(const SystemState&) const = default;
};

std::string to_string(const SystemState& s);

/// One successor of an action together with its probability.
struct Outcome {
    SystemState next;
    double prob = 0.0;
};

struct TransitionDist {
    int holding = 1;
    std::int64_t cost = 0;
    // At most two outcomes; merged into one when they coincide or p in {0,1}.
    std::vector<Outcome> outcomes;
};

int remaining_visibility(int phase, const ModelParams& params);
int holding_time(Action action, const ModelParams& params);

/// Bitset over kAllActions.
class ActionSet {
public:
    constexpr ActionSet() = default;

    constexpr void insert(Action a) { bits_ |= bit(a); }
    constexpr bool contains(Action a) const { return (bits_ & bit(a)) != 0; }
    constexpr std::size_t size() const {
        return static_cast<std::size_t>(std::popcount(bits_));
    }
    std::vector<Action> to_vector() const;

    constexpr bool operator==(const ActionSet&) const = default;

private:
    static constexpr std::uint8_t bit(Action a) {
        return static_cast<std::uint8_t>(1u << static_cast<unsigned>(a));
    }
    std::uint8_t bits_ = 0;
};

bool is_admissible(const Mode& mode, const ModelParams& params);
bool is_admissible(const SystemState& state, const ModelParams& params);

ActionSet feasible_actions(const Mode& mode, const ModelParams& params);
bool is_feasible(const Mode& mode, Action action, const ModelParams& params);

int phase_after(int phase, Action action, const ModelParams& params);
Mode mode_after(const Mode& mode, Action action, const ModelParams& params);

/// AoInf right after a successful Tx or Offload completes.
int success_reset(Action action, const Mode& mode, const ModelParams& params);
/// AoInf after the holding time of `action` when no valid update arrives.
int aged_aoinf(int aoinf, Action action, const ModelParams& params);
/// Sum of capped per-slot ages over the holding interval of `action`.
std::int64_t slot_cost(int aoinf, Action action, const ModelParams& params);
double success_prob(Action action, const ModelParams& params);

TransitionDist transition_dist(const SystemState& state, Action action,
                               const ModelParams& params);

/// Dense lexicographic (aoinf, phase, cache_full, cache_age) indexing of all
/// admissible states. Empty-cache modes appear only with cache_age = 0.
class StateSpace {
public:
    explicit StateSpace(const ModelParams& params);

    const ModelParams& params() const { return params_; }
    std::size_t size() const { return states_.size(); }
    const SystemState& operator[](std::size_t i) const { return states_[i]; }
    std::span<const SystemState> states() const { return states_; }

    /// Throws std::out_of_range for an inadmissible state.
    std::size_t index(const SystemState& s) const;

    /// Number of modes per (aoinf, phase) pair: one empty plus cap+1 full.
    std::size_t modes_per_phase() const {
        return static_cast<std::size_t>(params_.aoinf_cap) + 2;
    }

private:
    ModelParams params_;
    std::vector<SystemState> states_;
};

StateSpace enumerate_states(const ModelParams& params);

/// "No successful update yet": (cap, phase 0, empty cache).
SystemState default_start_state(const ModelParams& params);

/// Differential values indexed like StateSpace.
using ValueFunction = std::vector<double>;
/// Deterministic stationary policy indexed like StateSpace.
using Policy = std::vector<Action>;

}  // namespace aoinf
