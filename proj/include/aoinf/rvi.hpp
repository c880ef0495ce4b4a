#pragma once

// Normalized relative value iteration on the transformed MDP, greedy policy
// extraction, and checks of the structural properties of the solution.

#include "aoinf/model.hpp"
#include "aoinf/transform.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace aoinf {

inline constexpr double kDefaultTieTolerance = 1e-7;

struct SolveConfig {
    TransformConfig transform{};
    double tolerance = 1e-9;
    long max_iterations = 200000;
    SystemState reference_state{1, {0, false, 0}};
    /// Per-slot action values closer than this are treated as tied.
    double tie_tolerance = kDefaultTieTolerance;
    /// Worker threads for the backup sweep; results do not depend on it.
    int threads = 1;

    void validate(const ModelParams& params) const;
};

struct SolveReport {
    bool converged = false;
    double gain_per_slot = 0.0;     // transformed_gain / theta
    double transformed_gain = 0.0;  // reference-state offset of the last backup
    ValueFunction values;           // normalized, zero at the reference state
    Policy policy;
    long iterations = 0;
    /// span(V_{k+1} - V_k) per iteration, after normalization.
    std::vector<double> span_history;
    /// span(Vtilde_{k+1} - V_k); identical to span_history up to rounding.
    std::vector<double> raw_span_history;
    /// (min, max) of Vtilde_{k+1} - V_k at the last iteration; brackets the gain.
    std::pair<double, double> gain_bounds{0.0, 0.0};
    double theta = 0.5;

    double final_span() const { return span_history.empty() ? 0.0 : span_history.back(); }
    double bracket_width() const { return gain_bounds.second - gain_bounds.first; }
};

/// Transformed one-step cost plus expected continuation under the transformed kernel.
double q_value(const TransformedKernel& kernel, std::size_t state, Action action,
               std::span<const double> values);
double q_value(const StateSpace& space, const SystemState& state, Action action,
               std::span<const double> values, const TransformConfig& cfg);

/// Runs normalized RVI from V = 0. Non-convergence is reported through
/// SolveReport::converged together with the last iterate.
SolveReport rvi_solve(const ModelParams& params, const SolveConfig& cfg);
SolveReport rvi_solve(const StateSpace& space, const TransformedKernel& kernel,
                      const SolveConfig& cfg);

/// Greedy policy with respect to `values`. Actions are compared by their per-slot
/// advantage (Q(s, a) - V(s)) / theta, which is theta-independent at a fixed
/// point; advantages within `tie_tolerance` of the best are tied and the lowest
/// canonical action among them wins.
Policy extract_policy(const TransformedKernel& kernel, std::span<const double> values,
                      double theta, double tie_tolerance = kDefaultTieTolerance);
Policy extract_policy(std::span<const double> values, const TransformConfig& cfg,
                      const ModelParams& params, double tie_tolerance = kDefaultTieTolerance);

struct MonotonicityViolation {
    Mode mode;
    int lower_aoinf;  // the larger value sits at this smaller aoinf
    int upper_aoinf;
    double excess;
};

struct MonotonicityReport {
    std::vector<MonotonicityViolation> violations;
    double worst_excess = 0.0;
    bool ok() const { return violations.empty(); }
};

/// Flags every (mode, aoinf) whose value falls below the value at some smaller
/// aoinf of the same mode by more than `tol`; reports the worst such smaller aoinf.
MonotonicityReport check_monotonicity(const StateSpace& space, std::span<const double> values,
                                      double tol = 1e-8);

/// Action value in the semi-Markov optimality equation:
/// R(aoinf, a) - rho L_a + sum_s' P(s' | s, a) V(s').
double acoe_q_value(const StateSpace& space, const SystemState& state, Action action,
                    std::span<const double> values, double gain_per_slot);

struct ThresholdViolation {
    int aoinf;
    int phase;
    int cache_age;      // first age where the property breaks
    double amount;      // size of the decrease, or D at a non-prefix point
    bool non_prefix;    // false: monotonicity break; true: sublevel set not a prefix
};

struct ThresholdReport {
    /// Indexed [aoinf - 1][phase]; nullopt where Tx is infeasible.
    std::vector<std::vector<std::optional<int>>> thresholds;
    std::vector<ThresholdViolation> violations;
    std::size_t checked_pairs = 0;
    bool ok() const { return violations.empty(); }

    std::optional<int> threshold(int aoinf, int phase) const {
        return thresholds[static_cast<std::size_t>(aoinf - 1)][static_cast<std::size_t>(phase)];
    }
};

/// D(tau) = Q(aoinf, phase, full, tau, tx) - Q(aoinf, phase, full, tau, compute)
/// in the semi-Markov action-value form.
double tx_compute_gap(const StateSpace& space, int aoinf, int phase, int cache_age,
                      std::span<const double> values, double gain_per_slot);

/// For every (aoinf, phase) where Tx is feasible, checks that D is nondecreasing
/// in the cache age and that {tau : D(tau) <= 0} is a prefix; the threshold is the
/// largest age in that prefix, or -1 when it is empty.
ThresholdReport check_tx_compute_threshold(const StateSpace& space, std::span<const double> values,
                                           double gain_per_slot, double tol = 1e-8);

}  // namespace aoinf
