#pragma once

// Benchmark policies and exact long-run evaluation of stationary policies.
//
// Evaluation works on the embedded chain of decision epochs: the long-run
// average AoInf per slot of a stationary policy is the renewal-reward ratio
//   sum_s mu(s) R(s, pi(s)) / sum_s mu(s) L_{pi(s)}
// where mu is the stationary distribution of the embedded chain on the closed
// class the process enters.

#include "aoinf/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

namespace aoinf {

/// Probabilities over kAllActions, in canonical order.
using ActionDistribution = std::array<double, kNumActions>;

/// A stationary decision rule: deterministic or randomized.
class DecisionRule {
public:
    explicit DecisionRule(Policy policy) : rule_(std::move(policy)) {}
    explicit DecisionRule(std::vector<ActionDistribution> dists) : rule_(std::move(dists)) {}

    std::size_t size() const;
    bool is_deterministic() const { return std::holds_alternative<Policy>(rule_); }
    ActionDistribution distribution(std::size_t state) const;
    /// Draws an action given a uniform variate in [0, 1).
    Action sample(std::size_t state, double u) const;

private:
    std::variant<Policy, std::vector<ActionDistribution>> rule_;
};

/// Uniform over feasible actions in every state.
DecisionRule random_policy(const StateSpace& space);

/// Compute when the cache is empty, transmit when Tx is feasible, otherwise idle.
Action onboard_policy(const SystemState& state, const ModelParams& params);
/// Offload whenever the raw upload fits in the remaining window, otherwise idle.
Action offload_policy(const SystemState& state, const ModelParams& params);

Policy tabulate(const StateSpace& space,
                const std::function<Action(const SystemState&, const ModelParams&)>& rule);
Policy onboard_policy(const StateSpace& space);
Policy offload_policy(const StateSpace& space);

/// Embedded decision-epoch chain of a policy on a subset of the state space.
struct EmbeddedChain {
    std::vector<std::size_t> states;  // local node -> StateSpace index
    std::vector<std::size_t> row_begin;
    std::vector<std::size_t> col;     // local successor
    std::vector<double> prob;
    std::vector<double> cost;         // expected R under the decision rule
    std::vector<double> holding;      // expected L under the decision rule
    std::size_t start = 0;            // local node of the start state

    std::size_t size() const { return states.size(); }
};

/// Chain restricted to the states reachable from `start`. Throws
/// FeasibilityError when the rule puts mass on an infeasible action there.
EmbeddedChain build_reachable_chain(const DecisionRule& rule, const StateSpace& space,
                                    const SystemState& start);
/// Chain over every state of the space.
EmbeddedChain build_full_chain(const DecisionRule& rule, const StateSpace& space);

/// Strongly connected components with no transition leaving them, as lists of
/// local nodes in increasing order.
std::vector<std::vector<std::size_t>> closed_classes(const EmbeddedChain& chain);

struct EvaluationResult {
    double average_aoinf_per_slot = 0.0;
    /// (StateSpace index, probability) over the recurrent states, sorted by index.
    std::vector<std::pair<std::size_t, double>> stationary_distribution;
    std::size_t reachable_count = 0;
    /// One entry per closed class reachable from the start.
    std::vector<double> class_gains;
    std::vector<double> class_weights;
};

/// Exact evaluation of an embedded chain. With several closed classes the result
/// averages the class gains by their absorption probabilities from the start.
EvaluationResult evaluate_chain(const EmbeddedChain& chain);

EvaluationResult evaluate_policy_exact(const DecisionRule& rule, const StateSpace& space,
                                       const SystemState& start);
inline EvaluationResult evaluate_policy_exact(const Policy& policy, const StateSpace& space,
                                              const SystemState& start) {
    return evaluate_policy_exact(DecisionRule(policy), space, start);
}

struct CertificateViolation {
    std::size_t state;
    Action better_action;
    /// Gain decrease when `gain_improvement`, otherwise gain minus the action's
    /// per-slot ratio.
    double improvement;
    bool gain_improvement;
};

struct CertificateReport {
    double gain = 0.0;  // largest class gain
    std::vector<double> class_gains;
    std::vector<double> state_gain;
    /// Differential values; zero stationary mean on every closed class.
    ValueFunction bias;
    std::vector<CertificateViolation> violations;
    double worst_improvement = 0.0;
    bool ok() const { return violations.empty(); }
};

/// Policy-iteration fixed-point check over the whole space. Evaluates the policy
/// exactly (per-state gain g and bias h, h(s) = R(s, pi(s)) - g(s) L + sum P h)
/// and lists states where some feasible action a either lowers the expected
/// successor gain below g(s) - tol or, at equal gain, has
///   (R(s, a) + sum_s' P(s' | s, a) h(s') - h(s)) / L_a < g(s) - tol.
/// Throws NumericalError when a linear system is singular.
CertificateReport improvement_certificate(const Policy& policy, const StateSpace& space,
                                          double tol = 1e-8);

}  // namespace aoinf
