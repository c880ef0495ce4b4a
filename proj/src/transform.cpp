#include "aoinf/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aoinf {

void TransformConfig::validate(const ModelParams& params) const {
    int min_holding = holding_time(Action::Idle, params);
    for (Action a : kAllActions) min_holding = std::min(min_holding, holding_time(a, params));
    if (!(theta > 0.0) || theta > static_cast<double>(min_holding))
        throw std::invalid_argument("theta must lie in (0, " + std::to_string(min_holding) +
                                    "], got " + std::to_string(theta));
}

double transformed_cost(const SystemState& state, Action action, const TransformConfig& cfg,
                        const ModelParams& params) {
    if (!is_feasible(state.mode, action, params))
        throw FeasibilityError(std::string(to_string(action)) + " infeasible at " +
                               to_string(state));
    return cfg.theta * static_cast<double>(slot_cost(state.aoinf, action, params)) /
           holding_time(action, params);
}

namespace {

// Scales the successor masses by theta / L and adds the self-loop, merging a
// successor equal to `self` into it. Self-loop entry comes last.
void transform_outcomes(const StateSpace& space, std::size_t self, const TransitionDist& dist,
                        double theta, std::vector<IndexedMass>& out) {
    out.clear();
    const double scale = theta / dist.holding;
    double self_mass = 1.0 - scale;
    for (const Outcome& o : dist.outcomes) {
        const std::size_t j = space.index(o.next);
        if (j == self)
            self_mass += scale * o.prob;
        else
            out.push_back({j, scale * o.prob});
    }
    if (self_mass > 0.0) out.push_back({self, self_mass});
}

}  // namespace

TransformedKernelRow transformed_dist(const StateSpace& space, const SystemState& state,
                                      Action action, const TransformConfig& cfg) {
    const ModelParams& params = space.params();
    TransformedKernelRow row;
    row.cost = transformed_cost(state, action, cfg, params);
    transform_outcomes(space, space.index(state), transition_dist(state, action, params),
                       cfg.theta, row.outcomes);
    return row;
}

SmdpKernel build_smdp_kernel(const StateSpace& space) {
    const ModelParams& params = space.params();
    SmdpKernel kernel;
    kernel.begin_state();
    std::vector<IndexedMass> masses;
    for (const SystemState& s : space.states()) {
        for (Action a : feasible_actions(s.mode, params).to_vector()) {
            const TransitionDist dist = transition_dist(s, a, params);
            masses.clear();
            for (const Outcome& o : dist.outcomes) masses.push_back({space.index(o.next), o.prob});
            kernel.add_row(a, dist.holding, dist.cost, masses);
        }
        kernel.end_state();
    }
    return kernel;
}

TransformedKernel build_transformed_kernel(const StateSpace& space, const TransformConfig& cfg) {
    const ModelParams& params = space.params();
    cfg.validate(params);
    TransformedKernel kernel;
    kernel.begin_state();
    std::vector<IndexedMass> masses;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const SystemState& s = space[i];
        for (Action a : feasible_actions(s.mode, params).to_vector()) {
            const TransitionDist dist = transition_dist(s, a, params);
            transform_outcomes(space, i, dist, cfg.theta, masses);
            const double cost = cfg.theta * static_cast<double>(dist.cost) / dist.holding;
            kernel.add_row(a, dist.holding, cost, masses);
        }
        kernel.end_state();
    }
    return kernel;
}

void inject_fault(TransformedKernel& kernel, const KernelFault& fault) {
    for (auto& row : kernel.mutable_rows())
        if (row.action == fault.action) row.cost *= fault.cost_scale;
}

double verify_ratio_form(const SmdpKernel& kernel, std::size_t state,
                         std::span<const double> values, double rho) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : kernel.rows(state)) {
        double continuation = 0.0;
        for (const IndexedMass& m : kernel.entries(row)) continuation += m.prob * values[m.state];
        const double ratio =
            (static_cast<double>(row.cost) + continuation - values[state]) / row.holding;
        best = std::min(best, ratio);
    }
    return std::abs(rho - best);
}

double verify_ratio_form(const StateSpace& space, const SystemState& state,
                         std::span<const double> values, double rho) {
    const ModelParams& params = space.params();
    const std::size_t self = space.index(state);
    double best = std::numeric_limits<double>::infinity();
    for (Action a : feasible_actions(state.mode, params).to_vector()) {
        const TransitionDist dist = transition_dist(state, a, params);
        double continuation = 0.0;
        for (const Outcome& o : dist.outcomes) continuation += o.prob * values[space.index(o.next)];
        best = std::min(best, (static_cast<double>(dist.cost) + continuation - values[self]) /
                                  dist.holding);
    }
    return std::abs(rho - best);
}

RatioFormResidual max_ratio_form_residual(const SmdpKernel& kernel,
                                          std::span<const double> values, double rho) {
    RatioFormResidual out;
    for (std::size_t s = 0; s < kernel.num_states(); ++s) {
        const double r = verify_ratio_form(kernel, s, values, rho);
        if (r > out.max_residual) {
            out.max_residual = r;
            out.worst_state = s;
        }
    }
    return out;
}

}  // namespace aoinf
