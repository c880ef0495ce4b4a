#include "aoinf/rvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace aoinf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Splits [0, n) into `threads` contiguous chunks. Each chunk writes disjoint
// output, so results are independent of the thread count.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2048) {
        fn(std::size_t{0}, n, 0);
        return;
    }
    const auto workers = static_cast<std::size_t>(threads);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = std::min(n, w * chunk);
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&fn, lo, hi, w] { fn(lo, hi, w); });
    }
    fn(0, std::min(n, chunk), 0);
}

inline double row_value(const TransformedKernel& kernel, const TransformedKernel::Row& row,
                        std::span<const double> values) {
    double v = row.cost;
    for (const IndexedMass& m : kernel.entries(row)) v += m.prob * values[m.state];
    return v;
}

}  // namespace

void SolveConfig::validate(const ModelParams& params) const {
    transform.validate(params);
    if (!(tolerance > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
    if (!(tie_tolerance >= 0.0)) throw std::invalid_argument("tie_tolerance must be >= 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (!is_admissible(reference_state, params))
        throw std::invalid_argument("reference state " + to_string(reference_state) +
                                    " is not admissible");
}

double q_value(const TransformedKernel& kernel, std::size_t state, Action action,
               std::span<const double> values) {
    const auto* row = kernel.find(state, action);
    if (row == nullptr)
        throw FeasibilityError(std::string(to_string(action)) + " infeasible at state index " +
                               std::to_string(state));
    return row_value(kernel, *row, values);
}

double q_value(const StateSpace& space, const SystemState& state, Action action,
               std::span<const double> values, const TransformConfig& cfg) {
    const TransformedKernelRow row = transformed_dist(space, state, action, cfg);
    double v = row.cost;
    for (const IndexedMass& m : row.outcomes) v += m.prob * values[m.state];
    return v;
}

SolveReport rvi_solve(const ModelParams& params, const SolveConfig& cfg) {
    cfg.validate(params);
    const StateSpace space(params);
    const TransformedKernel kernel = build_transformed_kernel(space, cfg.transform);
    return rvi_solve(space, kernel, cfg);
}

SolveReport rvi_solve(const StateSpace& space, const TransformedKernel& kernel,
                      const SolveConfig& cfg) {
    cfg.validate(space.params());
    const std::size_t n = space.size();
    const std::size_t ref = space.index(cfg.reference_state);
    const auto workers = static_cast<std::size_t>(std::max(1, cfg.threads));

    SolveReport report;
    report.theta = cfg.transform.theta;

    std::vector<double> current(n, 0.0);
    std::vector<double> backup(n, 0.0);
    std::vector<double> chunk_lo(workers), chunk_hi(workers);

    for (long k = 0; k < cfg.max_iterations; ++k) {
        // Jacobi sweep: every backup reads only the previous iterate.
        std::fill(chunk_lo.begin(), chunk_lo.end(), kInf);
        std::fill(chunk_hi.begin(), chunk_hi.end(), -kInf);
        parallel_chunks(n, cfg.threads, [&](std::size_t lo, std::size_t hi, std::size_t w) {
            double dlo = kInf, dhi = -kInf;
            for (std::size_t s = lo; s < hi; ++s) {
                double best = kInf;
                for (const auto& row : kernel.rows(s))
                    best = std::min(best, row_value(kernel, row, current));
                backup[s] = best;
                const double diff = best - current[s];
                dlo = std::min(dlo, diff);
                dhi = std::max(dhi, diff);
            }
            chunk_lo[w] = dlo;
            chunk_hi[w] = dhi;
        });
        const double raw_lo = *std::min_element(chunk_lo.begin(), chunk_lo.end());
        const double raw_hi = *std::max_element(chunk_hi.begin(), chunk_hi.end());
        const double offset = backup[ref];

        double lo = kInf, hi = -kInf;
        for (std::size_t s = 0; s < n; ++s) {
            const double next = backup[s] - offset;
            const double diff = next - current[s];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
            current[s] = next;
        }
        current[ref] = 0.0;

        report.span_history.push_back(hi - lo);
        report.raw_span_history.push_back(raw_hi - raw_lo);
        report.transformed_gain = offset;
        report.gain_bounds = {raw_lo, raw_hi};
        report.iterations = k + 1;
        if (hi - lo <= cfg.tolerance) {
            report.converged = true;
            break;
        }
    }

    report.gain_per_slot = report.transformed_gain / cfg.transform.theta;
    report.policy = extract_policy(kernel, current, cfg.transform.theta, cfg.tie_tolerance);
    report.values = std::move(current);
    return report;
}

Policy extract_policy(const TransformedKernel& kernel, std::span<const double> values,
                      double theta, double tie_tolerance) {
    Policy policy(kernel.num_states(), Action::Idle);
    std::vector<double> advantage;
    for (std::size_t s = 0; s < kernel.num_states(); ++s) {
        advantage.clear();
        double best = kInf;
        for (const auto& row : kernel.rows(s)) {
            advantage.push_back((row_value(kernel, row, values) - values[s]) / theta);
            best = std::min(best, advantage.back());
        }
        // Rows are stored in canonical order.
        const auto rows = kernel.rows(s);
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (advantage[i] <= best + tie_tolerance) {
                policy[s] = rows[i].action;
                break;
            }
    }
    return policy;
}

Policy extract_policy(std::span<const double> values, const TransformConfig& cfg,
                      const ModelParams& params, double tie_tolerance) {
    const StateSpace space(params);
    if (values.size() != space.size())
        throw std::invalid_argument("value function size does not match the state space");
    return extract_policy(build_transformed_kernel(space, cfg), values, cfg.theta, tie_tolerance);
}

MonotonicityReport check_monotonicity(const StateSpace& space, std::span<const double> values,
                                      double tol) {
    const ModelParams& params = space.params();
    MonotonicityReport report;
    for (int phase = 0; phase < params.period; ++phase)
        for (std::size_t slot = 0; slot < space.modes_per_phase(); ++slot) {
            const Mode mode = slot == 0 ? Mode{phase, false, 0}
                                        : Mode{phase, true, static_cast<int>(slot) - 1};
            double running_max = -kInf;
            int argmax = 0;
            for (int d = 1; d <= params.aoinf_cap; ++d) {
                const double v = values[space.index({d, mode})];
                if (running_max - v > tol) {
                    report.violations.push_back({mode, argmax, d, running_max - v});
                    report.worst_excess = std::max(report.worst_excess, running_max - v);
                }
                if (v > running_max) {
                    running_max = v;
                    argmax = d;
                }
            }
        }
    return report;
}

double acoe_q_value(const StateSpace& space, const SystemState& state, Action action,
                    std::span<const double> values, double gain_per_slot) {
    const TransitionDist dist = transition_dist(state, action, space.params());
    double q = static_cast<double>(dist.cost) - gain_per_slot * dist.holding;
    for (const Outcome& o : dist.outcomes) q += o.prob * values[space.index(o.next)];
    return q;
}

double tx_compute_gap(const StateSpace& space, int aoinf, int phase, int cache_age,
                      std::span<const double> values, double gain_per_slot) {
    const SystemState s{aoinf, {phase, true, cache_age}};
    return acoe_q_value(space, s, Action::Tx, values, gain_per_slot) -
           acoe_q_value(space, s, Action::Compute, values, gain_per_slot);
}

ThresholdReport check_tx_compute_threshold(const StateSpace& space, std::span<const double> values,
                                           double gain_per_slot, double tol) {
    const ModelParams& params = space.params();
    ThresholdReport report;
    report.thresholds.assign(static_cast<std::size_t>(params.aoinf_cap),
                             std::vector<std::optional<int>>(static_cast<std::size_t>(params.period)));
    std::vector<double> gap(static_cast<std::size_t>(params.aoinf_cap) + 1);
    for (int d = 1; d <= params.aoinf_cap; ++d)
        for (int phase = 0; phase < params.period; ++phase) {
            if (!is_feasible({phase, true, 0}, Action::Tx, params)) continue;
            ++report.checked_pairs;
            double running_max = -kInf;
            for (int age = 0; age <= params.aoinf_cap; ++age) {
                const double g = tx_compute_gap(space, d, phase, age, values, gain_per_slot);
                gap[static_cast<std::size_t>(age)] = g;
                if (running_max - g > tol)
                    report.violations.push_back({d, phase, age, running_max - g, false});
                running_max = std::max(running_max, g);
            }
            int threshold = -1;
            while (threshold < params.aoinf_cap && gap[static_cast<std::size_t>(threshold + 1)] <= 0.0)
                ++threshold;
            for (int age = threshold + 1; age <= params.aoinf_cap; ++age)
                if (gap[static_cast<std::size_t>(age)] <= 0.0) {
                    report.violations.push_back({d, phase, age, gap[static_cast<std::size_t>(age)], true});
                    break;
                }
            report.thresholds[static_cast<std::size_t>(d - 1)][static_cast<std::size_t>(phase)] =
                threshold;
        }
    return report;
}

}  // namespace aoinf
