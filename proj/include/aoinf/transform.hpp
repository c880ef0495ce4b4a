#pragma once

// Uniform-step equivalent MDP of the semi-Markov model. Costs are scaled by
// theta / L_a and the remaining 1 - theta / L_a mass becomes a self-loop, so
// the transformed gain equals theta times the per-slot gain and the minimizing
// actions are unchanged.

#include "aoinf/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace aoinf {

struct TransformConfig {
    double theta = 0.5;

    /// Requires 0 < theta <= min_a L_a (= 1, the idle duration).
    void validate(const ModelParams& params) const;
};

struct IndexedMass {
    std::size_t state = 0;
    double prob = 0.0;
};

struct TransformedKernelRow {
    double cost = 0.0;
    std::vector<IndexedMass> outcomes;  // includes the self-loop mass
};

double transformed_cost(const SystemState& state, Action action, const TransformConfig& cfg,
                        const ModelParams& params);

TransformedKernelRow transformed_dist(const StateSpace& space, const SystemState& state,
                                      Action action, const TransformConfig& cfg);

/// Compressed (state, feasible action) rows over a StateSpace. Each state owns a
/// contiguous range of action rows in canonical action order; each row owns a
/// contiguous range of (successor index, probability) entries.
template <typename Cost>
class SparseKernel {
public:
    struct Row {
        Action action;
        int holding;
        Cost cost;
        std::uint32_t begin;
        std::uint32_t end;
    };

    std::size_t num_states() const { return state_offsets_.empty() ? 0 : state_offsets_.size() - 1; }

    std::span<const Row> rows(std::size_t s) const {
        return {rows_.data() + state_offsets_[s], rows_.data() + state_offsets_[s + 1]};
    }
    std::span<const IndexedMass> entries(const Row& row) const {
        return {entries_.data() + row.begin, entries_.data() + row.end};
    }
    /// Row of `action` at state `s`, or nullptr when infeasible.
    const Row* find(std::size_t s, Action action) const {
        for (const Row& row : rows(s))
            if (row.action == action) return &row;
        return nullptr;
    }

    std::size_t num_rows() const { return rows_.size(); }
    std::size_t num_entries() const { return entries_.size(); }

    // Builder interface.
    void begin_state() {
        if (state_offsets_.empty()) state_offsets_.push_back(0);
    }
    void add_row(Action action, int holding, Cost cost, std::span<const IndexedMass> masses) {
        const auto begin = static_cast<std::uint32_t>(entries_.size());
        entries_.insert(entries_.end(), masses.begin(), masses.end());
        rows_.push_back({action, holding, cost, begin, static_cast<std::uint32_t>(entries_.size())});
    }
    void end_state() { state_offsets_.push_back(rows_.size()); }

    // Test hook for fault injection.
    std::vector<Row>& mutable_rows() { return rows_; }

private:
    std::vector<std::size_t> state_offsets_;
    std::vector<Row> rows_;
    std::vector<IndexedMass> entries_;
};

/// Original semi-Markov kernel: integer costs R(aoinf, a), holding L_a, and the
/// at most two successors of every feasible action.
using SmdpKernel = SparseKernel<std::int64_t>;
/// Transformed kernel: theta-scaled costs and the self-loop-augmented rows.
using TransformedKernel = SparseKernel<double>;

SmdpKernel build_smdp_kernel(const StateSpace& space);
TransformedKernel build_transformed_kernel(const StateSpace& space, const TransformConfig& cfg);

/// Deliberate kernel corruption used to exercise the verification suite.
struct KernelFault {
    Action action = Action::Compute;
    double cost_scale = 1.5;
};
void inject_fault(TransformedKernel& kernel, const KernelFault& fault);

/// |rho - min_a (R + sum P V - V(s)) / L_a| at one state.
double verify_ratio_form(const SmdpKernel& kernel, std::size_t state,
                         std::span<const double> values, double rho);
double verify_ratio_form(const StateSpace& space, const SystemState& state,
                         std::span<const double> values, double rho);

struct RatioFormResidual {
    double max_residual = 0.0;
    std::size_t worst_state = 0;
};
RatioFormResidual max_ratio_form_residual(const SmdpKernel& kernel,
                                          std::span<const double> values, double rho);

}  // namespace aoinf
