#include "aoinf/policy_tools.hpp"

#include <Eigen/KLUSupport>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace aoinf {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();

// Direct sparse solver. KLU's block-triangular preordering keeps fill-in low on
// Markov-chain systems.
class SparseFactor {
public:
    SparseFactor(SparseMatrix a, const char* what) : a_(std::move(a)), what_(what) {
        a_.makeCompressed();
        lu_.compute(a_);
        if (lu_.info() != Eigen::Success)
            throw NumericalError(what_ + ": factorization failed (singular or ill-posed system of size " +
                                 std::to_string(a_.rows()) + ")");
    }
    SparseFactor(const SparseFactor&) = delete;
    SparseFactor& operator=(const SparseFactor&) = delete;

    Eigen::VectorXd solve(const Eigen::VectorXd& b) {
        Eigen::VectorXd x = lu_.solve(b);
        // One step of iterative refinement.
        const Eigen::VectorXd r = b - a_ * x;
        x += lu_.solve(r);
        if (!x.allFinite()) throw NumericalError(what_ + ": non-finite solution");
        return x;
    }

private:
    SparseMatrix a_;
    Eigen::KLU<SparseMatrix> lu_;
    std::string what_;
};

void check_rule_size(const DecisionRule& rule, const StateSpace& space) {
    if (rule.size() != space.size())
        throw std::invalid_argument("decision rule covers " + std::to_string(rule.size()) +
                                    " states, state space has " + std::to_string(space.size()));
}

// Appends the expected one-epoch behaviour of `rule` at global state `s`; successor
// global indices are passed to `visit` and collected with their probabilities.
template <typename Visit>
void expand_state(const DecisionRule& rule, const StateSpace& space, std::size_t s,
                  std::vector<std::pair<std::size_t, double>>& succ, double& cost,
                  double& holding, Visit&& visit) {
    const ModelParams& params = space.params();
    const SystemState& state = space[s];
    const ActionDistribution dist = rule.distribution(s);
    succ.clear();
    cost = 0.0;
    holding = 0.0;
    for (Action a : kAllActions) {
        const double pa = dist[static_cast<std::size_t>(a)];
        if (pa <= 0.0) continue;
        if (!is_feasible(state.mode, a, params))
            throw FeasibilityError("policy selects infeasible " + std::string(to_string(a)) +
                                   " at " + to_string(state));
        const TransitionDist td = transition_dist(state, a, params);
        cost += pa * static_cast<double>(td.cost);
        holding += pa * td.holding;
        for (const Outcome& o : td.outcomes) {
            const std::size_t j = space.index(o.next);
            const double mass = pa * o.prob;
            auto it = std::find_if(succ.begin(), succ.end(), [j](const auto& e) { return e.first == j; });
            if (it != succ.end())
                it->second += mass;
            else
                succ.emplace_back(j, mass);
        }
    }
    for (const auto& e : succ) visit(e.first);
}

EmbeddedChain build_chain(const DecisionRule& rule, const StateSpace& space,
                          std::vector<std::size_t> seeds) {
    check_rule_size(rule, space);
    EmbeddedChain chain;
    std::vector<std::size_t> local(space.size(), kUnset);
    auto discover = [&](std::size_t g) {
        if (local[g] == kUnset) {
            local[g] = chain.states.size();
            chain.states.push_back(g);
        }
    };
    for (std::size_t g : seeds) discover(g);

    std::vector<std::pair<std::size_t, double>> succ;
    chain.row_begin.push_back(0);
    // BFS order: node i is expanded after all earlier nodes, so rows stay aligned.
    for (std::size_t i = 0; i < chain.states.size(); ++i) {
        double cost = 0.0, holding = 0.0;
        expand_state(rule, space, chain.states[i], succ, cost, holding, discover);
        for (const auto& [g, p] : succ) {
            chain.col.push_back(local[g]);
            chain.prob.push_back(p);
        }
        chain.row_begin.push_back(chain.col.size());
        chain.cost.push_back(cost);
        chain.holding.push_back(holding);
    }
    chain.start = 0;
    return chain;
}

// Iterative Tarjan; returns the component id of every node.
std::vector<std::size_t> strongly_connected(const EmbeddedChain& chain, std::size_t& count) {
    const std::size_t n = chain.size();
    std::vector<std::size_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge)
    std::size_t next_index = 0;
    count = 0;

    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != kUnset) continue;
        call.emplace_back(root, chain.row_begin[root]);
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            auto& [v, edge] = call.back();
            if (edge < chain.row_begin[v + 1]) {
                const std::size_t w = chain.col[edge++];
                if (index[w] == kUnset) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.emplace_back(w, chain.row_begin[w]);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            const std::size_t done = v;
            call.pop_back();
            if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
            if (low[done] == index[done]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = count;
                } while (w != done);
                ++count;
            }
        }
    }
    return comp;
}

struct ClassSolution {
    std::vector<double> mu;  // aligned with the class node list
    double gain = 0.0;
};

ClassSolution solve_class(const EmbeddedChain& chain, const std::vector<std::size_t>& nodes) {
    const std::size_t m = nodes.size();
    std::vector<std::size_t> pos(chain.size(), kUnset);
    for (std::size_t i = 0; i < m; ++i) pos[nodes[i]] = i;

    // mu (I - P) = 0 transposed, last equation replaced by sum(mu) = 1.
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t v = nodes[i];
        if (i + 1 != m) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
        for (std::size_t e = chain.row_begin[v]; e < chain.row_begin[v + 1]; ++e) {
            const std::size_t j = pos[chain.col[e]];
            if (j + 1 != m) triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), -chain.prob[e]);
        }
        triplets.emplace_back(static_cast<int>(m - 1), static_cast<int>(i), 1.0);
    }
    SparseMatrix a(static_cast<int>(m), static_cast<int>(m));
    a.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<int>(m));
    b[static_cast<int>(m - 1)] = 1.0;
    const Eigen::VectorXd x = SparseFactor(std::move(a), "stationary distribution").solve(b);

    ClassSolution out;
    out.mu.assign(x.data(), x.data() + m);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        num += out.mu[i] * chain.cost[nodes[i]];
        den += out.mu[i] * chain.holding[nodes[i]];
    }
    if (!(den > 0.0)) throw NumericalError("stationary expected holding time is not positive");
    out.gain = num / den;
    return out;
}

// Closed classes with their stationary solutions, and absorption probabilities
// of the remaining (transient) nodes into each class.
struct ChainAnalysis {
    std::vector<std::vector<std::size_t>> classes;
    std::vector<ClassSolution> solutions;
    std::vector<std::size_t> owner;          // class of each node, kUnset if transient
    std::vector<std::size_t> transient;      // transient nodes in increasing order
    std::vector<std::size_t> transient_pos;  // node -> row among transients
    std::unique_ptr<SparseFactor> transient_factor;  // I - P restricted to transients
    Eigen::MatrixXd absorption;              // transient row x class

    double absorption_weight(std::size_t node, std::size_t cls) const {
        if (owner[node] != kUnset) return owner[node] == cls ? 1.0 : 0.0;
        if (classes.size() == 1) return 1.0;
        return absorption(static_cast<int>(transient_pos[node]), static_cast<int>(cls));
    }
};

ChainAnalysis analyze(const EmbeddedChain& chain, bool all_absorption) {
    ChainAnalysis out;
    out.classes = closed_classes(chain);
    if (out.classes.empty()) throw NumericalError("embedded chain has no closed class");
    for (const auto& nodes : out.classes) out.solutions.push_back(solve_class(chain, nodes));

    out.owner.assign(chain.size(), kUnset);
    for (std::size_t c = 0; c < out.classes.size(); ++c)
        for (std::size_t v : out.classes[c]) out.owner[v] = c;
    out.transient_pos.assign(chain.size(), kUnset);
    for (std::size_t v = 0; v < chain.size(); ++v)
        if (out.owner[v] == kUnset) {
            out.transient_pos[v] = out.transient.size();
            out.transient.push_back(v);
        }
    if (out.transient.empty()) return out;

    const auto t = static_cast<int>(out.transient.size());
    const auto k = static_cast<int>(out.classes.size());
    std::vector<Triplet> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(t, k);
    for (int i = 0; i < t; ++i) {
        const std::size_t v = out.transient[static_cast<std::size_t>(i)];
        triplets.emplace_back(i, i, 1.0);
        for (std::size_t e = chain.row_begin[v]; e < chain.row_begin[v + 1]; ++e) {
            const std::size_t w = chain.col[e];
            if (out.owner[w] != kUnset)
                rhs(i, static_cast<int>(out.owner[w])) += chain.prob[e];
            else
                triplets.emplace_back(i, static_cast<int>(out.transient_pos[w]), -chain.prob[e]);
        }
    }
    SparseMatrix a(t, t);
    a.setFromTriplets(triplets.begin(), triplets.end());
    out.transient_factor = std::make_unique<SparseFactor>(std::move(a), "absorption probabilities");

    const bool start_transient = out.owner[chain.start] == kUnset;
    if (k > 1 && (all_absorption || start_transient)) {
        out.absorption = Eigen::MatrixXd::Zero(t, k);
        for (int c = 0; c < k; ++c) out.absorption.col(c) = out.transient_factor->solve(rhs.col(c));
    }
    return out;
}

}  // namespace

std::size_t DecisionRule::size() const {
    return std::visit([](const auto& r) { return r.size(); }, rule_);
}

ActionDistribution DecisionRule::distribution(std::size_t state) const {
    if (const auto* p = std::get_if<Policy>(&rule_)) {
        ActionDistribution d{};
        d[static_cast<std::size_t>((*p)[state])] = 1.0;
        return d;
    }
    return std::get<std::vector<ActionDistribution>>(rule_)[state];
}

Action DecisionRule::sample(std::size_t state, double u) const {
    if (const auto* p = std::get_if<Policy>(&rule_)) return (*p)[state];
    const ActionDistribution& d = std::get<std::vector<ActionDistribution>>(rule_)[state];
    double acc = 0.0;
    Action last = Action::Idle;
    for (Action a : kAllActions) {
        const double pa = d[static_cast<std::size_t>(a)];
        if (pa <= 0.0) continue;
        acc += pa;
        last = a;
        if (u < acc) return a;
    }
    return last;
}

DecisionRule random_policy(const StateSpace& space) {
    std::vector<ActionDistribution> dists(space.size());
    for (std::size_t s = 0; s < space.size(); ++s) {
        const ActionSet feasible = feasible_actions(space[s].mode, space.params());
        const double share = 1.0 / static_cast<double>(feasible.size());
        for (Action a : kAllActions)
            dists[s][static_cast<std::size_t>(a)] = feasible.contains(a) ? share : 0.0;
    }
    return DecisionRule(std::move(dists));
}

Action onboard_policy(const SystemState& state, const ModelParams& params) {
    if (!state.mode.cache_full) return Action::Compute;
    if (is_feasible(state.mode, Action::Tx, params)) return Action::Tx;
    return Action::Idle;
}

Action offload_policy(const SystemState& state, const ModelParams& params) {
    return remaining_visibility(state.mode.phase, params) >= params.upload_dur ? Action::Offload
                                                                                : Action::Idle;
}

Policy tabulate(const StateSpace& space,
                const std::function<Action(const SystemState&, const ModelParams&)>& rule) {
    Policy policy;
    policy.reserve(space.size());
    for (const SystemState& s : space.states()) policy.push_back(rule(s, space.params()));
    return policy;
}

Policy onboard_policy(const StateSpace& space) {
    return tabulate(space, [](const SystemState& s, const ModelParams& p) { return onboard_policy(s, p); });
}

Policy offload_policy(const StateSpace& space) {
    return tabulate(space, [](const SystemState& s, const ModelParams& p) { return offload_policy(s, p); });
}

EmbeddedChain build_reachable_chain(const DecisionRule& rule, const StateSpace& space,
                                    const SystemState& start) {
    return build_chain(rule, space, {space.index(start)});
}

EmbeddedChain build_full_chain(const DecisionRule& rule, const StateSpace& space) {
    std::vector<std::size_t> all(space.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return build_chain(rule, space, std::move(all));
}

std::vector<std::vector<std::size_t>> closed_classes(const EmbeddedChain& chain) {
    std::size_t count = 0;
    const std::vector<std::size_t> comp = strongly_connected(chain, count);
    std::vector<bool> closed(count, true);
    for (std::size_t v = 0; v < chain.size(); ++v)
        for (std::size_t e = chain.row_begin[v]; e < chain.row_begin[v + 1]; ++e)
            if (chain.prob[e] > 0.0 && comp[chain.col[e]] != comp[v]) closed[comp[v]] = false;

    std::vector<std::vector<std::size_t>> members(count);
    for (std::size_t v = 0; v < chain.size(); ++v)
        if (closed[comp[v]]) members[comp[v]].push_back(v);
    std::vector<std::vector<std::size_t>> out;
    for (auto& m : members)
        if (!m.empty()) out.push_back(std::move(m));
    std::sort(out.begin(), out.end());
    return out;
}

EvaluationResult evaluate_chain(const EmbeddedChain& chain) {
    const ChainAnalysis analysis = analyze(chain, false);
    EvaluationResult result;
    result.reachable_count = chain.size();
    for (std::size_t c = 0; c < analysis.classes.size(); ++c) {
        const double w = analysis.absorption_weight(chain.start, c);
        if (w <= 0.0) continue;
        const ClassSolution& sol = analysis.solutions[c];
        result.class_gains.push_back(sol.gain);
        result.class_weights.push_back(w);
        result.average_aoinf_per_slot += w * sol.gain;
        for (std::size_t i = 0; i < analysis.classes[c].size(); ++i)
            result.stationary_distribution.emplace_back(chain.states[analysis.classes[c][i]],
                                                        w * sol.mu[i]);
    }
    std::sort(result.stationary_distribution.begin(), result.stationary_distribution.end());
    return result;
}

EvaluationResult evaluate_policy_exact(const DecisionRule& rule, const StateSpace& space,
                                       const SystemState& start) {
    return evaluate_chain(build_reachable_chain(rule, space, start));
}

CertificateReport improvement_certificate(const Policy& policy, const StateSpace& space,
                                          double tol) {
    const EmbeddedChain chain = build_full_chain(DecisionRule(policy), space);
    const ChainAnalysis analysis = analyze(chain, true);
    // build_full_chain seeds every state in order, so node v is StateSpace index v.
    const std::size_t n = chain.size();

    CertificateReport report;
    report.bias.assign(n, 0.0);
    report.state_gain.assign(n, 0.0);

    // Recurrent classes: h - P h + g L = R with h pinned at the first class node,
    // then shifted to zero stationary mean.
    for (std::size_t c = 0; c < analysis.classes.size(); ++c) {
        const auto& nodes = analysis.classes[c];
        const std::size_t m = nodes.size();
        std::vector<std::size_t> pos(n, kUnset);
        for (std::size_t i = 0; i < m; ++i) pos[nodes[i]] = i;
        std::vector<Triplet> triplets;
        Eigen::VectorXd rhs(static_cast<int>(m + 1));
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t v = nodes[i];
            const int row = static_cast<int>(i);
            double diag = 1.0;
            for (std::size_t e = chain.row_begin[v]; e < chain.row_begin[v + 1]; ++e) {
                if (chain.col[e] == v)
                    diag -= chain.prob[e];
                else
                    triplets.emplace_back(row, static_cast<int>(pos[chain.col[e]]), -chain.prob[e]);
            }
            triplets.emplace_back(row, row, diag);
            triplets.emplace_back(row, static_cast<int>(m), chain.holding[v]);
            rhs[row] = chain.cost[v];
        }
        triplets.emplace_back(static_cast<int>(m), 0, 1.0);
        rhs[static_cast<int>(m)] = 0.0;
        SparseMatrix a(static_cast<int>(m + 1), static_cast<int>(m + 1));
        a.setFromTriplets(triplets.begin(), triplets.end());
        const Eigen::VectorXd x = SparseFactor(std::move(a), "policy evaluation").solve(rhs);

        const double gain = x[static_cast<int>(m)];
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += analysis.solutions[c].mu[i] * x[static_cast<int>(i)];
        for (std::size_t i = 0; i < m; ++i) {
            report.bias[nodes[i]] = x[static_cast<int>(i)] - mean;
            report.state_gain[nodes[i]] = gain;
        }
        report.class_gains.push_back(gain);
    }

    // Transient states: g is the absorption-weighted class gain and
    // (I - P_TT) h_T = R - g L + P_TR h_R.
    if (!analysis.transient.empty()) {
        Eigen::VectorXd rhs(static_cast<int>(analysis.transient.size()));
        for (std::size_t i = 0; i < analysis.transient.size(); ++i) {
            const std::size_t v = analysis.transient[i];
            double g = 0.0;
            for (std::size_t c = 0; c < analysis.classes.size(); ++c)
                g += analysis.absorption_weight(v, c) * report.class_gains[c];
            report.state_gain[v] = g;
            double r = chain.cost[v] - g * chain.holding[v];
            for (std::size_t e = chain.row_begin[v]; e < chain.row_begin[v + 1]; ++e)
                if (analysis.owner[chain.col[e]] != kUnset) r += chain.prob[e] * report.bias[chain.col[e]];
            rhs[static_cast<int>(i)] = r;
        }
        const Eigen::VectorXd h = analysis.transient_factor->solve(rhs);
        for (std::size_t i = 0; i < analysis.transient.size(); ++i)
            report.bias[analysis.transient[i]] = h[static_cast<int>(i)];
    }
    report.gain = *std::max_element(report.class_gains.begin(), report.class_gains.end());

    // Policy-iteration improvement step: first on gain, then on the ratio form.
    const ModelParams& params = space.params();
    for (std::size_t s = 0; s < n; ++s) {
        const SystemState& state = space[s];
        const double g = report.state_gain[s];
        CertificateViolation worst{s, policy[s], 0.0, false};
        for (Action alt : feasible_actions(state.mode, params).to_vector()) {
            if (alt == policy[s]) continue;
            const TransitionDist td = transition_dist(state, alt, params);
            double next_gain = 0.0, cont = 0.0;
            for (const Outcome& o : td.outcomes) {
                const std::size_t j = space.index(o.next);
                next_gain += o.prob * report.state_gain[j];
                cont += o.prob * report.bias[j];
            }
            if (next_gain < g - tol) {
                if (!worst.gain_improvement || g - next_gain > worst.improvement)
                    worst = {s, alt, g - next_gain, true};
                continue;
            }
            if (next_gain > g + tol || worst.gain_improvement) continue;
            const double ratio = (static_cast<double>(td.cost) + cont - report.bias[s]) / td.holding;
            if (g - ratio > worst.improvement) worst = {s, alt, g - ratio, false};
        }
        report.worst_improvement = std::max(report.worst_improvement, worst.improvement);
        if (worst.improvement > tol) report.violations.push_back(worst);
    }
    return report;
}

}  // namespace aoinf
