#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aoinf/policy_tools.hpp"
#include "aoinf/rvi.hpp"

#include <map>
#include <numeric>

using namespace aoinf;

namespace {

ModelParams mini_params() {
    ModelParams p;
    p.aoinf_cap = 5;
    p.period = 4;
    p.window = 2;
    p.compute_dur = p.tx_dur = p.upload_dur = p.ground_infer_dur = 1;
    return p;
}

// Slot-level oracle: the process (epoch state, action, elapsed slots) is a plain
// Markov chain whose per-slot cost is min(aoinf + elapsed, cap). Its long-run
// average from `start` is the limit of a lazy power iteration.
double slot_level_average(const DecisionRule& rule, const StateSpace& space, const SystemState& start,
                          int iterations) {
    const ModelParams& p = space.params();
    struct Node {
        std::size_t s;
        Action a;
        int k;
        auto operator<=>(const Node&) const = default;
    };
    std::map<Node, std::size_t> id;
    std::vector<Node> nodes;
    std::vector<std::vector<std::pair<std::size_t, double>>> out;
    auto get = [&](const Node& n) {
        auto [it, fresh] = id.emplace(n, nodes.size());
        if (fresh) {
            nodes.push_back(n);
            out.emplace_back();
        }
        return it->second;
    };
    // Epoch entry: mass split over the rule's actions.
    auto enter = [&](std::size_t s, double w, std::vector<std::pair<std::size_t, double>>& dst) {
        const ActionDistribution d = rule.distribution(s);
        for (Action a : kAllActions)
            if (d[static_cast<std::size_t>(a)] > 0.0)
                dst.emplace_back(get({s, a, 0}), w * d[static_cast<std::size_t>(a)]);
    };
    std::vector<std::pair<std::size_t, double>> init;
    enter(space.index(start), 1.0, init);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node n = nodes[i];
        std::vector<std::pair<std::size_t, double>> edges;
        if (n.k + 1 < holding_time(n.a, p)) {
            edges.emplace_back(get({n.s, n.a, n.k + 1}), 1.0);
        } else {
            for (const Outcome& o : transition_dist(space[n.s], n.a, p).outcomes)
                enter(space.index(o.next), o.prob, edges);
        }
        out[i] = std::move(edges);
    }
    std::vector<double> x(nodes.size(), 0.0), y(nodes.size());
    for (auto [j, w] : init) x[j] += w;
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5 * x[i];
        for (std::size_t i = 0; i < x.size(); ++i)
            for (auto [j, w] : out[i]) y[j] += 0.5 * x[i] * w;
        x.swap(y);
    }
    double avg = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        avg += x[i] * std::min(space[nodes[i].s].aoinf + nodes[i].k, p.aoinf_cap);
    return avg;
}

}  // namespace

TEST_CASE("random baseline distributions") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const DecisionRule r = random_policy(space);
    CHECK_FALSE(r.is_deterministic());
    auto d = r.distribution(space.index({3, {25, false, 0}}));
    CHECK(d == ActionDistribution{0.5, 0.5, 0.0, 0.0});
    d = r.distribution(space.index({3, {0, true, 2}}));
    CHECK(d == ActionDistribution{0.25, 0.25, 0.25, 0.25});
    d = r.distribution(space.index({3, {0, false, 0}}));
    for (double x : {d[0], d[1], d[3]}) CHECK(x == doctest::Approx(1.0 / 3.0));
    CHECK(d[2] == 0.0);
    CHECK(r.sample(space.index({3, {0, true, 2}}), 0.6) == Action::Tx);
    CHECK(r.sample(space.index({3, {0, true, 2}}), 0.99) == Action::Offload);
}

TEST_CASE("deterministic baselines") {
    const ModelParams p = baseline_params();
    for (int phase = 0; phase < p.period; ++phase)
        CHECK(onboard_policy(SystemState{7, {phase, false, 0}}, p) == Action::Compute);
    CHECK(onboard_policy(SystemState{7, {0, true, 9}}, p) == Action::Tx);
    CHECK(onboard_policy(SystemState{7, {18, true, 9}}, p) == Action::Idle);
    CHECK(offload_policy(SystemState{7, {0, false, 0}}, p) == Action::Offload);
    CHECK(offload_policy(SystemState{7, {16, false, 0}}, p) == Action::Idle);
    CHECK(offload_policy(SystemState{7, {25, true, 3}}, p) == Action::Idle);

    const StateSpace space(p);
    const Policy on = onboard_policy(space);
    const Policy off = offload_policy(space);
    for (std::size_t s = 0; s < space.size(); ++s) {
        CHECK(is_feasible(space[s].mode, on[s], p));
        CHECK(is_feasible(space[s].mode, off[s], p));
        CHECK(off[s] != Action::Compute);
    }
}

TEST_CASE("offload renewal cycle: 8.5 exactly") {
    ModelParams p = baseline_params();
    p.window = 30;
    p.p_offload = 1.0;
    const StateSpace space(p);
    const EvaluationResult e = evaluate_policy_exact(offload_policy(space), space, default_start_state(p));
    // Cycle ages 6..11 over 6 slots: 51 / 6.
    CHECK(std::abs(e.average_aoinf_per_slot - 8.5) <= 1e-12);
    CHECK(e.class_gains.size() == 1);
    double mass = 0.0;
    for (const auto& [idx, prob] : e.stationary_distribution) mass += prob;
    CHECK(mass == doctest::Approx(1.0));
}

TEST_CASE("no successes: every policy has gain cap") {
    ModelParams p = baseline_params();
    p.p_tx = p.p_offload = 0.0;
    const StateSpace space(p);
    const SystemState start = default_start_state(p);
    CHECK(evaluate_policy_exact(onboard_policy(space), space, start).average_aoinf_per_slot == doctest::Approx(40.0));
    CHECK(evaluate_policy_exact(offload_policy(space), space, start).average_aoinf_per_slot == doctest::Approx(40.0));
    CHECK(evaluate_policy_exact(random_policy(space), space, start).average_aoinf_per_slot == doctest::Approx(40.0));
}

TEST_CASE("exact evaluation matches the slot-level oracle") {
    {
        const ModelParams p = mini_params();
        const StateSpace space(p);
        const SystemState start = default_start_state(p);
        const SolveReport opt = rvi_solve(p, SolveConfig{});
        for (const DecisionRule& rule : {random_policy(space), DecisionRule(onboard_policy(space)),
                                         DecisionRule(offload_policy(space)), DecisionRule(opt.policy)}) {
            const double exact = evaluate_policy_exact(rule, space, start).average_aoinf_per_slot;
            CHECK(exact == doctest::Approx(slot_level_average(rule, space, start, 20000)).epsilon(1e-9));
        }
    }
    {
        const ModelParams p = baseline_params();
        const StateSpace space(p);
        const SystemState start = default_start_state(p);
        const SolveReport opt = rvi_solve(p, SolveConfig{});
        for (const Policy& pol : {onboard_policy(space), offload_policy(space), opt.policy}) {
            const double exact = evaluate_policy_exact(pol, space, start).average_aoinf_per_slot;
            CHECK(exact == doctest::Approx(slot_level_average(DecisionRule(pol), space, start, 200000)).epsilon(1e-8));
        }
    }
}

TEST_CASE("several closed classes are weighted by absorption") {
    // 0 -> {1 w.p. 0.3, 2 w.p. 0.7}; 1 and 2 absorbing with per-slot costs 2 and 5.
    EmbeddedChain c;
    c.states = {0, 1, 2};
    c.row_begin = {0, 2, 3, 4};
    c.col = {1, 2, 1, 2};
    c.prob = {0.3, 0.7, 1.0, 1.0};
    c.cost = {9.0, 4.0, 10.0};
    c.holding = {1.0, 2.0, 2.0};
    c.start = 0;
    const auto classes = closed_classes(c);
    REQUIRE(classes.size() == 2);
    const EvaluationResult e = evaluate_chain(c);
    CHECK(e.average_aoinf_per_slot == doctest::Approx(0.3 * 2.0 + 0.7 * 5.0));
    REQUIRE(e.class_weights.size() == 2);
    CHECK(e.class_weights[0] + e.class_weights[1] == doctest::Approx(1.0));
}

TEST_CASE("feasibility and size errors") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const Policy all_tx(space.size(), Action::Tx);
    CHECK_THROWS_WITH_AS(evaluate_policy_exact(all_tx, space, default_start_state(p)),
                         doctest::Contains("aoinf=40"), FeasibilityError);
    CHECK_THROWS_AS(evaluate_policy_exact(Policy(10, Action::Idle), space, default_start_state(p)),
                    std::invalid_argument);
}

TEST_CASE("improvement certificate") {
    SUBCASE("optimal policy at the trajectory setting") {
        const ModelParams p = baseline_params();
        const StateSpace space(p);
        const SolveReport r = rvi_solve(p, SolveConfig{});
        const CertificateReport c = improvement_certificate(r.policy, space);
        CHECK(c.ok());
        CHECK(c.gain == doctest::Approx(r.gain_per_slot).epsilon(1e-9));
    }
    SUBCASE("optimal policy with two closed classes") {
        ModelParams p = baseline_params();
        p.p_tx = 0.2;
        p.p_offload = 0.8;
        const StateSpace space(p);
        const SolveReport r = rvi_solve(p, SolveConfig{});
        const EmbeddedChain full = build_full_chain(DecisionRule(r.policy), space);
        CHECK(closed_classes(full).size() == 2);
        const CertificateReport c = improvement_certificate(r.policy, space);
        CHECK(c.ok());
        for (double g : c.class_gains) CHECK(g == doctest::Approx(r.gain_per_slot).epsilon(1e-9));
    }
    SUBCASE("offload-only is improvable when semantics are reliable") {
        ModelParams p = baseline_params();
        p.p_tx = 0.9;
        p.p_offload = 0.1;
        const StateSpace space(p);
        const CertificateReport c = improvement_certificate(offload_policy(space), space);
        CHECK_FALSE(c.ok());
        bool tx_better = false;
        for (const auto& v : c.violations) tx_better = tx_better || v.better_action == Action::Tx;
        CHECK(tx_better);
    }
    SUBCASE("single-aoinf toy") {
        ModelParams p;
        p.aoinf_cap = 1;
        p.period = 1;
        p.window = 1;
        p.compute_dur = p.tx_dur = p.upload_dur = 1;
        p.ground_infer_dur = 0;
        const StateSpace space(p);
        const CertificateReport c = improvement_certificate(Policy(space.size(), Action::Idle), space);
        CHECK(c.ok());
        CHECK(c.gain == doctest::Approx(1.0));
    }
}
