#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aoinf/policy_tools.hpp"
#include "aoinf/rvi.hpp"

#include <algorithm>

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

ModelParams mid_params() {
    ModelParams p;
    p.aoinf_cap = 12;
    p.period = 8;
    p.window = 5;
    p.compute_dur = 2;
    p.tx_dur = 2;
    p.upload_dur = 3;
    p.ground_infer_dur = 1;
    p.p_tx = 0.55;
    p.p_offload = 0.65;
    return p;
}

// Optimal expected cost of the next n slots by backward induction over slots.
// An action longer than the remaining horizon is charged only for the slots
// that fit. Returns (V_n2 - V_n1) / (n2 - n1) at `start`, which tends to the
// optimal gain.
double finite_horizon_gain(const ModelParams& p, const SystemState& start, int n1, int n2) {
    const StateSpace space(p);
    std::vector<std::vector<double>> v(static_cast<std::size_t>(n2) + 1,
                                       std::vector<double>(space.size(), 0.0));
    for (int n = 1; n <= n2; ++n)
        for (std::size_t s = 0; s < space.size(); ++s) {
            const SystemState& st = space[s];
            double best = 1e300;
            for (Action a : kAllActions) {
                const int r = st.mode.phase < p.window ? p.window - st.mode.phase : 0;
                if (a == Action::Tx && !(st.mode.cache_full && r >= p.tx_dur)) continue;
                if (a == Action::Offload && r < p.upload_dur) continue;
                const int L = holding_time(a, p);
                double c = 0.0;
                for (int i = 0; i < std::min(L, n); ++i) c += std::min(st.aoinf + i, p.aoinf_cap);
                if (L <= n)
                    for (const Outcome& o : transition_dist(st, a, p).outcomes)
                        c += o.prob * v[static_cast<std::size_t>(n - L)][space.index(o.next)];
                best = std::min(best, c);
            }
            v[static_cast<std::size_t>(n)][s] = best;
        }
    const std::size_t i = space.index(start);
    return (v[static_cast<std::size_t>(n2)][i] - v[static_cast<std::size_t>(n1)][i]) / (n2 - n1);
}

}  // namespace

TEST_CASE("baseline solve agrees with exact evaluation") {
    const ModelParams p = baseline_params();
    const SolveReport r = rvi_solve(p, SolveConfig{});
    REQUIRE(r.converged);
    CHECK(r.final_span() <= 1e-9);
    CHECK(r.bracket_width() <= 1e-9);
    CHECK(r.gain_bounds.first <= r.transformed_gain + 1e-12);
    CHECK(r.transformed_gain <= r.gain_bounds.second + 1e-12);
    CHECK(r.gain_per_slot == doctest::Approx(r.transformed_gain / 0.5).epsilon(1e-15));
    CHECK(r.gain_per_slot > 1.0);
    CHECK(r.gain_per_slot < 40.0);
    CHECK(r.span_history.size() == static_cast<std::size_t>(r.iterations));
    const StateSpace space(p);
    CHECK(r.values[space.index({1, {0, false, 0}})] == 0.0);
    const double exact = evaluate_policy_exact(r.policy, space, default_start_state(p)).average_aoinf_per_slot;
    CHECK(std::abs(exact - r.gain_per_slot) <= 1e-6);
}

TEST_CASE("gain matches an independent finite-horizon oracle") {
    for (const ModelParams& p : {mini_params(), mid_params()}) {
        const SolveReport r = rvi_solve(p, SolveConfig{});
        REQUIRE(r.converged);
        const double oracle = finite_horizon_gain(p, default_start_state(p), 3000, 6000);
        CHECK(r.gain_per_slot == doctest::Approx(oracle).epsilon(1e-3));
    }
}

TEST_CASE("closed-form anchors") {
    ModelParams p = baseline_params();
    p.p_tx = p.p_offload = 0.0;
    // The bracket bounds the per-slot error by tolerance / theta.
    SolveConfig tight;
    tight.tolerance = 1e-10;
    const SolveReport dead = rvi_solve(p, tight);
    REQUIRE(dead.converged);
    CHECK(std::abs(dead.gain_per_slot - 40.0) <= 1e-9);

    p = baseline_params();
    p.window = 30;
    p.p_offload = 1.0;
    const SolveReport full = rvi_solve(p, SolveConfig{});
    REQUIRE(full.converged);
    CHECK(full.gain_per_slot <= 8.5 + 1e-9);
}

TEST_CASE("theta invariance") {
    for (const ModelParams& p : {mini_params(), baseline_params()}) {
        std::vector<SolveReport> reports;
        for (double theta : {0.25, 0.5, 0.9}) {
            SolveConfig cfg;
            cfg.transform.theta = theta;
            reports.push_back(rvi_solve(p, cfg));
            REQUIRE(reports.back().converged);
        }
        for (const SolveReport& r : reports) {
            CHECK(r.policy == reports[0].policy);
            CHECK(std::abs(r.gain_per_slot - reports[0].gain_per_slot) <= 1e-6);
        }
    }
}

TEST_CASE("worker threads do not change the iterates") {
    SolveConfig one, four;
    four.threads = 4;
    const SolveReport a = rvi_solve(baseline_params(), one);
    const SolveReport b = rvi_solve(baseline_params(), four);
    CHECK(a.iterations == b.iterations);
    CHECK(a.values == b.values);
    CHECK(a.policy == b.policy);
}

TEST_CASE("non-convergence is reported") {
    SolveConfig cfg;
    cfg.max_iterations = 3;
    const SolveReport r = rvi_solve(baseline_params(), cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    CHECK(r.policy.size() == 50400);
}

TEST_CASE("config validation") {
    SolveConfig cfg;
    cfg.reference_state = {41, {0, false, 0}};
    CHECK_THROWS_AS(rvi_solve(baseline_params(), cfg), std::invalid_argument);
    cfg = SolveConfig{};
    cfg.tolerance = 0.0;
    CHECK_THROWS_AS(rvi_solve(baseline_params(), cfg), std::invalid_argument);
    cfg = SolveConfig{};
    cfg.transform.theta = 1.5;
    CHECK_THROWS_AS(rvi_solve(baseline_params(), cfg), std::invalid_argument);
}

TEST_CASE("greedy extraction and tie-breaking") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const TransformConfig cfg{0.5};
    const TransformedKernel k = build_transformed_kernel(space, cfg);
    const std::vector<double> zero(space.size(), 0.0);
    for (double tol : {0.0, kDefaultTieTolerance}) {
        const Policy pol = extract_policy(k, zero, 0.5, tol);
        // Myopic: idle 5, compute 5.25, tx 5.5, offload 6.25.
        CHECK(pol[space.index({10, {0, true, 1}})] == Action::Idle);
        // At the cap every action costs 20 per step: exact tie, lowest action wins.
        CHECK(pol[space.index({40, {0, true, 0}})] == Action::Idle);
    }
    // q_value with zero values is the transformed cost.
    for (std::size_t s : {std::size_t{0}, std::size_t{777}})
        for (const auto& row : k.rows(s)) CHECK(q_value(k, s, row.action, zero) == row.cost);
}

TEST_CASE("monotonicity check") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const SolveReport r = rvi_solve(p, SolveConfig{});
    const MonotonicityReport ok = check_monotonicity(space, r.values);
    CHECK(ok.ok());

    std::vector<double> v(space.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = space[i].aoinf;
    const Mode mode{7, true, 3};
    v[space.index({20, mode})] = 18.5;  // below the value at aoinf 19
    const MonotonicityReport bad = check_monotonicity(space, v);
    REQUIRE(bad.violations.size() == 1);
    CHECK(bad.violations[0].mode == mode);
    CHECK(bad.violations[0].lower_aoinf == 19);
    CHECK(bad.violations[0].upper_aoinf == 20);
    CHECK(bad.worst_excess == doctest::Approx(0.5));

    ModelParams one = p;
    one.aoinf_cap = 1;
    const StateSpace tiny(one);
    CHECK(check_monotonicity(tiny, std::vector<double>(tiny.size(), 0.0)).ok());
}

TEST_CASE("tx-versus-compute threshold") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const SolveReport r = rvi_solve(p, SolveConfig{});
    const ThresholdReport t = check_tx_compute_threshold(space, r.values, r.gain_per_slot);
    CHECK(t.ok());
    for (int d = 1; d <= p.aoinf_cap; ++d)
        for (int phase = 0; phase < p.period; ++phase) {
            const auto th = t.threshold(d, phase);
            if (remaining_visibility(phase, p) >= p.tx_dur) {
                REQUIRE(th.has_value());
                CHECK(*th >= -1);
                CHECK(*th <= p.aoinf_cap);
            } else {
                CHECK_FALSE(th.has_value());
            }
        }
    CHECK(t.checked_pairs == 40u * 18u);

    // Compute's action value does not depend on the cache age.
    for (int age = 0; age <= p.aoinf_cap; ++age)
        CHECK(acoe_q_value(space, {12, {4, true, age}}, Action::Compute, r.values, r.gain_per_slot) ==
              doctest::Approx(acoe_q_value(space, {12, {4, true, 0}}, Action::Compute, r.values, r.gain_per_slot)));
}
