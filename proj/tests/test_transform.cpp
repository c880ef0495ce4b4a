#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aoinf/rvi.hpp"
#include "aoinf/transform.hpp"

#include <map>

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

std::map<std::size_t, double> as_map(const std::vector<IndexedMass>& v) {
    std::map<std::size_t, double> m;
    for (const IndexedMass& x : v) m[x.state] += x.prob;
    return m;
}

}  // namespace

TEST_CASE("transformed cost") {
    const ModelParams p = baseline_params();
    const TransformConfig cfg{0.5};
    CHECK(transformed_cost({10, {0, true, 1}}, Action::Compute, cfg, p) == doctest::Approx(5.25));
    CHECK(transformed_cost({1, {0, false, 0}}, Action::Idle, cfg, p) == doctest::Approx(0.5));
    CHECK(transformed_cost({39, {0, false, 0}}, Action::Offload, cfg, p) ==
          doctest::Approx(0.5 * 239.0 / 6.0));
    CHECK_THROWS_AS(transformed_cost({10, {25, true, 1}}, Action::Tx, cfg, p), FeasibilityError);
}

TEST_CASE("theta must lie in (0, 1]") {
    const ModelParams p = baseline_params();
    CHECK_THROWS_AS(TransformConfig{0.0}.validate(p), std::invalid_argument);
    CHECK_THROWS_AS(TransformConfig{-0.5}.validate(p), std::invalid_argument);
    CHECK_THROWS_AS(TransformConfig{1.01}.validate(p), std::invalid_argument);
    CHECK_NOTHROW(TransformConfig{1.0}.validate(p));
    CHECK_NOTHROW(TransformConfig{1e-6}.validate(p));
}

TEST_CASE("transformed rows") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const TransformConfig cfg{0.5};

    const SystemState s{20, {0, false, 0}};
    const auto off = as_map(transformed_dist(space, s, Action::Offload, cfg).outcomes);
    REQUIRE(off.size() == 3);
    CHECK(off.at(space.index({26, {6, false, 0}})) == doctest::Approx(0.025));
    CHECK(off.at(space.index({6, {6, false, 0}})) == doctest::Approx(0.7 / 12.0));
    CHECK(off.at(space.index(s)) == doctest::Approx(11.0 / 12.0));

    const SystemState t{5, {25, false, 0}};
    const auto idle = as_map(transformed_dist(space, t, Action::Idle, cfg).outcomes);
    REQUIRE(idle.size() == 2);
    CHECK(idle.at(space.index({6, {26, false, 0}})) == doctest::Approx(0.5));
    CHECK(idle.at(space.index(t)) == doctest::Approx(0.5));
}

TEST_CASE("successor equal to the state folds into the self-loop") {
    ModelParams p;
    p.aoinf_cap = 1;
    p.period = 1;
    p.window = 1;
    p.compute_dur = p.tx_dur = p.upload_dur = 1;
    p.ground_infer_dur = 0;
    const StateSpace space(p);
    const SystemState s{1, {0, false, 0}};
    const auto idle = as_map(transformed_dist(space, s, Action::Idle, TransformConfig{0.5}).outcomes);
    double self = 0.0;
    for (const auto& [j, prob] : idle) {
        CHECK(j == space.index(s));
        self += prob;
    }
    CHECK(self == doctest::Approx(1.0));
}

TEST_CASE("kernels: row sums, agreement with the model, cost scaling") {
    for (const ModelParams& p : {baseline_params(), mini_params()})
        for (double theta : {0.25, 0.5, 0.9, 1.0}) {
            const StateSpace space(p);
            const TransformConfig cfg{theta};
            const SmdpKernel smdp = build_smdp_kernel(space);
            const TransformedKernel tk = build_transformed_kernel(space, cfg);
            REQUIRE(smdp.num_states() == space.size());
            REQUIRE(tk.num_states() == space.size());
            double worst = 0.0;
            for (std::size_t s = 0; s < space.size(); ++s) {
                const auto feasible = feasible_actions(space[s].mode, p).to_vector();
                REQUIRE(smdp.rows(s).size() == feasible.size());
                REQUIRE(tk.rows(s).size() == feasible.size());
                for (std::size_t k = 0; k < feasible.size(); ++k) {
                    const auto& r0 = smdp.rows(s)[k];
                    const auto& r1 = tk.rows(s)[k];
                    REQUIRE(r0.action == feasible[k]);
                    REQUIRE(r1.action == feasible[k]);
                    const TransitionDist d = transition_dist(space[s], feasible[k], p);
                    REQUIRE(r0.cost == d.cost);
                    REQUIRE(r0.holding == d.holding);
                    // Cost is linear in theta: R_bar * L / theta recovers R.
                    REQUIRE(r1.cost * r1.holding / theta == doctest::Approx(static_cast<double>(d.cost)));
                    double s0 = 0.0, s1 = 0.0;
                    for (const IndexedMass& m : smdp.entries(r0)) s0 += m.prob;
                    for (const IndexedMass& m : tk.entries(r1)) {
                        REQUIRE(m.prob >= 0.0);
                        s1 += m.prob;
                    }
                    worst = std::max({worst, std::abs(s0 - 1.0), std::abs(s1 - 1.0)});
                }
            }
            CHECK(worst <= 1e-12);
        }
}

TEST_CASE("q_value with one-hot values returns the transformed kernel entry") {
    const ModelParams p = baseline_params();
    const StateSpace space(p);
    const TransformConfig cfg{0.5};
    const TransformedKernel tk = build_transformed_kernel(space, cfg);
    std::vector<double> v(space.size(), 0.0);
    for (std::size_t s : {std::size_t{0}, std::size_t{1234}, space.size() - 1, std::size_t{31337}})
        for (const auto& row : tk.rows(s)) {
            CHECK(q_value(tk, s, row.action, v) == doctest::Approx(row.cost));
            for (const IndexedMass& m : tk.entries(row)) {
                v[m.state] = 1.0;
                CHECK(q_value(tk, s, row.action, v) - row.cost ==
                      doctest::Approx(as_map(transformed_dist(space, space[s], row.action, cfg).outcomes)[m.state]));
                CHECK(q_value(space, space[s], row.action, v, cfg) == doctest::Approx(q_value(tk, s, row.action, v)));
                v[m.state] = 0.0;
            }
        }

    // Hand-expanded idle row: 0.5 * 5 + 0.5 V(succ) + 0.5 V(self).
    const SystemState s{5, {25, false, 0}};
    std::vector<double> w(space.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.001 * static_cast<double>(i % 97);
    const std::size_t succ = space.index({6, {26, false, 0}});
    CHECK(q_value(space, s, Action::Idle, w, cfg) ==
          doctest::Approx(2.5 + 0.5 * w[succ] + 0.5 * w[space.index(s)]));
}

TEST_CASE("ratio form residual") {
    ModelParams p;
    p.aoinf_cap = 1;
    p.period = 1;
    p.window = 1;
    p.compute_dur = p.tx_dur = p.upload_dur = 1;
    p.ground_infer_dur = 0;
    const StateSpace space(p);
    const SmdpKernel k = build_smdp_kernel(space);
    const std::vector<double> zero(space.size(), 0.0);
    // Every slot costs 1 at cap 1.
    for (std::size_t s = 0; s < space.size(); ++s) {
        CHECK(verify_ratio_form(k, s, zero, 1.0) == doctest::Approx(0.0));
        CHECK(verify_ratio_form(space, space[s], zero, 1.0) == doctest::Approx(0.0));
        CHECK(verify_ratio_form(k, s, zero, 0.0) == doctest::Approx(1.0));
    }
    CHECK(max_ratio_form_residual(k, zero, 1.0).max_residual == doctest::Approx(0.0));
}

TEST_CASE("fault injection scales only the chosen action") {
    const ModelParams p = mini_params();
    const StateSpace space(p);
    const TransformedKernel clean = build_transformed_kernel(space, {});
    TransformedKernel bad = build_transformed_kernel(space, {});
    inject_fault(bad, KernelFault{Action::Compute, 1.5});
    for (std::size_t s = 0; s < space.size(); ++s)
        for (std::size_t k = 0; k < clean.rows(s).size(); ++k) {
            const auto& a = clean.rows(s)[k];
            const auto& b = bad.rows(s)[k];
            CHECK(b.cost == doctest::Approx(a.action == Action::Compute ? 1.5 * a.cost : a.cost));
        }
}
