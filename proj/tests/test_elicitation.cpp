#include "doctest.h"

#include "regretel/domains.hpp"
#include "regretel/elicitation.hpp"
#include "regretel/errors.hpp"
#include "regretel/maximin.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace regretel;
using testutil::random_box;
using testutil::random_mdp;
using testutil::single_state;

namespace {

// Closed form for one state with two self-loop actions on a box: with
// A = hi0 - lo1 and B = hi1 - lo0 (clamped at 0), MMR = H * A * B / (A + B)
// where H = 1 / (1 - gamma) is the total occupancy.
double two_action_mmr(const RewardPolytope& R, double gamma) {
    const double A = std::max(0.0, R.upper()[0] - R.lower()[1]);
    const double B = std::max(0.0, R.upper()[1] - R.lower()[0]);
    if (A == 0.0 || B == 0.0) return 0.0;
    return A * B / (A + B) / (1.0 - gamma);
}

ElicitationConfig exact_config(Strategy s = Strategy::CS) {
    ElicitationConfig c;
    c.strategy = s;
    c.mode = SubproblemMode::Exact;
    return c;
}

} // namespace

TEST_CASE("select_query_hlg") {
    const RewardPolytope R(1, 2, {0.0, 0.0}, {2.0, 0.5});
    auto q = select_query_hlg(R);
    CHECK(q.s == 0);
    CHECK(q.a == 0);
    CHECK(q.b == 1.0);

    const RewardPolytope even(2, 2, {0, 0, 0, 0}, {1, 1, 1, 1});
    q = select_query_hlg(even, 0.1);
    CHECK(q.s == 0);
    CHECK(q.a == 0);
    CHECK(q.b == 0.5);
    CHECK(q.epsilon == 0.1);

    const RewardPolytope shut(1, 2, {1, 2}, {1, 2});
    CHECK_THROWS_AS(select_query_hlg(shut), NoInformativeQuery);
    // Gaps at or below the floor do not count.
    CHECK_THROWS_AS(select_query_hlg(R, 0.0, 2.0), NoInformativeQuery);
    q = select_query_hlg(R, 0.0, 0.5);
    CHECK(q.a == 0);

    // With a linear constraint the projected gap decides: r0 + 0.1 r1 <= 0.1
    // on [0,1]^2 leaves r0 a gap of 0.1, so the tie on box widths goes away.
    const RewardPolytope tied(1, 2, {0, 0}, {1, 1}, {{{{0, 1.0}, {1, 0.1}}, 0.1}});
    q = select_query_hlg(tied);
    CHECK(q.a == 1);
    CHECK(q.b == 0.5);
    // The bound stays at the box midpoint even where the projection is narrower.
    const RewardPolytope narrow(1, 2, {0, 0}, {1, 0.01}, {{{{0, 1.0}}, 0.5}});
    q = select_query_hlg(narrow);
    CHECK(q.a == 0);
    CHECK(q.b == 0.5);
}

TEST_CASE("select_query_cs") {
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    // f = (10,10), g = (20,0), unit gaps: scores (20,10).
    auto q = select_query_cs(R, {10, 10}, {20, 0});
    CHECK(q.a == 0);
    CHECK(q.b == 0.5);
    q = select_query_cs(R, {10, 10}, {0, 20});
    CHECK(q.a == 1);

    // Maximin: f alone.
    q = select_query_cs(R, {5, 15}, {});
    CHECK(q.a == 1);

    // Zero weight never wins while a positive score exists.
    const RewardPolytope wide(1, 3, {0, 0, 0}, {100, 1, 1});
    q = select_query_cs(wide, {0, 1, 2}, {0, 0, 0});
    CHECK(q.a == 2);
    // Zero gap never wins.
    const RewardPolytope flat(1, 2, {3, 0}, {3, 1});
    q = select_query_cs(flat, {20, 0.1}, {20, 0});
    CHECK(q.a == 1);

    bool fell_back = false;
    q = select_query_cs(wide, {0, 0, 0}, {0, 0, 0}, 0.0, 0.0, &fell_back);
    CHECK(fell_back);
    CHECK(q.a == 0);
    select_query_cs(R, {10, 10}, {20, 0}, 0.0, 0.0, &fell_back);
    CHECK_FALSE(fell_back);

    CHECK_THROWS_AS(select_query_cs(R, {1, 2, 3}, {}), ModelError);
}

TEST_CASE("simulate_response") {
    SimulatedUser u{{0.7, 0.3, 0.5}, 3, 0.0};
    CHECK(simulate_response(u, {0, 0, 0.5, 0}) == QueryResponse::Yes);
    CHECK(simulate_response(u, {0, 1, 0.5, 0}) == QueryResponse::No);
    CHECK(simulate_response(u, {0, 2, 0.5, 0}) == QueryResponse::Yes);
    u.epsilon = 0.05;
    CHECK(simulate_response(u, {0, 2, 0.52, 0}) == QueryResponse::Unsure);
    CHECK(simulate_response(u, {0, 0, 0.52, 0}) == QueryResponse::Yes);
    CHECK_THROWS_AS(simulate_response(u, {1, 0, 0.5, 0}), ModelError);
}

TEST_CASE("elicitation: hand-run of MMR-HLG on one state") {
    // [0,1]^2, r_true = (0.7, 0.3). HLG asks pair 0 at 0.5 (yes), then
    // pair 1 at 0.5 (no); now a0 dominates and regret is zero.
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    ElicitationSession s(mdp, R, exact_config(Strategy::HLG), SimulatedUser{{0.7, 0.3}, 2, 0.0});
    run_elicitation(s);
    REQUIRE(s.log().size() == 2);
    CHECK(s.log()[0].query.a == 0);
    CHECK(s.log()[0].response == QueryResponse::Yes);
    CHECK(s.log()[1].query.a == 1);
    CHECK(s.log()[1].response == QueryResponse::No);
    const auto& tr = s.trace();
    REQUIRE(tr.size() == 3);
    CHECK(tr[0].mmr == doctest::Approx(10.0));
    CHECK(tr[1].mmr == doctest::Approx(20.0 / 3.0));
    CHECK(tr[2].mmr <= 1e-9);
    CHECK(s.status() == SessionStatus::Converged);
    CHECK(s.certified());
    CHECK(tr[2].chi == doctest::Approx(1.0));
    CHECK(tr[2].distinct_pairs == 2);
    // The final policy is optimal for the true reward.
    CHECK(*tr[2].true_regret == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("elicitation: closed-form regret along a CS run") {
    // Every snapshot of an exact-mode run matches the two-action formula.
    for (unsigned seed = 0; seed < 6; ++seed) {
        const auto lo = testutil::random_vector(2, seed, 0, 1);
        const auto w = testutil::random_vector(2, seed + 100, 0.2, 1);
        const RewardPolytope R(1, 2, lo, {lo[0] + w[0], lo[1] + w[1]});
        std::mt19937 rng(seed);
        RewardVector truth(2);
        for (int i = 0; i < 2; ++i)
            truth[i] = std::uniform_real_distribution<double>(lo[i], lo[i] + w[i])(rng);
        const auto mdp = single_state(2);
        auto cfg = exact_config();
        cfg.budget = 80;
        ElicitationSession s(mdp, R, cfg, SimulatedUser{truth, 2, 0.0});
        RewardPolytope cur = R;
        CHECK(s.trace()[0].mmr == doctest::Approx(two_action_mmr(cur, 0.95)));
        run_elicitation(s);
        for (size_t q = 0; q < s.log().size(); ++q) {
            cur = apply_response(cur, s.log()[q].query, s.log()[q].response);
            CHECK(s.trace()[q + 1].mmr ==
                  doctest::Approx(two_action_mmr(cur, 0.95)).epsilon(1e-6));
        }
        CHECK_FALSE(s.active());
    }
}

TEST_CASE("elicitation: one query settles a dominated pair under CS") {
    // r1 is known to be 0.3; one yes on r0 >= 0.5 makes a0 dominant.
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0.3}, {1, 0.3});
    ElicitationSession s(mdp, R, exact_config(), SimulatedUser{{0.9, 0.3}, 2, 0.0});
    run_elicitation(s);
    REQUIRE(s.log().size() == 1);
    CHECK(s.log()[0].query.a == 0);
    CHECK(s.trace().back().mmr <= 1e-9);
}

TEST_CASE("elicitation: trivial stopping") {
    const auto mdp = random_mdp(3, 2, 4);
    const auto R = random_box(3, 2, 5);
    const auto truth = R.lower();

    auto cfg = exact_config();
    cfg.budget = 0;
    ElicitationSession none(mdp, R, cfg, SimulatedUser{truth, 2, 0.0});
    CHECK(none.trace().size() == 1);
    CHECK(none.log().empty());
    CHECK(none.status() == SessionStatus::BudgetExhausted);
    CHECK_FALSE(none.pending());
    CHECK_THROWS_AS(none.answer(QueryResponse::Yes), SessionClosed);

    const RewardPolytope point(3, 2, truth, truth);
    ElicitationSession flat(mdp, point, exact_config(), SimulatedUser{truth, 2, 0.0});
    CHECK(flat.status() == SessionStatus::Converged);
    CHECK(flat.trace().size() == 1);
    CHECK(std::abs(flat.trace()[0].mmr) <= 1e-9);
    CHECK(std::abs(*flat.trace()[0].true_regret) <= 1e-7);
    CHECK(flat.certified());
}

TEST_CASE("elicitation: metric invariants on random instances") {
    for (unsigned seed = 0; seed < 6; ++seed) {
        const int n = 2 + static_cast<int>(seed % 3);
        const auto mdp = random_mdp(n, 2, seed);
        const auto R = random_box(n, 2, seed + 50);
        RewardVector truth(n * 2);
        std::mt19937 rng(seed);
        for (int i = 0; i < n * 2; ++i)
            truth[i] = std::uniform_real_distribution<double>(R.lower()[i], R.upper()[i])(rng);
        for (auto strategy : {Strategy::CS, Strategy::HLG}) {
            auto cfg = exact_config(strategy);
            cfg.budget = 30;
            ElicitationSession s(mdp, R, cfg, SimulatedUser{truth, 2, 0.0});
            RewardPolytope cur = R;
            double chi = interval_mass(R);
            CHECK(s.trace()[0].chi == doctest::Approx(chi));
            for (size_t q = 0; s.active(); ++q) {
                const auto query = *s.pending();
                const double width = cur.upper()[cur.index(query.s, query.a)] -
                                     cur.lower()[cur.index(query.s, query.a)];
                s.answer_simulated();
                cur = s.polytope();
                // Responses never cut the truth off.
                CHECK(cur.contains(truth, 1e-12));
                // Each midpoint answer removes half the queried width.
                chi -= width / 2;
                CHECK(s.trace().back().chi == doctest::Approx(chi).epsilon(1e-9));
            }
            CHECK(s.log().size() + 1 == s.trace().size());
            double prev = std::numeric_limits<double>::infinity();
            for (const auto& m : s.trace()) {
                CHECK(*m.true_regret >= -1e-6);
                CHECK(m.mmr >= *m.true_regret - 1e-6);
                // Exact MMR on nested reward sets never increases.
                CHECK(m.mmr <= prev + 1e-5 * std::max(1.0, prev));
                prev = m.mmr;
                CHECK(m.mmr_lower <= m.mmr + 1e-6);
            }
        }
    }
}

TEST_CASE("elicitation: relaxed mode brackets and certifies") {
    const auto inst = gen_random(RandomMdpSpec{});
    ElicitationConfig cfg;
    cfg.mode = SubproblemMode::Relaxed;
    cfg.certify_stride = 5;
    cfg.budget = 25;
    ElicitationSession s(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 5, 0.0});
    run_elicitation(s);
    for (const auto& m : s.trace()) {
        CHECK(m.mmr >= *m.true_regret - 1e-6);
        CHECK(m.mmr_lower <= m.mmr + 1e-6);
        if (m.query_index % 5 == 0) CHECK(m.exact);
    }
    const auto ex = max_regret_exact(inst.mdp, s.policy(), s.polytope());
    CHECK(s.trace().back().mmr >= ex.value - 1e-6);
}

TEST_CASE("elicitation: cut pool size and carried constraints") {
    const auto inst = gen_random(RandomMdpSpec{});
    for (int pool : {0, 5}) {
        ElicitationConfig cfg;
        cfg.mode = SubproblemMode::Relaxed;
        cfg.cut_pool = pool;
        cfg.budget = 15;
        ElicitationSession s(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 5, 0.0});
        while (s.active()) {
            // Up to one extra slot for the certification adversary.
            CHECK(static_cast<int>(s.state().cuts.size()) <= pool + (pool > 0));
            for (const auto& w : s.state().cuts) {
                CHECK(w.g.empty());
                CHECK(std::abs(w.value - solve_optimal(inst.mdp, w.r).value) <= 1e-6);
            }
            s.answer_simulated();
        }
        for (const auto& m : s.trace()) CHECK(m.mmr >= *m.true_regret - 1e-6);
    }
}

TEST_CASE("elicitation: MMR-CS leaves most pairs alone") {
    const auto inst = gen_random(RandomMdpSpec{});
    ElicitationConfig cfg;
    cfg.mode = SubproblemMode::Relaxed;
    ElicitationSession s(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 5, 0.0});
    const auto out = run_elicitation(s);
    CHECK(out.terminated);
    CHECK(s.distinct_pairs() < inst.mdp.pairs());
    // The worst case dominates the realized one at the end as well.
    CHECK(*out.trace.back().true_regret <= out.solution.upper_bound + 1e-6);
}

TEST_CASE("elicitation: maximin criterion") {
    const auto mdp = random_mdp(3, 3, 9);
    const auto R = random_box(3, 3, 10);
    auto cfg = exact_config();
    cfg.criterion = Criterion::Maximin;
    cfg.budget = 12;
    ElicitationSession s(mdp, R, cfg, SimulatedUser{R.upper(), 3, 0.0});
    CHECK(s.state().witness_occupancy.empty());
    CHECK(s.trace()[0].maximin_value == doctest::Approx(maximin(mdp, R).value));
    // CS on maximin weights gaps by the maximin occupancy alone.
    const auto expected = select_query_cs(R, maximin(mdp, R).f, {});
    CHECK(s.pending()->s == expected.s);
    CHECK(s.pending()->a == expected.a);
    run_elicitation(s);
    for (const auto& m : s.trace()) {
        CHECK(m.mmr >= *m.true_regret - 1e-6);
        CHECK(m.mmr_lower == 0.0);
    }
}

TEST_CASE("elicitation: HLG stride reuses the stale policy") {
    const auto mdp = random_mdp(3, 2, 21);
    const auto R = random_box(3, 2, 22);
    auto cfg = exact_config(Strategy::HLG);
    cfg.stride = 3;
    cfg.budget = 7;
    ElicitationSession s(mdp, R, cfg, SimulatedUser{R.lower(), 2, 0.0});
    std::vector<Occupancy> policies = {s.policy()};
    while (s.active()) {
        s.answer_simulated();
        policies.push_back(s.policy());
    }
    const auto& tr = s.trace();
    for (size_t q = 1; q < tr.size(); ++q) {
        if (q % 3 != 0) {
            CHECK(policies[q] == policies[q - 1]);
            CHECK(tr[q].mmr == tr[q - 1].mmr);
            CHECK_FALSE(tr[q].exact);
        } else {
            CHECK(tr[q].exact);
        }
    }
}

TEST_CASE("elicitation: unsure answers") {
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    // The true value sits at the first midpoint: the user is unsure.
    ElicitationSession s(mdp, R, exact_config(Strategy::HLG), SimulatedUser{{0.5, 0.2}, 2, 0.1});
    CHECK(s.state().unsure_epsilon == 0.1);
    s.answer_simulated();
    CHECK(s.log()[0].response == QueryResponse::Unsure);
    CHECK(s.polytope().lower()[0] == doctest::Approx(0.4));
    CHECK(s.polytope().upper()[0] == doctest::Approx(0.6));
    run_elicitation(s);
    // Intervals of width 2 * epsilon are never asked about again.
    for (size_t q = 1; q < s.log().size(); ++q) CHECK(s.log()[q].query.a != 0);
    CHECK(s.polytope().contains({0.5, 0.2}, 1e-12));

    auto cfg = exact_config();
    cfg.unsure_epsilon = 0.01;
    CHECK_THROWS_AS(ElicitationSession(mdp, R, cfg, SimulatedUser{{0.5, 0.2}, 2, 0.1}), ModelError);
}

TEST_CASE("elicitation: human sessions") {
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    ElicitationSession s(mdp, R, exact_config());
    CHECK_FALSE(s.simulated());
    CHECK(s.state().unsure_epsilon == doctest::Approx(0.01));
    CHECK_FALSE(s.trace()[0].true_regret.has_value());
    CHECK_THROWS_AS(s.answer_simulated(), ModelError);
    const auto q = *s.pending();
    s.answer(QueryResponse::Yes);
    CHECK(s.polytope().lower()[q.a] == 0.5);
    CHECK(s.polytope().upper()[q.a] == 1.0);

    s.stop();
    CHECK(s.status() == SessionStatus::Stopped);
    const auto snapshot = s.trace();
    s.stop();
    CHECK(s.status() == SessionStatus::Stopped);
    CHECK(s.trace().size() == snapshot.size());
    CHECK_THROWS_AS(s.answer(QueryResponse::No), SessionClosed);
}

TEST_CASE("elicitation: inconsistent answers leave the session untouched") {
    const auto mdp = single_state(2);
    // r0 + r1 <= 1 on [0.4,1]^2 leaves r0 in [0.4,0.6], but the bound is
    // the box midpoint 0.7: a yes there contradicts the constraint.
    const RewardPolytope R(1, 2, {0.4, 0.4}, {1, 1}, {{{{0, 1.0}, {1, 1.0}}, 1.0}});
    ElicitationSession s(mdp, R, exact_config(Strategy::HLG));
    REQUIRE(s.pending());
    const auto before = s.trace().size();
    CHECK_THROWS_AS(s.answer(QueryResponse::Yes), InconsistencyError);
    CHECK(s.active());
    CHECK(s.trace().size() == before);
    CHECK(s.log().empty());
    s.answer(QueryResponse::No);
    CHECK(s.log().size() == 1);
}

TEST_CASE("elicitation: abort, resume and restore are deterministic") {
    const auto mdp = random_mdp(4, 3, 31);
    const auto R = random_box(4, 3, 32);
    const SimulatedUser user{testutil::random_vector(12, 33, 0, 1), 3, 0.0};
    RewardVector lo(12), hi(12);
    for (int i = 0; i < 12; ++i) {
        lo[i] = user.r_true[i] - 2.0;
        hi[i] = user.r_true[i] + 3.0;
    }
    const RewardPolytope box(4, 3, lo, hi);
    auto cfg = exact_config();
    cfg.budget = 12;

    ElicitationSession straight(mdp, box, cfg, user);
    run_elicitation(straight);
    REQUIRE(straight.log().size() > 4);

    ElicitationSession paused(mdp, box, cfg, user);
    int asked = 0;
    const auto out = run_elicitation(paused, [&](const BoundQuery& q) -> std::optional<QueryResponse> {
        if (++asked > 4) return std::nullopt;
        return simulate_response(user, q);
    });
    CHECK_FALSE(out.terminated);
    CHECK(paused.active());
    CHECK(paused.log().size() == 4);
    REQUIRE(paused.pending());

    // Rebuild from the saved state and finish there.
    ElicitationSession restored(mdp, paused.state());
    run_elicitation(restored);
    run_elicitation(paused);

    for (const auto* s : {&paused, &restored}) {
        REQUIRE(s->trace().size() == straight.trace().size());
        for (size_t i = 0; i < s->trace().size(); ++i) {
            CHECK(s->trace()[i].mmr == straight.trace()[i].mmr);
            CHECK(s->trace()[i].maximin_value == straight.trace()[i].maximin_value);
            CHECK(s->trace()[i].chi == straight.trace()[i].chi);
        }
        CHECK(s->policy() == straight.policy());
    }
}

TEST_CASE("metrics CSV") {
    std::vector<MetricSnapshot> tr(2);
    tr[0] = {0, 10.0, 9.0, true, 0.0, 5.0, 2.0, 0, 12.5};
    tr[1] = {1, 0.0, 0.0, true, 0.0, std::nullopt, 1.5, 1, 20.0};
    std::ostringstream a, b;
    write_metrics_csv(a, tr);
    CHECK(a.str() ==
          "query_index,mmr,maximin_value,true_regret,chi,distinct_pairs,elapsed_ms\n"
          "0,10,0,5,2,0,12.5\n1,0,0,,1.5,1,20\n");
    write_metrics_csv(b, tr, false);
    CHECK(b.str() ==
          "query_index,mmr,maximin_value,true_regret,chi,distinct_pairs,elapsed_ms\n"
          "0,10,0,5,2,0,0\n1,0,0,,1.5,1,0\n");
}

TEST_CASE("elicitation: configuration errors") {
    const auto mdp = single_state(2);
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    ElicitationConfig bad;
    bad.stride = 0;
    CHECK_THROWS_AS(ElicitationSession(mdp, R, bad), ModelError);
    bad = ElicitationConfig{};
    bad.certify_stride = -1;
    CHECK_THROWS_AS(ElicitationSession(mdp, R, bad), ModelError);
    CHECK_THROWS_AS(ElicitationSession(mdp, R, {}, SimulatedUser{{2.0, 0.5}, 2, 0.0}), ModelError);
    CHECK_THROWS_AS(ElicitationSession(mdp, R, {}, SimulatedUser{{0.5}, 2, 0.0}), ModelError);
    CHECK_THROWS_AS(ElicitationSession(random_mdp(2, 2, 1), R, {}), ModelError);
}
