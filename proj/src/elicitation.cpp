#include "regretel/elicitation.hpp"

#include "regretel/errors.hpp"
#include "regretel/maximin.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace regretel {

const char* to_string(Strategy s) { return s == Strategy::HLG ? "hlg" : "cs"; }
const char* to_string(Criterion c) { return c == Criterion::MinimaxRegret ? "mmr" : "maximin"; }

const char* to_string(QueryResponse r) {
    switch (r) {
    case QueryResponse::Yes: return "yes";
    case QueryResponse::No: return "no";
    case QueryResponse::Unsure: return "unsure";
    }
    return "?";
}

const char* to_string(SessionStatus s) {
    switch (s) {
    case SessionStatus::Active: return "active";
    case SessionStatus::Converged: return "converged";
    case SessionStatus::BudgetExhausted: return "budget_exhausted";
    case SessionStatus::NoQuery: return "no_query";
    case SessionStatus::Stopped: return "stopped";
    }
    return "?";
}

namespace {

// Gaps this small relative to the interval's magnitude cannot be bisected.
double resolution(const RewardPolytope& R, int i, double floor) {
    return std::max(floor, 1e-9 * (1.0 + std::abs(R.lower()[i]) + std::abs(R.upper()[i])));
}

BoundQuery midpoint_query(const RewardPolytope& R, int i, double epsilon) {
    BoundQuery q;
    q.s = i / R.actions();
    q.a = i % R.actions();
    q.b = 0.5 * (R.lower()[i] + R.upper()[i]);
    q.epsilon = epsilon;
    return q;
}

} // namespace

BoundQuery select_query_hlg(const RewardPolytope& R, double epsilon, double floor) {
    const auto delta = gaps(R);
    int best = -1;
    for (int i = 0; i < R.params(); ++i) {
        if (delta[i] <= resolution(R, i, floor)) continue;
        if (best < 0 || delta[i] > delta[best]) best = i;
    }
    if (best < 0) throw NoInformativeQuery("every reward interval is below the query resolution");
    return midpoint_query(R, best, epsilon);
}

BoundQuery select_query_cs(const RewardPolytope& R, const Occupancy& f, const Occupancy& g,
                           double epsilon, double floor, bool* fell_back) {
    if (static_cast<int>(f.size()) != R.params() ||
        (!g.empty() && static_cast<int>(g.size()) != R.params()))
        throw ModelError("occupancy vector does not match the reward dimensions");
    const auto delta = gaps(R);
    int best = -1;
    double best_score = 0.0;
    for (int i = 0; i < R.params(); ++i) {
        if (delta[i] <= resolution(R, i, floor)) continue;
        double score = f[i] * delta[i];
        if (!g.empty()) score = std::max(score, g[i] * delta[i]);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    if (fell_back) *fell_back = best < 0;
    if (best < 0) return select_query_hlg(R, epsilon, floor);
    return midpoint_query(R, best, epsilon);
}

QueryResponse simulate_response(const SimulatedUser& user, const BoundQuery& q) {
    const size_t i = static_cast<size_t>(q.s) * user.actions + q.a;
    if (q.s < 0 || q.a < 0 || q.a >= user.actions || i >= user.r_true.size())
        throw ModelError("query names a pair outside the simulated user's reward");
    const double r = user.r_true[i];
    if (user.epsilon > 0.0 && std::abs(r - q.b) <= user.epsilon) return QueryResponse::Unsure;
    return r >= q.b ? QueryResponse::Yes : QueryResponse::No;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricSnapshot>& trace, bool timing) {
    const auto old = out.precision(17);
    out << "query_index,mmr,maximin_value,true_regret,chi,distinct_pairs,elapsed_ms\n";
    for (const auto& m : trace) {
        out << m.query_index << ',' << m.mmr << ',' << m.maximin_value << ',';
        if (m.true_regret) out << *m.true_regret;
        out << ',' << m.chi << ',' << m.distinct_pairs << ',' << (timing ? m.elapsed_ms : 0.0)
            << '\n';
    }
    out.precision(old);
}

void ElicitationConfig::validate() const {
    if (std::isnan(tau)) throw ModelError("tau must be a number");
    if (stride < 1) throw ModelError("stride must be at least 1");
    if (certify_stride < 0) throw ModelError("certify_stride must be nonnegative");
    if (certify_node_limit < 1) throw ModelError("certify_node_limit must be positive");
    if (cut_pool < 0) throw ModelError("cut_pool must be nonnegative");
    if (std::isnan(unsure_epsilon)) throw ModelError("unsure_epsilon must be a number");
    if (!(regret.tolerance >= 0.0)) throw ModelError("tolerance must be nonnegative");
}

ElicitationSession::ElicitationSession(Mdp mdp, RewardPolytope R, ElicitationConfig config,
                                       std::optional<SimulatedUser> user)
    : mdp_(std::move(mdp)), st_(std::move(config), R) {
    st_.config.validate();
    if (R.states() != mdp_.states() || R.actions() != mdp_.actions())
        throw ModelError("reward polytope does not match the MDP dimensions");
    const int nk = mdp_.pairs();
    if (user) {
        if (static_cast<int>(user->r_true.size()) != nk || user->actions != mdp_.actions())
            throw ModelError("simulated user's reward does not match the MDP dimensions");
        if (!(user->epsilon >= 0.0)) throw ModelError("simulated user's epsilon must be >= 0");
        if (!R.contains(user->r_true, 1e-9))
            throw ModelError("simulated user's reward lies outside the reward polytope");
    }
    st_.user = std::move(user);
    st_.budget = st_.config.budget < 0 ? 4 * nk : st_.config.budget;
    if (st_.config.unsure_epsilon >= 0.0) {
        st_.unsure_epsilon = st_.config.unsure_epsilon;
    } else if (st_.user) {
        st_.unsure_epsilon = st_.user->epsilon;
    } else {
        double widest = 0.0;
        for (int i = 0; i < nk; ++i) widest = std::max(widest, R.upper()[i] - R.lower()[i]);
        st_.unsure_epsilon = 0.01 * widest;
    }
    // An Unsure answer must never cut the true reward off.
    if (st_.user && st_.unsure_epsilon < st_.user->epsilon)
        throw ModelError("unsure_epsilon is smaller than the simulated user's epsilon");
    st_.asked.assign(nk, 0);
    if (st_.user) optimal_true_value_ = solve_optimal(mdp_, st_.user->r_true).value;
    advance();
}

ElicitationSession::ElicitationSession(Mdp mdp, State state)
    : mdp_(std::move(mdp)), st_(std::move(state)) {
    st_.config.validate();
    if (st_.current.states() != mdp_.states() || st_.current.actions() != mdp_.actions())
        throw ModelError("session state does not match the MDP dimensions");
    const size_t nk = mdp_.pairs();
    if (st_.initial.params() != st_.current.params() || st_.asked.size() != nk ||
        st_.policy.size() != nk || st_.trace.empty())
        throw ModelError("session state is incomplete or has the wrong dimensions");
    if (st_.user && (st_.user->r_true.size() != nk || st_.user->actions != mdp_.actions()))
        throw ModelError("simulated user's reward does not match the MDP dimensions");
    if (st_.status == SessionStatus::Active && !st_.pending)
        throw ModelError("active session state has no pending query");
    if (st_.user) optimal_true_value_ = solve_optimal(mdp_, st_.user->r_true).value;
}

bool ElicitationSession::certified() const {
    return !st_.trace.empty() && st_.trace.back().mmr <= st_.tau;
}

int ElicitationSession::distinct_pairs() const {
    return static_cast<int>(std::count_if(st_.asked.begin(), st_.asked.end(),
                                          [](int c) { return c > 0; }));
}

void ElicitationSession::answer(QueryResponse r) {
    if (!active()) throw SessionClosed("session has terminated");
    if (!st_.pending) throw SessionClosed("session has no pending query");
    const BoundQuery q = *st_.pending;
    // Throws before any state changes when the answer is inconsistent.
    auto next = apply_response(st_.current, q, r);
    st_.current = std::move(next);
    st_.log.push_back({q, r});
    ++st_.asked[st_.current.index(q.s, q.a)];
    st_.pending.reset();
    advance();
}

void ElicitationSession::answer_simulated() {
    if (!st_.user) throw ModelError("session has no simulated user");
    if (!active() || !st_.pending) throw SessionClosed("session has terminated");
    answer(simulate_response(*st_.user, *st_.pending));
}

void ElicitationSession::stop() {
    if (!active()) return;
    st_.status = SessionStatus::Stopped;
    st_.pending.reset();
}

void ElicitationSession::advance() {
    solve_and_record();
    const auto& last = st_.trace.back();
    if (last.mmr <= st_.tau) {
        st_.status = SessionStatus::Converged;
        return;
    }
    if (static_cast<int>(st_.log.size()) >= st_.budget) {
        st_.status = SessionStatus::BudgetExhausted;
        return;
    }
    pick_query();
}

namespace {

// The `keep` constraints closest to binding at f, newest first on ties.
std::vector<WitnessConstraint> tightest(std::vector<WitnessConstraint> cuts, const Occupancy& f,
                                        int keep) {
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < static_cast<int>(cuts.size()); ++i)
        order.push_back({cuts[i].value - dot(cuts[i].r, f), i});
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    if (static_cast<int>(order.size()) > keep) order.resize(keep);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    std::vector<WitnessConstraint> out;
    for (const auto& [v, i] : order) {
        out.push_back(std::move(cuts[i]));
        out.back().g.clear();
    }
    return out;
}

} // namespace

void ElicitationSession::solve_and_record() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = st_.config;
    const int idx = static_cast<int>(st_.log.size());
    const bool baseline = st_.trace.empty();
    const bool recompute = baseline || cfg.strategy != Strategy::HLG ||
                           idx - st_.solved_at >= cfg.stride;

    MetricSnapshot snap;
    snap.query_index = idx;
    if (recompute) {
        st_.solved_at = idx;
        double lower = 0.0;
        double bound = std::numeric_limits<double>::infinity();
        double hint = 0.0; // cheap lower bound deciding on extra certification
        bool exact = false;
        if (cfg.criterion == Criterion::MinimaxRegret) {
            RegretOptions opts = cfg.regret;
            opts.mode = cfg.mode;
            opts.witness_occupancy = true;
            SolverCache cache;
            cache.relaxed = st_.relaxed_basis;
            opts.cache = &cache;
            opts.seed = carried_cuts();
            auto sol = minimax_regret(mdp_, st_.current, opts);
            st_.relaxed_basis = std::move(cache.relaxed);
            st_.policy = std::move(sol.f);
            st_.cuts = tightest(std::move(sol.generated), st_.policy, cfg.cut_pool);
            st_.witness_occupancy = std::move(sol.witness.g);
            st_.witness_reward = std::move(sol.witness.r);
            lower = hint = sol.delta;
            bound = sol.upper_bound;
            exact = cfg.mode == SubproblemMode::Exact && sol.status == SolveStatus::Optimal;
        } else {
            auto mm = maximin(mdp_, st_.current);
            st_.policy = std::move(mm.f);
            st_.witness_occupancy.clear();
            st_.witness_reward.clear();
        }
        if (!exact && cfg.mode == SubproblemMode::Exact) {
            ExactOptions eo = cfg.regret.exact;
            const auto ex = max_regret_exact(mdp_, st_.policy, st_.current, eo);
            bound = std::min(bound, ex.upper_bound);
            exact = ex.exact;
        }
        if (!exact && !std::isfinite(bound)) {
            const auto rel =
                max_regret_relaxed(mdp_, st_.policy, st_.current, nullptr, &st_.relaxed_basis);
            bound = rel.upper_bound;
            hint = std::max(hint, rel.value);
        }
        const bool due = cfg.certify_stride > 0 &&
                         (baseline || idx % cfg.certify_stride == 0 || hint <= st_.tau);
        if (!exact && due) {
            ExactOptions eo = cfg.regret.exact;
            eo.node_limit = cfg.certify_node_limit;
            const auto ex = max_regret_exact(mdp_, st_.policy, st_.current, eo);
            bound = std::min(bound, ex.upper_bound);
            exact = ex.exact;
            // The exact adversary is what current-solution queries should target.
            if (cfg.criterion == Criterion::MinimaxRegret && cfg.cut_pool > 0)
                st_.cuts.push_back({ex.witness.r, ex.witness.value, {}});
            if (cfg.criterion == Criterion::MinimaxRegret && ex.exact) {
                st_.witness_reward = ex.witness.r;
                st_.witness_occupancy =
                    occupancy_of_policy(mdp_, solve_optimal(mdp_, ex.witness.r).policy);
            }
        }
        snap.mmr = std::max(0.0, bound);
        snap.mmr_lower = std::max(0.0, lower);
        snap.exact = exact;
    } else {
        // The stale policy's old bound stays valid: the reward set only shrank.
        snap.mmr = st_.trace.back().mmr;
    }
    snap.maximin_value = security_value(st_.current, st_.policy);
    if (st_.user) snap.true_regret = optimal_true_value_ - dot(st_.user->r_true, st_.policy);
    snap.chi = interval_mass(st_.current);
    snap.distinct_pairs = distinct_pairs();
    st_.compute_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    snap.elapsed_ms = st_.compute_ms;
    if (baseline) st_.tau = cfg.tau >= 0.0 ? cfg.tau : 1e-6 * snap.mmr;
    st_.trace.push_back(snap);
}

std::vector<WitnessConstraint> ElicitationSession::carried_cuts() const {
    std::vector<WitnessConstraint> out;
    const auto& R = st_.current;
    for (const auto& w : st_.cuts) {
        RewardVector r = w.r;
        bool moved = false;
        for (int i = 0; i < R.params(); ++i) {
            const double c = std::clamp(r[i], R.lower()[i], R.upper()[i]);
            moved |= c != r[i];
            r[i] = c;
        }
        if (!R.is_box() && !R.contains(r, 0.0)) continue;
        const double value = moved ? solve_optimal(mdp_, r).value : w.value;
        out.push_back({std::move(r), value, {}});
    }
    return out;
}

void ElicitationSession::pick_query() {
    const double eps = st_.unsure_epsilon;
    const double floor = 2.0 * eps;
    try {
        if (st_.config.strategy == Strategy::HLG) {
            st_.pending = select_query_hlg(st_.current, eps, floor);
        } else {
            bool fell_back = false;
            st_.pending = select_query_cs(st_.current, st_.policy, st_.witness_occupancy, eps,
                                          floor, &fell_back);
            st_.fallbacks += fell_back;
        }
    } catch (const NoInformativeQuery&) {
        st_.pending.reset();
        st_.status = SessionStatus::NoQuery;
    }
}

namespace {

ElicitationOutcome outcome(const ElicitationSession& session, bool terminated) {
    ElicitationOutcome out;
    out.terminated = terminated;
    out.trace = session.trace();
    const auto& st = session.state();
    auto& sol = out.solution;
    sol.f = st.policy;
    if (!st.trace.empty()) {
        sol.delta = st.trace.back().mmr_lower;
        sol.upper_bound = st.trace.back().mmr;
    }
    sol.witness.r = st.witness_reward;
    sol.witness.g = st.witness_occupancy;
    if (!st.witness_reward.empty())
        sol.witness.value = solve_optimal(session.mdp(), st.witness_reward).value;
    sol.certified = session.certified();
    sol.status = sol.certified ? SolveStatus::Converged : SolveStatus::CapReached;
    sol.iterations = static_cast<int>(st.log.size());
    return out;
}

} // namespace

ElicitationOutcome run_elicitation(ElicitationSession& session, const Responder& responder) {
    while (session.active()) {
        const auto r = responder(*session.pending());
        if (!r) return outcome(session, false);
        session.answer(*r);
    }
    return outcome(session, true);
}

ElicitationOutcome run_elicitation(ElicitationSession& session) {
    if (!session.simulated()) throw ModelError("session has no simulated user");
    const SimulatedUser user = *session.state().user;
    return run_elicitation(session, [&](const BoundQuery& q) -> std::optional<QueryResponse> {
        return simulate_response(user, q);
    });
}

} // namespace regretel
