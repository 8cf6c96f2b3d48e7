#pragma once

// Bound-query elicitation: query selection (HLG, CS), simulated users, the
// per-query metric suite and a stepwise session that can be suspended
// between a query and its answer.

#include "regretel/mdp.hpp"
#include "regretel/regret.hpp"
#include "regretel/reward_space.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace regretel {

enum class Strategy { HLG, CS };
enum class Criterion { MinimaxRegret, Maximin };

const char* to_string(Strategy s);
const char* to_string(Criterion c);
const char* to_string(QueryResponse r);

/**
 * Halve the largest gap: the pair with the widest feasible range (lowest
 * flat index on ties), bound at its box midpoint. Pairs whose gap is at or
 * below `floor` are never chosen; throws NoInformativeQuery if none is left.
 */
BoundQuery select_query_hlg(const RewardPolytope& R, double epsilon = 0.0, double floor = 0.0);

/**
 * Current solution: argmax of max(f * gap, g * gap), or f * gap alone when g
 * is empty (maximin). Falls back to HLG when every score is zero and sets
 * *fell_back accordingly.
 */
BoundQuery select_query_cs(const RewardPolytope& R, const Occupancy& f, const Occupancy& g,
                           double epsilon = 0.0, double floor = 0.0, bool* fell_back = nullptr);

struct SimulatedUser {
    /// Flat s * actions + a, like every reward vector.
    RewardVector r_true;
    int actions = 1;
    /// Indifference half-width; 0 means the user always answers yes or no.
    double epsilon = 0.0;
};

QueryResponse simulate_response(const SimulatedUser& user, const BoundQuery& q);

struct MetricSnapshot {
    int query_index = 0;
    /// Upper bound on the max regret of the current policy (hence on MMR).
    double mmr = 0.0;
    /// Lower bound on MMR from the master program; 0 when not available.
    double mmr_lower = 0.0;
    /// Whether mmr came from an exact max regret evaluation.
    bool exact = false;
    double maximin_value = 0.0;
    /// Simulated sessions only.
    std::optional<double> true_regret;
    double chi = 0.0;
    int distinct_pairs = 0;
    double elapsed_ms = 0.0;
};

/// query_index,mmr,maximin_value,true_regret,chi,distinct_pairs,elapsed_ms;
/// true_regret is left empty when unknown, elapsed_ms is 0 without timing.
void write_metrics_csv(std::ostream& out, const std::vector<MetricSnapshot>& trace,
                       bool timing = true);

struct ElicitationConfig {
    Criterion criterion = Criterion::MinimaxRegret;
    Strategy strategy = Strategy::CS;
    SubproblemMode mode = SubproblemMode::Relaxed;
    /// Stop once mmr <= tau; negative means 1e-6 times the baseline mmr.
    double tau = -1.0;
    /// Query budget; negative means 4 * (number of reward parameters).
    int budget = -1;
    /// HLG only: recompute the robust policy every `stride` queries.
    int stride = 1;
    /// Outside exact mode, evaluate the policy's max regret exactly every
    /// `certify_stride` queries (and whenever the cheap bounds say we might
    /// be done). The exact adversary also becomes the g used by CS. 0
    /// disables exact evaluation; the relaxation bound is used.
    int certify_stride = 1;
    /// Node limit for those exact evaluations.
    long certify_node_limit = 200000;
    /// Unsure half-width attached to each query; negative means the
    /// simulated user's epsilon, or 1% of the pair's initial width for
    /// human sessions.
    double unsure_epsilon = -1.0;
    /// Constraints carried from one robust solve to the next: the ones
    /// closest to binding at the new policy, clipped into the shrunken box
    /// and re-evaluated. 0 disables.
    int cut_pool = 400;
    RegretOptions regret;

    /// Throws ModelError on nonsensical values.
    void validate() const;
};

enum class SessionStatus { Active, Converged, BudgetExhausted, NoQuery, Stopped };
const char* to_string(SessionStatus s);

struct QueryRecord {
    BoundQuery query;
    QueryResponse response = QueryResponse::Unsure;
};

/// Raised when answering or advancing a session that has terminated.
class SessionClosed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * One elicitation run, advanced one answer at a time.
 *
 * Construction computes the baseline snapshot and the first query. Each
 * answer() applies the response, re-solves, records a snapshot and either
 * poses the next query or terminates. Everything is a deterministic function
 * of the instance, the configuration and the answers given; the state is a
 * plain value and can be saved and restored at any point.
 */
class ElicitationSession {
public:
    /// Everything needed to resume a session exactly where it stopped.
    struct State {
        State(ElicitationConfig c, RewardPolytope r0)
            : config(std::move(c)), initial(r0), current(std::move(r0)) {}

        ElicitationConfig config;
        RewardPolytope initial;
        RewardPolytope current;
        std::optional<SimulatedUser> user;
        double tau = 0.0;
        int budget = 0;
        double unsure_epsilon = 0.0;
        std::vector<QueryRecord> log;
        std::vector<MetricSnapshot> trace;
        std::optional<BoundQuery> pending;
        SessionStatus status = SessionStatus::Active;
        Occupancy policy;
        Occupancy witness_occupancy;
        RewardVector witness_reward;
        /// Queries asked per pair.
        std::vector<int> asked;
        /// Number of CS selections that fell back to HLG.
        int fallbacks = 0;
        /// Index of the last robust recomputation (HLG stride).
        int solved_at = 0;
        double compute_ms = 0.0;
        lp::Basis relaxed_basis;
        std::vector<WitnessConstraint> cuts;
    };

    ElicitationSession(Mdp mdp, RewardPolytope R, ElicitationConfig config,
                       std::optional<SimulatedUser> user = std::nullopt);
    ElicitationSession(Mdp mdp, State state);

    const Mdp& mdp() const { return mdp_; }
    const State& state() const { return st_; }

    bool active() const { return st_.status == SessionStatus::Active; }
    SessionStatus status() const { return st_.status; }
    const std::optional<BoundQuery>& pending() const { return st_.pending; }
    const RewardPolytope& polytope() const { return st_.current; }
    const std::vector<MetricSnapshot>& trace() const { return st_.trace; }
    const std::vector<QueryRecord>& log() const { return st_.log; }
    const Occupancy& policy() const { return st_.policy; }
    bool simulated() const { return st_.user.has_value(); }
    /// Last snapshot's bound is within tau.
    bool certified() const;
    int distinct_pairs() const;

    /// Applies the answer to the pending query and advances.
    void answer(QueryResponse r);
    /// Answers the pending query with the simulated user.
    void answer_simulated();
    /// Terminates the session; idempotent.
    void stop();

private:
    void advance();
    void solve_and_record();
    void pick_query();
    std::vector<WitnessConstraint> carried_cuts() const;

    Mdp mdp_;
    State st_;
    double optimal_true_value_ = 0.0;
};

/// Supplies the answer to a query; nullopt aborts and leaves the session
/// active, waiting on that query.
using Responder = std::function<std::optional<QueryResponse>(const BoundQuery&)>;

struct ElicitationOutcome {
    /// False when the responder aborted; the session is still active.
    bool terminated = false;
    std::vector<MetricSnapshot> trace;
    /// Final policy with its bounds: delta is the last lower bound on MMR,
    /// upper_bound the last certified bound.
    RegretSolution solution;
};

/// Runs until termination or until the responder aborts.
ElicitationOutcome run_elicitation(ElicitationSession& session, const Responder& responder);
/// Same, answering with the session's simulated user.
ElicitationOutcome run_elicitation(ElicitationSession& session);

} // namespace regretel
