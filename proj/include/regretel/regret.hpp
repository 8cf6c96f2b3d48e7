#pragma once

// Regret of a policy, max regret over a reward polytope (exact MIP, LP
// relaxation, alternating ascent) and minimax regret by constraint generation.

#include "regretel/lp.hpp"
#include "regretel/mdp.hpp"
#include "regretel/reward_space.hpp"

#include <iosfwd>
#include <limits>
#include <mutex>
#include <utility>
#include <vector>

namespace regretel {

/// max_g r.g - r.f = alpha.V*(r) - r.f
double regret(const Mdp& mdp, const Occupancy& f, const RewardVector& r);

struct BigMBounds {
    std::vector<double> m_top; ///< V* for the pointwise-largest reward, length n
    std::vector<double> m_bot; ///< Q of the r_lo-optimal policy, n x k flat
    std::vector<double> m;     ///< m_top(s) - m_bot(s,a), n x k flat
    std::vector<double> v_lo;  ///< V* for the pointwise-smallest reward, length n
};

BigMBounds big_m(const Mdp& mdp, const RewardPolytope& R);

/// An adversary's reward and its optimal value alpha.V*(r) = r.g.
struct WitnessConstraint {
    RewardVector r;
    double value = 0.0;
    /// Occupancy of an optimal policy for r; empty unless requested.
    Occupancy g;
};

struct MaxRegretResult {
    WitnessConstraint witness;
    /// Regret of f at the witness reward (a lower bound on MR unless exact).
    double value = 0.0;
    /// Valid upper bound on MR(f, R): the MIP bound, or the LP relaxation
    /// optimum for the relaxed solver. Infinite when nothing better is known.
    double upper_bound = std::numeric_limits<double>::infinity();
    bool exact = false;
    long nodes = 0;
    int rounds = 0;
    /// Other rewards evaluated along the way, best first, each with its
    /// regret at f. Every one is a valid constraint for the master program.
    std::vector<std::pair<WitnessConstraint, double>> runners_up;
};

enum class ExactMethod {
    Auto,         ///< endpoint search on boxes, MIP otherwise
    Mip,          ///< branch-and-bound on the big-M program
    EndpointSearch ///< boxes only
};

struct ExactOptions {
    ExactMethod method = ExactMethod::Auto;
    long node_limit = 200000;
};

/**
 * Exact MR(f, R).
 *
 * The MIP route maximizes alpha.V - r.f over Q, V, I, r with the big-M
 * policy-indicator constraints. On a box the objective alpha.V*(r) - r.f is
 * convex in r and nondecreasing in every coordinate where f is zero, so an
 * optimum sits at r = hi off the support of f and at an interval end on it;
 * the endpoint search branches on those ends, bounding each node by an MDP
 * solve with chord over-estimates of the free coordinates.
 */
MaxRegretResult max_regret_exact(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                                 const ExactOptions& opts = {}, const BigMBounds* bounds = nullptr);

/**
 * LP relaxation of the exact program. The relaxation's own V is discarded:
 * its reward is re-evaluated with solve_optimal, giving a feasible witness
 * and a lower bound; the relaxation optimum is kept as upper_bound.
 *
 * The indicators are projected out: with y = V - Q the relaxation is
 * 0 <= y_sa <= M_sa and sum_a y_sa / M_sa <= k - 1 per state. `warm`, when
 * given, is used as the starting basis and receives the final one.
 *
 * With polish_rounds > 0 the relaxed reward also seeds that many rounds of
 * the alternating best response, and the better witness is returned.
 */
MaxRegretResult max_regret_relaxed(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                                   const BigMBounds* bounds = nullptr, lp::Basis* warm = nullptr,
                                   int polish_rounds = 0);

/// The same relaxation with explicit Q and I variables. Slower; kept so the
/// projection can be checked.
double relaxation_bound_full(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R);

/**
 * Coordinate ascent: g <- optimal policy for r, r <- argmax_{r in R} r.(g - f).
 * Without `start` it runs from the box midpoint and from the corner that is
 * low on the support of f and high elsewhere, keeping the better result.
 * Each run stops when a round gains less than 1e-9 or after max_rounds.
 */
MaxRegretResult max_regret_alternating(const Mdp& mdp, const Occupancy& f,
                                       const RewardPolytope& R, int max_rounds = 100,
                                       const RewardVector* start = nullptr);

enum class SubproblemMode { Exact, Relaxed, Alternating };

enum class SolveStatus {
    Optimal,    ///< exact subproblem confirmed the master value
    Converged,  ///< heuristic subproblem found no violated constraint
    CapReached, ///< iteration or time limit
    Stalled     ///< a repeated witness stopped the loop
};

const char* to_string(SubproblemMode m);
const char* to_string(SolveStatus s);

struct TraceEntry {
    int iteration = 0;
    double master_value = 0.0;
    double subproblem_value = 0.0;
    double elapsed_ms = 0.0;
};

/// Append-only trace that may be read while a solve is running.
class RegretTrace {
public:
    void append(const TraceEntry& e);
    std::vector<TraceEntry> snapshot() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::vector<TraceEntry> entries_;
};

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace, bool timing = true);

/// Reusable state between related minimax solves (e.g. successive
/// elicitation steps): simplex bases only, never constraints.
struct SolverCache {
    lp::Basis master;
    lp::Basis relaxed;
};

struct RegretOptions {
    SubproblemMode mode = SubproblemMode::Exact;
    /// Stop when MR(f) <= MMR' + tolerance * max(1, |MMR'|).
    double tolerance = 1e-6;
    int max_iterations = 1000;
    double time_limit_ms = std::numeric_limits<double>::infinity();
    int alternating_rounds = 100;
    /// Best-response rounds applied to each relaxed witness (relaxed mode).
    int relaxed_polish_rounds = 10;
    ExactOptions exact;
    /// Most constraints posted per iteration: the witness plus violated
    /// runners-up from the subproblem search.
    int cuts_per_iteration = 8;
    /// Constraints from an earlier solve; those whose reward is still in R
    /// are posted up front.
    std::vector<WitnessConstraint> seed;
    SolverCache* cache = nullptr;
    /// Optional live trace observer.
    RegretTrace* live_trace = nullptr;
    /// Fill WitnessConstraint::g for the final witness.
    bool witness_occupancy = true;
};

struct RegretSolution {
    Occupancy f;
    /// Final master value: MMR in exact mode, a lower bound otherwise.
    double delta = 0.0;
    /// Best known upper bound on MR(f, R) for the returned f.
    double upper_bound = std::numeric_limits<double>::infinity();
    WitnessConstraint witness;
    std::vector<WitnessConstraint> generated;
    std::vector<TraceEntry> trace;
    SolveStatus status = SolveStatus::Optimal;
    /// The gap between delta and upper_bound is within tolerance.
    bool certified = false;
    int iterations = 0;
};

RegretSolution minimax_regret(const Mdp& mdp, const RewardPolytope& R,
                              const RegretOptions& opts = {});

} // namespace regretel
