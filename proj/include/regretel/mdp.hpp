#pragma once

// Finite discounted MDPs and the standard solution toolbox: value iteration,
// exact policy evaluation, occupancy frequencies and the dual (occupancy) LP.
//
// Vectors over state-action pairs (rewards, occupancies, Q-values) use the
// flat index s * k + a throughout the library.

#include "regretel/lp.hpp"

#include <vector>

namespace regretel {

/// Reward per (s,a), flat index s * k + a.
using RewardVector = std::vector<double>;
/// Discounted visitation frequency per (s,a), flat index s * k + a.
using Occupancy = std::vector<double>;

struct Transition {
    int state;
    double prob;
};

/**
 * Immutable finite MDP <S, A, P, gamma, alpha> without a reward.
 *
 * Transitions are sparse successor lists per state-action pair. Construction
 * validates that every list and the initial distribution sum to one.
 */
class Mdp {
public:
    Mdp(int states, int actions, std::vector<std::vector<Transition>> transitions, double gamma,
        std::vector<double> initial);

    int states() const { return n_; }
    int actions() const { return k_; }
    int pairs() const { return n_ * k_; }
    int index(int s, int a) const { return s * k_ + a; }
    double gamma() const { return gamma_; }
    const std::vector<double>& initial() const { return alpha_; }
    const std::vector<Transition>& successors(int s, int a) const {
        return transitions_[index(s, a)];
    }
    const std::vector<std::vector<Transition>>& transitions() const { return transitions_; }

private:
    int n_, k_;
    std::vector<std::vector<Transition>> transitions_;
    double gamma_;
    std::vector<double> alpha_;
};

/// Row-stochastic n x k action distribution.
struct Policy {
    int states = 0;
    int actions = 0;
    std::vector<double> prob;

    static Policy deterministic(int states, int actions, const std::vector<int>& choice);
    double operator()(int s, int a) const { return prob[s * actions + a]; }
    bool is_deterministic() const;
    /// Most probable action in `s` (lowest index on ties).
    int action(int s) const;
    /// Throws ModelError unless every row is a distribution (tolerance 1e-9).
    void validate() const;
};

struct PolicyValue {
    std::vector<double> v; ///< length n
    std::vector<double> q; ///< length n * k
};

struct OptimalSolution {
    Policy policy;
    std::vector<double> v;
    std::vector<double> q;
    /// alpha . V*
    double value = 0.0;
};

/// Throws ModelError when `r` has the wrong length or non-finite entries.
void check_reward(const Mdp& mdp, const RewardVector& r);

/**
 * Optimal deterministic policy, V* and Q*.
 *
 * A short value-iteration warm-up picks a greedy policy, which is evaluated
 * exactly; policy-improvement steps follow until no action improves on the
 * evaluated values, so the result is optimal up to linear-solve error.
 * Ties go to the lowest action index.
 */
OptimalSolution solve_optimal(const Mdp& mdp, const RewardVector& r);

/// Exact solve of V = r_pi + gamma P_pi V, and Q_a = r_a + gamma P_a V.
PolicyValue evaluate_policy(const Mdp& mdp, const RewardVector& r, const Policy& pi);

/// Discounted visitation frequencies of `pi` from the initial distribution.
Occupancy occupancy_of_policy(const Mdp& mdp, const Policy& pi);

/// pi(s,a) = f(s,a) / sum_a' f(s,a'); states with total mass below 1e-12
/// get action 0.
Policy policy_of_occupancy(const Mdp& mdp, const Occupancy& f);

/// sum_a f(t,a) - gamma sum_{s,a} P_sa(t) f(s,a) - alpha(t) for each state t.
std::vector<double> flow_residual(const Mdp& mdp, const Occupancy& f);

double dot(const std::vector<double>& a, const std::vector<double>& b);

/**
 * Adds the occupancy polytope to `lp`: variables first_var .. first_var+nk-1
 * (assumed already present and nonnegative) must satisfy flow conservation.
 * Returns the index of the first added row; one row per state.
 */
int add_flow_constraints(lp::LinearProgram& lp, const Mdp& mdp, int first_var);

struct DualLpSolution {
    Occupancy f;
    double value = 0.0;
    lp::Basis basis;
};

/// max r . f over the occupancy polytope, solved with the simplex kernel.
DualLpSolution solve_dual_lp(const Mdp& mdp, const RewardVector& r);

} // namespace regretel
