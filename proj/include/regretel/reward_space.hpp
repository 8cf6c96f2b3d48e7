#pragma once

// The feasible reward set: per-(s,a) interval bounds plus optional general
// linear constraints C r <= d, and its refinement by bound queries.

#include "regretel/lp.hpp"
#include "regretel/mdp.hpp"

#include <utility>
#include <vector>

namespace regretel {

/// sum_i coeff_i * r[index_i] <= rhs, indices flat (s * k + a).
struct LinearConstraint {
    std::vector<lp::Term> terms;
    double rhs = 0.0;
};

/**
 * Bounded convex reward polytope { r : lo <= r <= hi, C r <= d }.
 *
 * Values are immutable; refinement returns a new polytope. Construction
 * rejects empty sets, so every RewardPolytope has at least one member.
 */
class RewardPolytope {
public:
    RewardPolytope(int states, int actions, std::vector<double> lo, std::vector<double> hi,
                   std::vector<LinearConstraint> constraints = {});

    int states() const { return n_; }
    int actions() const { return k_; }
    int params() const { return n_ * k_; }
    int index(int s, int a) const { return s * k_ + a; }

    const std::vector<double>& lower() const { return lo_; }
    const std::vector<double>& upper() const { return hi_; }
    const std::vector<LinearConstraint>& constraints() const { return constraints_; }
    bool is_box() const { return constraints_.empty(); }

    /// Whether any linear constraint mentions parameter i.
    bool constrained(int i) const;

    bool contains(const RewardVector& r, double tol = 1e-9) const;

    /**
     * Makes variables first_var .. first_var + nk - 1 of `prog` range over
     * the polytope: sets their bounds and appends the C r <= d rows.
     */
    void constrain(lp::LinearProgram& prog, int first_var) const;

    /// Copy with interval i replaced; re-checks nonemptiness when needed.
    RewardPolytope with_interval(int i, double lo, double hi) const;

private:
    void check_nonempty() const;

    int n_, k_;
    std::vector<double> lo_, hi_;
    std::vector<LinearConstraint> constraints_;
    std::vector<char> constrained_;
};

/// Optimal value and argument of a linear function over the polytope.
struct LinearOptimum {
    double value;
    RewardVector r;
};

/// max_{r in R} w . r
LinearOptimum maximize_linear(const RewardPolytope& R, const std::vector<double>& w);
/// min_{r in R} w . r
LinearOptimum minimize_linear(const RewardPolytope& R, const std::vector<double>& w);

/// max_{r in R} r(s,a) - min_{r in R} r(s,a).
double gap(const RewardPolytope& R, int s, int a);
/// Gap for every parameter, flat order.
std::vector<double> gaps(const RewardPolytope& R);

/// Componentwise min and max of each reward over R. The assembled vectors
/// need not themselves belong to R.
std::pair<RewardVector, RewardVector> pointwise_extrema(const RewardPolytope& R);

/// "Is r(s,a) >= b?"; epsilon is the half-width applied to an Unsure answer.
struct BoundQuery {
    int s = 0;
    int a = 0;
    double b = 0.0;
    double epsilon = 0.0;
};

enum class QueryResponse { Yes, No, Unsure };

/// Throws ModelError unless lo(s,a) < b < hi(s,a) and epsilon >= 0.
void check_query(const RewardPolytope& R, const BoundQuery& q);

/**
 * Yes: lo := b. No: hi := b. Unsure: the interval is intersected with
 * [b - epsilon, b + epsilon]. Throws InconsistencyError naming the
 * offending linear constraint if the result would be empty.
 */
RewardPolytope apply_response(const RewardPolytope& R, const BoundQuery& q, QueryResponse resp);

/// Sum of box interval widths (ignores linear constraints).
double interval_mass(const RewardPolytope& R);

} // namespace regretel
