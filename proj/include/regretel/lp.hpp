#pragma once

// Exact solvers for dense-ish linear programs and small mixed binary programs.
// Everything in the library that optimizes ends up in solve_lp or
// solve_binary_mip.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace regretel::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Smallest pivot element accepted, and the reduced-cost optimality threshold.
inline constexpr double kPivotTolerance = 1e-9;
/// Primal feasibility threshold used inside the simplex iterations.
inline constexpr double kPrimalTolerance = 1e-9;
/// Feasibility guaranteed for reported optimal solutions.
inline constexpr double kFeasibilityTolerance = 1e-7;
/// Absolute gap below which branch-and-bound prunes a node.
inline constexpr double kMipGapTolerance = 1e-7;
/// Distance from 0/1 at which a binary variable counts as integral.
inline constexpr double kIntegralityTolerance = 1e-7;

enum class Relation { LessEqual, Equal, GreaterEqual };

enum class Status { Optimal, Infeasible, Unbounded };

struct Term {
    int index;
    double coeff;
};

struct Constraint {
    std::vector<Term> terms;
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
};

/**
 * maximize  objective . x
 * subject to  rows[i].terms . x  (<=, =, >=)  rows[i].rhs
 *             lower <= x <= upper   (infinite bounds allowed)
 *
 * Rows are stored sparsely; add_dense_row is provided for small hand-built
 * programs.
 */
struct LinearProgram {
    std::vector<double> objective;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<Constraint> rows;

    LinearProgram() = default;
    /// `num_vars` variables with zero objective and bounds [0, +inf).
    explicit LinearProgram(int num_vars);

    int num_vars() const { return static_cast<int>(objective.size()); }
    int num_rows() const { return static_cast<int>(rows.size()); }

    /// Appends a variable and returns its index.
    int add_variable(double lo, double hi, double obj = 0.0);
    int add_row(std::vector<Term> terms, Relation rel, double rhs);
    int add_dense_row(std::span<const double> coeffs, Relation rel, double rhs);

    /// Throws ModelError on mismatched widths, bad indices, lo > hi or NaN.
    void validate() const;
};

enum class VarStatus : std::uint8_t { Basic, AtLower, AtUpper, Free };

/// Simplex basis over structural variables followed by one logical per row.
/// Usable as a warm start for a program with the same dimensions.
struct Basis {
    std::vector<VarStatus> status;
    bool empty() const { return status.empty(); }
};

struct LpSolution {
    Status status = Status::Infeasible;
    double objective = 0.0;
    std::vector<double> primal;
    /// One multiplier per row; nonnegative for <= rows and nonpositive for >=
    /// rows at a maximizing optimum.
    std::vector<double> duals;
    Basis basis;
    int iterations = 0;
};

struct SimplexOptions {
    int iteration_limit = 200000;
    /// Consecutive degenerate pivots after which Bland's rule takes over.
    int degenerate_streak_for_bland = 50;
    /// Force Bland's rule from the first iteration.
    bool bland_only = false;
    /// Optional starting basis; ignored when its dimensions do not match or
    /// it cannot be factorized.
    const Basis* warm_start = nullptr;
};

/**
 * Bounded-variable primal simplex.
 *
 * Phase 1 minimizes the sum of bound violations starting from the supplied
 * basis (or the all-logical basis); phase 2 maximizes the objective.
 * Pricing is Dantzig's largest reduced cost, switching to Bland's
 * lowest-index rule during long degenerate streaks so the method always
 * terminates.
 *
 * Throws ModelError for malformed programs and SolverError when the
 * iteration limit is hit or the basis cannot be kept numerically sound.
 */
LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});

/// Linear program plus variables restricted to {0,1}.
struct BinaryMip {
    LinearProgram base;
    std::vector<int> binaries;
    /// Disjoint groups of binary indices; exactly one member of each group is 1.
    /// The solver enforces the sum-to-one rows itself.
    std::vector<std::vector<int>> groups;

    void validate() const;
};

/// Feasible point proposed by a primal heuristic: objective and full x.
struct Incumbent {
    double objective;
    std::vector<double> primal;
};

/// Called at every branch-and-bound node with that node's LP relaxation
/// point; may return a feasible integral solution.
using IncumbentHeuristic = std::function<std::optional<Incumbent>(const std::vector<double>&)>;

struct MipOptions {
    SimplexOptions lp;
    IncumbentHeuristic heuristic;
    long node_limit = 1000000;
};

struct MipSolution : LpSolution {
    long nodes = 0;
    /// Best LP bound of unexplored nodes when the node limit stopped the
    /// search; equals objective after a complete search.
    double bound = 0.0;
    bool complete = true;
};

/**
 * Depth-first branch-and-bound on the LP relaxation (binaries relaxed to
 * [0,1]). Branches on the group containing the most fractional indicator
 * with one child per member fixed to 1; ungrouped binaries branch 1/0.
 * Children are explored best bound first and pruned against the incumbent
 * with absolute tolerance kMipGapTolerance.
 */
MipSolution solve_binary_mip(const BinaryMip& mip, const MipOptions& opts = {});

} // namespace regretel::lp
