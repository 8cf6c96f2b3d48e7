#include "regretel/reward_space.hpp"

#include "regretel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace regretel {

namespace {

bool feasible(int params, const std::vector<double>& lo, const std::vector<double>& hi,
              const std::vector<LinearConstraint>& cons, size_t count) {
    lp::LinearProgram prog(params);
    prog.lower = lo;
    prog.upper = hi;
    for (size_t i = 0; i < count; ++i) prog.add_row(cons[i].terms, lp::Relation::LessEqual, cons[i].rhs);
    return lp::solve_lp(prog).status == lp::Status::Optimal;
}

} // namespace

RewardPolytope::RewardPolytope(int states, int actions, std::vector<double> lo,
                               std::vector<double> hi, std::vector<LinearConstraint> constraints)
    : n_(states), k_(actions), lo_(std::move(lo)), hi_(std::move(hi)),
      constraints_(std::move(constraints)) {
    if (n_ < 1 || k_ < 1) throw ModelError("reward polytope needs positive dimensions");
    const int p = n_ * k_;
    if (static_cast<int>(lo_.size()) != p || static_cast<int>(hi_.size()) != p)
        throw ModelError("interval bounds must have " + std::to_string(p) + " entries");
    for (int i = 0; i < p; ++i) {
        if (!std::isfinite(lo_[i]) || !std::isfinite(hi_[i]))
            throw ModelError("interval " + std::to_string(i) + " is unbounded");
        if (lo_[i] > hi_[i])
            throw InconsistencyError("interval " + std::to_string(i) + " has lo > hi", -1);
    }
    constrained_.assign(p, 0);
    for (size_t c = 0; c < constraints_.size(); ++c) {
        if (!std::isfinite(constraints_[c].rhs))
            throw ModelError("constraint " + std::to_string(c) + " has a non-finite bound");
        for (const auto& t : constraints_[c].terms) {
            if (t.index < 0 || t.index >= p || !std::isfinite(t.coeff))
                throw ModelError("constraint " + std::to_string(c) + " has an invalid term");
            constrained_[t.index] = 1;
        }
    }
    if (!constraints_.empty()) check_nonempty();
}

void RewardPolytope::check_nonempty() const {
    const size_t m = constraints_.size();
    if (feasible(params(), lo_, hi_, constraints_, m)) return;
    // Smallest prefix of constraints that is already infeasible with the box.
    size_t lo = 0, hi = m; // prefix of length lo feasible, length hi infeasible
    if (!feasible(params(), lo_, hi_, constraints_, 0)) hi = 0;
    while (hi > lo + 1) {
        const size_t mid = (lo + hi) / 2;
        if (feasible(params(), lo_, hi_, constraints_, mid))
            lo = mid;
        else
            hi = mid;
    }
    const int culprit = static_cast<int>(hi) - 1;
    throw InconsistencyError("reward constraints are infeasible; conflict detected at constraint " +
                                 std::to_string(culprit),
                             culprit);
}

bool RewardPolytope::constrained(int i) const { return constrained_[i] != 0; }

bool RewardPolytope::contains(const RewardVector& r, double tol) const {
    if (static_cast<int>(r.size()) != params()) return false;
    for (int i = 0; i < params(); ++i)
        if (r[i] < lo_[i] - tol || r[i] > hi_[i] + tol) return false;
    for (const auto& c : constraints_) {
        double act = 0.0;
        for (const auto& t : c.terms) act += t.coeff * r[t.index];
        if (act > c.rhs + tol * (1.0 + std::abs(c.rhs))) return false;
    }
    return true;
}

void RewardPolytope::constrain(lp::LinearProgram& prog, int first_var) const {
    for (int i = 0; i < params(); ++i) {
        prog.lower[first_var + i] = lo_[i];
        prog.upper[first_var + i] = hi_[i];
    }
    for (const auto& c : constraints_) {
        std::vector<lp::Term> terms = c.terms;
        for (auto& t : terms) t.index += first_var;
        prog.add_row(std::move(terms), lp::Relation::LessEqual, c.rhs);
    }
}

RewardPolytope RewardPolytope::with_interval(int i, double lo, double hi) const {
    RewardPolytope out = *this;
    if (lo > hi) throw InconsistencyError("interval " + std::to_string(i) + " would be empty", -1);
    out.lo_[i] = lo;
    out.hi_[i] = hi;
    if (constrained_[i]) out.check_nonempty();
    return out;
}

namespace {

LinearOptimum optimize_linear(const RewardPolytope& R, const std::vector<double>& w, double sign) {
    if (static_cast<int>(w.size()) != R.params())
        throw ModelError("weight vector does not match the reward dimension");
    LinearOptimum out{0.0, RewardVector(R.params())};
    if (R.is_box()) {
        for (int i = 0; i < R.params(); ++i) {
            const double c = sign * w[i];
            out.r[i] = c > 0 ? R.upper()[i] : R.lower()[i];
            out.value += w[i] * out.r[i];
        }
        return out;
    }
    lp::LinearProgram prog(R.params());
    for (int i = 0; i < R.params(); ++i) prog.objective[i] = sign * w[i];
    R.constrain(prog, 0);
    const auto sol = lp::solve_lp(prog);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("linear optimization over the reward polytope failed");
    out.r = sol.primal;
    out.value = dot(w, out.r);
    return out;
}

} // namespace

LinearOptimum maximize_linear(const RewardPolytope& R, const std::vector<double>& w) {
    return optimize_linear(R, w, 1.0);
}

LinearOptimum minimize_linear(const RewardPolytope& R, const std::vector<double>& w) {
    return optimize_linear(R, w, -1.0);
}

std::pair<RewardVector, RewardVector> pointwise_extrema(const RewardPolytope& R) {
    RewardVector rlo = R.lower(), rhi = R.upper();
    if (R.is_box()) return {rlo, rhi};
    lp::LinearProgram prog(R.params());
    R.constrain(prog, 0);
    lp::Basis warm;
    for (int i = 0; i < R.params(); ++i) {
        if (!R.constrained(i)) continue;
        for (double sign : {1.0, -1.0}) {
            std::fill(prog.objective.begin(), prog.objective.end(), 0.0);
            prog.objective[i] = sign;
            lp::SimplexOptions opts;
            opts.warm_start = warm.empty() ? nullptr : &warm;
            const auto sol = lp::solve_lp(prog, opts);
            if (sol.status != lp::Status::Optimal)
                throw SolverError("reward extremum LP failed");
            warm = sol.basis;
            if (sign > 0)
                rhi[i] = std::min(R.upper()[i], sol.primal[i]);
            else
                rlo[i] = std::max(R.lower()[i], sol.primal[i]);
        }
    }
    return {rlo, rhi};
}

double gap(const RewardPolytope& R, int s, int a) {
    if (s < 0 || s >= R.states() || a < 0 || a >= R.actions())
        throw ModelError("gap requested for an invalid state-action pair");
    const int i = R.index(s, a);
    if (!R.constrained(i)) return R.upper()[i] - R.lower()[i];
    std::vector<double> w(R.params(), 0.0);
    w[i] = 1.0;
    const double top = maximize_linear(R, w).value;
    const double bottom = minimize_linear(R, w).value;
    return std::max(0.0, top - bottom);
}

std::vector<double> gaps(const RewardPolytope& R) {
    std::vector<double> out(R.params());
    if (R.is_box()) {
        for (int i = 0; i < R.params(); ++i) out[i] = R.upper()[i] - R.lower()[i];
        return out;
    }
    const auto [rlo, rhi] = pointwise_extrema(R);
    for (int i = 0; i < R.params(); ++i) out[i] = std::max(0.0, rhi[i] - rlo[i]);
    return out;
}

void check_query(const RewardPolytope& R, const BoundQuery& q) {
    if (q.s < 0 || q.s >= R.states() || q.a < 0 || q.a >= R.actions())
        throw ModelError("query refers to an invalid state-action pair");
    const int i = R.index(q.s, q.a);
    if (!(R.lower()[i] < q.b && q.b < R.upper()[i]))
        throw ModelError("query bound " + std::to_string(q.b) + " is outside the open interval (" +
                         std::to_string(R.lower()[i]) + ", " + std::to_string(R.upper()[i]) + ")");
    if (!(q.epsilon >= 0.0)) throw ModelError("indifference width must be nonnegative");
}

RewardPolytope apply_response(const RewardPolytope& R, const BoundQuery& q, QueryResponse resp) {
    check_query(R, q);
    const int i = R.index(q.s, q.a);
    double lo = R.lower()[i], hi = R.upper()[i];
    switch (resp) {
    case QueryResponse::Yes: lo = q.b; break;
    case QueryResponse::No: hi = q.b; break;
    case QueryResponse::Unsure:
        lo = std::max(lo, q.b - q.epsilon);
        hi = std::min(hi, q.b + q.epsilon);
        break;
    }
    return R.with_interval(i, lo, hi);
}

double interval_mass(const RewardPolytope& R) {
    double chi = 0.0;
    for (int i = 0; i < R.params(); ++i) chi += R.upper()[i] - R.lower()[i];
    return chi;
}

} // namespace regretel
