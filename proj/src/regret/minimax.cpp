#include "regretel/errors.hpp"
#include "regretel/regret.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace regretel {

const char* to_string(SubproblemMode m) {
    switch (m) {
    case SubproblemMode::Exact: return "exact";
    case SubproblemMode::Relaxed: return "relaxed";
    case SubproblemMode::Alternating: return "alternating";
    }
    return "?";
}

const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Converged: return "converged";
    case SolveStatus::CapReached: return "cap_reached";
    case SolveStatus::Stalled: return "stalled";
    }
    return "?";
}

void RegretTrace::append(const TraceEntry& e) {
    std::lock_guard lock(mu_);
    entries_.push_back(e);
}

std::vector<TraceEntry> RegretTrace::snapshot() const {
    std::lock_guard lock(mu_);
    return entries_;
}

void RegretTrace::clear() {
    std::lock_guard lock(mu_);
    entries_.clear();
}

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace, bool timing) {
    const auto old = out.precision(17);
    out << "iteration,master_value,subproblem_value,elapsed_ms\n";
    for (const auto& e : trace)
        out << e.iteration << ',' << e.master_value << ',' << e.subproblem_value << ','
            << (timing ? e.elapsed_ms : 0.0) << '\n';
    out.precision(old);
}

namespace {

bool same_witness(const WitnessConstraint& a, const WitnessConstraint& b) {
    if (std::abs(a.value - b.value) > 1e-9) return false;
    for (size_t i = 0; i < a.r.size(); ++i)
        if (std::abs(a.r[i] - b.r[i]) > 1e-9) return false;
    return true;
}

class Master {
public:
    Master(const Mdp& mdp, const lp::Basis* warm) : nk_(mdp.pairs()), prog_(mdp.pairs() + 1) {
        prog_.objective[nk_] = -1.0;
        add_flow_constraints(prog_, mdp, 0);
        if (warm) basis_ = *warm;
    }

    // value_i - r_i . f <= delta
    void post(const WitnessConstraint& w) {
        std::vector<lp::Term> terms;
        terms.reserve(nk_ + 1);
        for (int i = 0; i < nk_; ++i)
            if (w.r[i] != 0.0) terms.push_back({i, -w.r[i]});
        terms.push_back({nk_, -1.0});
        prog_.add_row(std::move(terms), lp::Relation::LessEqual, -w.value);
        // A new row enters with its logical basic, which keeps the basis
        // square and nonsingular.
        if (basis_.status.size() + 1 ==
            static_cast<size_t>(prog_.num_vars() + prog_.num_rows()))
            basis_.status.push_back(lp::VarStatus::Basic);
    }

    std::pair<Occupancy, double> solve() {
        lp::SimplexOptions opts;
        if (!basis_.empty()) opts.warm_start = &basis_;
        const auto sol = lp::solve_lp(prog_, opts);
        if (sol.status != lp::Status::Optimal)
            throw SolverError("minimax regret master program did not solve to optimality");
        basis_ = sol.basis;
        Occupancy f(sol.primal.begin(), sol.primal.begin() + nk_);
        for (auto& x : f) x = std::max(0.0, x);
        return {std::move(f), std::max(0.0, sol.primal[nk_])};
    }

    const lp::Basis& basis() const { return basis_; }

private:
    int nk_;
    lp::LinearProgram prog_;
    lp::Basis basis_;
};

} // namespace

RegretSolution minimax_regret(const Mdp& mdp, const RewardPolytope& R, const RegretOptions& opts) {
    if (R.states() != mdp.states() || R.actions() != mdp.actions())
        throw ModelError("reward polytope does not match the MDP dimensions");
    if (!(opts.tolerance >= 0.0)) throw ModelError("tolerance must be nonnegative");
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    BigMBounds bm;
    if (opts.mode != SubproblemMode::Alternating) bm = big_m(mdp, R);

    RegretSolution out;
    Master master(mdp, opts.cache ? &opts.cache->master : nullptr);
    for (const auto& w : opts.seed) {
        if (static_cast<int>(w.r.size()) != mdp.pairs() || !R.contains(w.r, 0.0)) continue;
        if (std::any_of(out.generated.begin(), out.generated.end(),
                        [&](const WitnessConstraint& g) { return same_witness(g, w); }))
            continue;
        WitnessConstraint copy{w.r, w.value, {}};
        master.post(copy);
        out.generated.push_back(std::move(copy));
    }

    lp::Basis relaxed_basis;
    if (opts.cache) relaxed_basis = opts.cache->relaxed;

    double best_ub = std::numeric_limits<double>::infinity();
    Occupancy best_f;
    WitnessConstraint best_witness;
    out.status = SolveStatus::CapReached;

    for (int iter = 1;; ++iter) {
        auto [f, lower] = master.solve();
        MaxRegretResult sub;
        switch (opts.mode) {
        case SubproblemMode::Exact: sub = max_regret_exact(mdp, f, R, opts.exact, &bm); break;
        case SubproblemMode::Relaxed:
            sub = max_regret_relaxed(mdp, f, R, &bm, &relaxed_basis, opts.relaxed_polish_rounds);
            break;
        case SubproblemMode::Alternating:
            sub = max_regret_alternating(mdp, f, R, opts.alternating_rounds);
            break;
        }
        const TraceEntry entry{iter, lower, sub.value, elapsed()};
        out.trace.push_back(entry);
        if (opts.live_trace) opts.live_trace->append(entry);
        out.iterations = iter;
        out.delta = lower;
        out.f = f;
        out.witness = sub.witness;
        out.upper_bound = sub.upper_bound;
        if (sub.upper_bound < best_ub || best_f.empty()) {
            best_ub = sub.upper_bound;
            best_f = f;
            best_witness = sub.witness;
        }

        const double tol = opts.tolerance * std::max(1.0, std::abs(lower));
        if (sub.value <= lower + tol) {
            out.status = opts.mode == SubproblemMode::Exact && sub.exact ? SolveStatus::Optimal
                                                                         : SolveStatus::Converged;
            break;
        }
        if (std::any_of(out.generated.begin(), out.generated.end(),
                        [&](const WitnessConstraint& g) { return same_witness(g, sub.witness); })) {
            out.status = SolveStatus::Stalled;
            break;
        }
        if (iter >= opts.max_iterations || elapsed() >= opts.time_limit_ms) {
            out.status = SolveStatus::CapReached;
            break;
        }
        master.post(sub.witness);
        out.generated.push_back(sub.witness);
        int extra = 0;
        for (const auto& [w, v] : sub.runners_up) {
            if (extra + 1 >= opts.cuts_per_iteration || v <= lower + tol) break;
            if (std::any_of(out.generated.begin(), out.generated.end(),
                            [&](const WitnessConstraint& g) { return same_witness(g, w); }))
                continue;
            master.post(w);
            out.generated.push_back(w);
            ++extra;
        }
    }

    // Without convergence the iterate with the smallest known max regret is
    // the most useful answer; delta stays the last (largest) lower bound.
    if (out.status == SolveStatus::CapReached || out.status == SolveStatus::Stalled) {
        if (best_ub < out.upper_bound) {
            out.f = std::move(best_f);
            out.witness = std::move(best_witness);
            out.upper_bound = best_ub;
        }
    }
    out.certified = out.upper_bound <= out.delta + opts.tolerance * std::max(1.0, std::abs(out.delta));
    if (opts.witness_occupancy)
        out.witness.g = occupancy_of_policy(mdp, solve_optimal(mdp, out.witness.r).policy);
    if (opts.cache) {
        opts.cache->master = master.basis();
        opts.cache->relaxed = relaxed_basis;
    }
    return out;
}

} // namespace regretel
