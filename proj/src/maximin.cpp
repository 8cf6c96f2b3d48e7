#include "regretel/maximin.hpp"

#include "regretel/errors.hpp"

#include <algorithm>

namespace regretel {

double security_value(const RewardPolytope& R, const Occupancy& f) {
    return minimize_linear(R, f).value;
}

MaximinSolution maximin(const Mdp& mdp, const RewardPolytope& R, MaximinPath path) {
    if (R.states() != mdp.states() || R.actions() != mdp.actions())
        throw ModelError("reward polytope does not match the MDP dimensions");
    const int nk = mdp.pairs();
    if (path == MaximinPath::Auto && R.is_box()) {
        auto dual = solve_dual_lp(mdp, R.lower());
        return {std::move(dual.f), dual.value, R.lower()};
    }

    // Variables: f, lambda (one per constraint), mu, nu (one per pair).
    // max -d.lambda + lo.mu - hi.nu  s.t. flow(f), mu - nu - C'lambda = f.
    const auto& cons = R.constraints();
    const int m = static_cast<int>(cons.size());
    const int l0 = nk, mu0 = nk + m, nu0 = nk + m + nk;
    lp::LinearProgram prog(nu0 + nk);
    add_flow_constraints(prog, mdp, 0);
    for (int c = 0; c < m; ++c) prog.objective[l0 + c] = -cons[c].rhs;
    for (int i = 0; i < nk; ++i) {
        prog.objective[mu0 + i] = R.lower()[i];
        prog.objective[nu0 + i] = -R.upper()[i];
    }
    std::vector<std::vector<lp::Term>> rows(nk);
    for (int i = 0; i < nk; ++i) rows[i] = {{mu0 + i, 1.0}, {nu0 + i, -1.0}, {i, -1.0}};
    for (int c = 0; c < m; ++c)
        for (const auto& t : cons[c].terms) rows[t.index].push_back({l0 + c, -t.coeff});
    for (auto& row : rows) prog.add_row(std::move(row), lp::Relation::Equal, 0.0);

    const auto sol = lp::solve_lp(prog);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("maximin program did not solve to optimality");
    MaximinSolution out;
    out.f.assign(sol.primal.begin(), sol.primal.begin() + nk);
    for (auto& x : out.f) x = std::max(0.0, x);
    auto inner = minimize_linear(R, out.f);
    out.value = inner.value;
    out.worst = std::move(inner.r);
    return out;
}

} // namespace regretel
