#include "regretel/errors.hpp"
#include "regretel/regret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace regretel {

namespace {

double pad(double x) { return 1e-7 * (1.0 + std::abs(x)); }

// Adds a row after merging repeated indices.
void add_merged_row(lp::LinearProgram& prog, std::vector<lp::Term> terms, lp::Relation rel,
                    double rhs) {
    std::map<int, double> acc;
    for (const auto& t : terms) acc[t.index] += t.coeff;
    terms.clear();
    for (const auto& [i, c] : acc)
        if (c != 0.0) terms.push_back({i, c});
    prog.add_row(std::move(terms), rel, rhs);
}

// Q_sa - r_sa - gamma sum_t P(t|s,a) V_t = 0
void add_bellman_rows(lp::LinearProgram& prog, const Mdp& mdp, int q0, int v0, int r0) {
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) {
            const int i = mdp.index(s, a);
            std::vector<lp::Term> terms = {{q0 + i, 1.0}, {r0 + i, -1.0}};
            for (const auto& t : mdp.successors(s, a))
                terms.push_back({v0 + t.state, -mdp.gamma() * t.prob});
            add_merged_row(prog, std::move(terms), lp::Relation::Equal, 0.0);
        }
}

void bound_values(lp::LinearProgram& prog, const BigMBounds& bm, int v0) {
    for (size_t s = 0; s < bm.m_top.size(); ++s) {
        prog.lower[v0 + s] = bm.v_lo[s] - pad(bm.v_lo[s]);
        prog.upper[v0 + s] = bm.m_top[s] + pad(bm.m_top[s]);
    }
}

void check_sizes(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R) {
    if (R.states() != mdp.states() || R.actions() != mdp.actions())
        throw ModelError("reward polytope does not match the MDP dimensions");
    if (static_cast<int>(f.size()) != mdp.pairs())
        throw ModelError("occupancy vector does not match the MDP dimensions");
}

RewardVector clip_to_box(RewardVector r, const RewardPolytope& R) {
    for (int i = 0; i < R.params(); ++i) r[i] = std::clamp(r[i], R.lower()[i], R.upper()[i]);
    return r;
}

WitnessConstraint evaluate_witness(const Mdp& mdp, RewardVector r) {
    WitnessConstraint w;
    w.value = solve_optimal(mdp, r).value;
    w.r = std::move(r);
    return w;
}

} // namespace

double regret(const Mdp& mdp, const Occupancy& f, const RewardVector& r) {
    return solve_optimal(mdp, r).value - dot(r, f);
}

BigMBounds big_m(const Mdp& mdp, const RewardPolytope& R) {
    const auto [rlo, rhi] = pointwise_extrema(R);
    const auto top = solve_optimal(mdp, rhi);
    const auto bot = solve_optimal(mdp, rlo);
    BigMBounds bm;
    bm.m_top = top.v;
    bm.v_lo = bot.v;
    bm.m_bot = bot.q;
    bm.m.resize(mdp.pairs());
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) {
            const int i = mdp.index(s, a);
            bm.m[i] = bm.m_top[s] - bm.m_bot[i];
        }
    return bm;
}

namespace {

MaxRegretResult exact_mip(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                          const ExactOptions& opts, const BigMBounds* bounds) {
    const BigMBounds bm = bounds ? *bounds : big_m(mdp, R);
    const int n = mdp.states(), k = mdp.actions(), nk = mdp.pairs();
    const int q0 = 0, v0 = nk, i0 = nk + n, r0 = 2 * nk + n;

    lp::BinaryMip mip;
    auto& prog = mip.base;
    prog = lp::LinearProgram(3 * nk + n);
    for (int i = 0; i < nk; ++i) prog.lower[q0 + i] = -lp::kInf;
    for (int s = 0; s < n; ++s) prog.objective[v0 + s] = mdp.initial()[s];
    bound_values(prog, bm, v0);
    for (int i = 0; i < nk; ++i) {
        prog.upper[i0 + i] = 1.0;
        prog.objective[r0 + i] = -f[i];
    }
    add_bellman_rows(prog, mdp, q0, v0, r0);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < k; ++a) {
            const int i = mdp.index(s, a);
            const double m = std::max(0.0, bm.m[i]);
            prog.add_row({{v0 + s, 1.0}, {q0 + i, -1.0}}, lp::Relation::GreaterEqual, 0.0);
            prog.add_row({{v0 + s, 1.0}, {q0 + i, -1.0}, {i0 + i, m}}, lp::Relation::LessEqual, m);
        }
    R.constrain(prog, r0);
    for (int s = 0; s < n; ++s) {
        std::vector<int> group;
        for (int a = 0; a < k; ++a) {
            mip.binaries.push_back(i0 + mdp.index(s, a));
            group.push_back(i0 + mdp.index(s, a));
        }
        mip.groups.push_back(std::move(group));
    }

    // Any reward proposed by a node relaxation is feasible; completing it
    // with its own optimal policy gives an integral point.
    lp::MipOptions mopts;
    mopts.node_limit = opts.node_limit;
    mopts.heuristic = [&](const std::vector<double>& x) -> std::optional<lp::Incumbent> {
        RewardVector r(x.begin() + r0, x.begin() + r0 + nk);
        r = clip_to_box(std::move(r), R);
        const auto opt = solve_optimal(mdp, r);
        std::vector<double> point(prog.num_vars(), 0.0);
        for (int i = 0; i < nk; ++i) {
            point[q0 + i] = opt.q[i];
            point[r0 + i] = r[i];
        }
        for (int s = 0; s < n; ++s) {
            point[v0 + s] = opt.v[s];
            point[i0 + mdp.index(s, opt.policy.action(s))] = 1.0;
        }
        return lp::Incumbent{opt.value - dot(r, f), std::move(point)};
    };
    const auto sol = lp::solve_binary_mip(mip, mopts);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("max regret program has no feasible point");

    MaxRegretResult out;
    out.witness = evaluate_witness(
        mdp, clip_to_box(RewardVector(sol.primal.begin() + r0, sol.primal.begin() + r0 + nk), R));
    out.value = out.witness.value - dot(out.witness.r, f);
    out.upper_bound = std::max(out.value, sol.complete ? sol.objective : sol.bound);
    out.exact = sol.complete;
    out.nodes = sol.nodes;
    return out;
}

struct EndpointNode {
    double bound;
    std::vector<signed char> fix; // per support coordinate: -1 free, 0 lo, 1 hi
    bool operator<(const EndpointNode& o) const { return bound < o.bound; }
};

MaxRegretResult exact_endpoint(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                               const ExactOptions& opts) {
    const int nk = mdp.pairs();
    const auto& lo = R.lower();
    const auto& hi = R.upper();
    std::vector<int> support;
    for (int i = 0; i < nk; ++i)
        if (f[i] > 0.0) support.push_back(i);
    const int m = static_cast<int>(support.size());

    // Largest occupancy any policy gives each support pair, and the chord of
    // phi(x) = max(lo (x - f), hi (x - f)) over [0, G].
    std::vector<double> slope(m), cap(m);
    for (int j = 0; j < m; ++j) {
        const int i = support[j];
        RewardVector e(nk, 0.0);
        e[i] = 1.0;
        cap[j] = std::max(solve_optimal(mdp, e).value, f[i]);
        slope[j] = (hi[i] * (cap[j] - f[i]) + lo[i] * f[i]) / cap[j];
    }

    MaxRegretResult best;
    best.value = -std::numeric_limits<double>::infinity();
    long nodes = 0;

    std::vector<std::pair<WitnessConstraint, double>> seen;
    const auto consider = [&](RewardVector r) {
        for (const auto& [w, v] : seen)
            if (w.r == r) return;
        auto w = evaluate_witness(mdp, std::move(r));
        const double v = w.value - dot(w.r, f);
        if (v > best.value) {
            best.value = v;
            best.witness = w;
        }
        seen.emplace_back(std::move(w), v);
    };

    // Bound of a node plus the adversary occupancy attaining it.
    const auto relax = [&](const std::vector<signed char>& fix, Occupancy& g) {
        RewardVector rho = hi;
        double offset = 0.0;
        for (int j = 0; j < m; ++j) {
            const int i = support[j];
            if (fix[j] < 0) {
                rho[i] = slope[j];
                offset -= lo[i] * f[i];
            } else {
                rho[i] = fix[j] ? hi[i] : lo[i];
                offset -= rho[i] * f[i];
            }
        }
        const auto opt = solve_optimal(mdp, rho);
        g = occupancy_of_policy(mdp, opt.policy);
        return offset + opt.value;
    };

    std::priority_queue<EndpointNode> open;
    const auto expand = [&](std::vector<signed char> fix) {
        ++nodes;
        Occupancy g;
        const double bound = relax(fix, g);
        // Best response to g among the node's rewards.
        RewardVector r = hi;
        int branch = -1;
        double widest = 0.0;
        for (int j = 0; j < m; ++j) {
            const int i = support[j];
            if (fix[j] >= 0) {
                r[i] = fix[j] ? hi[i] : lo[i];
                continue;
            }
            const double d = g[i] - f[i];
            r[i] = d > 0 ? hi[i] : lo[i];
            const double gap = -lo[i] * f[i] + slope[j] * g[i] - std::max(lo[i] * d, hi[i] * d);
            if (gap > widest) {
                widest = gap;
                branch = j;
            }
        }
        consider(std::move(r));
        const double tol = 1e-9 * std::max(1.0, std::abs(best.value));
        if (branch < 0 || bound <= best.value + tol) return;
        for (signed char side : {1, 0}) {
            auto child = fix;
            child[branch] = side;
            open.push({bound, std::move(child)});
        }
    };

    expand(std::vector<signed char>(m, -1));
    bool complete = true;
    double unexplored = -std::numeric_limits<double>::infinity();
    while (!open.empty()) {
        auto node = open.top();
        open.pop();
        if (node.bound <= best.value + 1e-9 * std::max(1.0, std::abs(best.value))) break;
        if (nodes >= opts.node_limit) {
            complete = false;
            unexplored = node.bound;
            break;
        }
        expand(std::move(node.fix));
    }
    std::sort(seen.begin(), seen.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
    for (auto& entry : seen)
        if (entry.first.r != best.witness.r) best.runners_up.push_back(std::move(entry));
    best.exact = complete;
    best.nodes = nodes;
    best.upper_bound = complete ? best.value : std::max(best.value, unexplored);
    return best;
}

} // namespace

namespace {
MaxRegretResult ascend(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R, int max_rounds,
                       RewardVector r);
} // namespace

MaxRegretResult max_regret_exact(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                                 const ExactOptions& opts, const BigMBounds* bounds) {
    check_sizes(mdp, f, R);
    const bool endpoint = opts.method == ExactMethod::EndpointSearch ||
                          (opts.method == ExactMethod::Auto && R.is_box());
    if (endpoint) {
        if (!R.is_box()) throw ModelError("endpoint search needs a box reward set");
        return exact_endpoint(mdp, f, R, opts);
    }
    return exact_mip(mdp, f, R, opts, bounds);
}

MaxRegretResult max_regret_relaxed(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R,
                                   const BigMBounds* bounds, lp::Basis* warm, int polish_rounds) {
    check_sizes(mdp, f, R);
    const BigMBounds bm = bounds ? *bounds : big_m(mdp, R);
    const int n = mdp.states(), k = mdp.actions(), nk = mdp.pairs();
    const int v0 = 0, r0 = n, y0 = n + nk;

    double scale = 1.0;
    for (double m : bm.m_top) scale = std::max(scale, std::abs(m));
    const double tiny = 1e-9 * scale;

    lp::LinearProgram prog(n + 2 * nk);
    for (int s = 0; s < n; ++s) prog.objective[v0 + s] = mdp.initial()[s];
    bound_values(prog, bm, v0);
    for (int i = 0; i < nk; ++i) {
        prog.objective[r0 + i] = -f[i];
        prog.upper[y0 + i] = bm.m[i] > tiny ? bm.m[i] : 0.0;
    }
    // y_sa = V_s - r_sa - gamma P_sa V
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < k; ++a) {
            const int i = mdp.index(s, a);
            std::vector<lp::Term> terms = {{y0 + i, 1.0}, {v0 + s, -1.0}, {r0 + i, 1.0}};
            for (const auto& t : mdp.successors(s, a))
                terms.push_back({v0 + t.state, mdp.gamma() * t.prob});
            add_merged_row(prog, std::move(terms), lp::Relation::Equal, 0.0);
        }
    for (int s = 0; s < n; ++s) {
        std::vector<lp::Term> terms;
        for (int a = 0; a < k; ++a) {
            const int i = mdp.index(s, a);
            terms.push_back({y0 + i, bm.m[i] > tiny ? 1.0 / bm.m[i] : 0.0});
        }
        prog.add_row(std::move(terms), lp::Relation::LessEqual, k - 1.0);
    }
    R.constrain(prog, r0);

    lp::SimplexOptions sopts;
    lp::Basis crash;
    if (warm && !warm->empty()) {
        sopts.warm_start = warm;
    } else {
        // y_sa is a natural basic variable for its Bellman row, so the start
        // is triangular and no equality logical has to be pivoted out.
        crash.status.assign(prog.num_vars() + prog.num_rows(), lp::VarStatus::AtLower);
        for (int s = 0; s < n; ++s) crash.status[v0 + s] = lp::VarStatus::AtUpper;
        for (int i = 0; i < nk; ++i) crash.status[y0 + i] = lp::VarStatus::Basic;
        for (int row = nk; row < prog.num_rows(); ++row)
            crash.status[prog.num_vars() + row] = lp::VarStatus::Basic;
        sopts.warm_start = &crash;
    }
    const auto sol = lp::solve_lp(prog, sopts);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("max regret relaxation did not solve to optimality");
    if (warm) *warm = sol.basis;

    // Where f is zero the objective ignores r, so the vertex found is an
    // arbitrary point of the optimal face. Raising such r_sa until y_sa hits
    // zero stays on that face (y only shrinks, the group rows only loosen)
    // and picks the member most favorable to the adversary.
    RewardVector r(sol.primal.begin() + r0, sol.primal.begin() + r0 + nk);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < k; ++a) {
            const int i = mdp.index(s, a);
            if (f[i] != 0.0 || R.constrained(i)) continue;
            double cont = sol.primal[v0 + s];
            for (const auto& t : mdp.successors(s, a))
                cont -= mdp.gamma() * t.prob * sol.primal[v0 + t.state];
            r[i] = std::max(r[i], std::min(R.upper()[i], cont));
        }

    MaxRegretResult out;
    out.witness = evaluate_witness(mdp, clip_to_box(std::move(r), R));
    out.value = out.witness.value - dot(out.witness.r, f);
    // Optional: best-response rounds seeded at the relaxed reward.
    if (polish_rounds <= 0) {
        out.upper_bound = std::max(out.value, sol.objective);
        return out;
    }
    auto polished = ascend(mdp, f, R, polish_rounds, out.witness.r);
    if (polished.value > out.value) {
        out.runners_up.emplace_back(std::move(out.witness), out.value);
        out.witness = std::move(polished.witness);
        out.value = polished.value;
        out.rounds = polished.rounds;
    }
    out.upper_bound = std::max(out.value, sol.objective);
    return out;
}

double relaxation_bound_full(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R) {
    check_sizes(mdp, f, R);
    const BigMBounds bm = big_m(mdp, R);
    const int n = mdp.states(), k = mdp.actions(), nk = mdp.pairs();
    const int q0 = 0, v0 = nk, i0 = nk + n, r0 = 2 * nk + n;
    lp::LinearProgram prog(3 * nk + n);
    for (int i = 0; i < nk; ++i) prog.lower[q0 + i] = -lp::kInf;
    for (int s = 0; s < n; ++s) prog.objective[v0 + s] = mdp.initial()[s];
    bound_values(prog, bm, v0);
    for (int i = 0; i < nk; ++i) {
        prog.upper[i0 + i] = 1.0;
        prog.objective[r0 + i] = -f[i];
    }
    add_bellman_rows(prog, mdp, q0, v0, r0);
    for (int s = 0; s < n; ++s) {
        std::vector<lp::Term> group;
        for (int a = 0; a < k; ++a) {
            const int i = mdp.index(s, a);
            const double m = std::max(0.0, bm.m[i]);
            prog.add_row({{v0 + s, 1.0}, {q0 + i, -1.0}}, lp::Relation::GreaterEqual, 0.0);
            prog.add_row({{v0 + s, 1.0}, {q0 + i, -1.0}, {i0 + i, m}}, lp::Relation::LessEqual, m);
            group.push_back({i0 + i, 1.0});
        }
        prog.add_row(std::move(group), lp::Relation::Equal, 1.0);
    }
    R.constrain(prog, r0);
    const auto sol = lp::solve_lp(prog);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("max regret relaxation did not solve to optimality");
    return sol.objective;
}

namespace {

MaxRegretResult ascend(const Mdp& mdp, const Occupancy& f, const RewardPolytope& R, int max_rounds,
                       RewardVector r) {
    const int nk = mdp.pairs();
    MaxRegretResult best;
    bool have = false;
    for (int round = 1; round <= std::max(1, max_rounds); ++round) {
        const auto opt = solve_optimal(mdp, r);
        const auto g = occupancy_of_policy(mdp, opt.policy);
        std::vector<double> w(nk);
        for (int i = 0; i < nk; ++i) w[i] = g[i] - f[i];
        RewardVector next_r;
        if (R.is_box()) {
            // Zero weights go high: raising r there never helps f.
            next_r.resize(nk);
            for (int i = 0; i < nk; ++i) next_r[i] = w[i] >= 0.0 ? R.upper()[i] : R.lower()[i];
        } else {
            next_r = clip_to_box(maximize_linear(R, w).r, R);
        }
        auto next = evaluate_witness(mdp, std::move(next_r));
        const double value = next.value - dot(next.r, f);
        const bool improved = !have || value > best.value + 1e-9;
        if (!have || value > best.value) {
            best.witness = std::move(next);
            best.value = value;
            have = true;
        }
        best.rounds = round;
        if (!improved) break;
        r = best.witness.r;
    }
    return best;
}

} // namespace

MaxRegretResult max_regret_alternating(const Mdp& mdp, const Occupancy& f,
                                       const RewardPolytope& R, int max_rounds,
                                       const RewardVector* start) {
    check_sizes(mdp, f, R);
    const int nk = mdp.pairs();
    if (start) {
        check_reward(mdp, *start);
        return ascend(mdp, f, R, max_rounds, *start);
    }
    // Two seeds: the box midpoint, and the corner that is worst for f (low
    // where f visits, high elsewhere). Seeds may violate general constraints;
    // they only pick the first adversary policy.
    RewardVector mid(nk), corner(nk);
    for (int i = 0; i < nk; ++i) {
        mid[i] = 0.5 * (R.lower()[i] + R.upper()[i]);
        corner[i] = f[i] > 0.0 ? R.lower()[i] : R.upper()[i];
    }
    auto a = ascend(mdp, f, R, max_rounds, std::move(mid));
    auto b = ascend(mdp, f, R, max_rounds, std::move(corner));
    const int rounds = a.rounds + b.rounds;
    auto& best = b.value > a.value ? b : a;
    best.rounds = rounds;
    return best;
}

} // namespace regretel
