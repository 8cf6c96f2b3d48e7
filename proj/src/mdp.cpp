#include "regretel/mdp.hpp"

#include "regretel/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>

namespace regretel {

Mdp::Mdp(int states, int actions, std::vector<std::vector<Transition>> transitions, double gamma,
         std::vector<double> initial)
    : n_(states), k_(actions), transitions_(std::move(transitions)), gamma_(gamma),
      alpha_(std::move(initial)) {
    if (n_ < 1 || k_ < 1) throw ModelError("an MDP needs at least one state and one action");
    if (!(gamma_ >= 0.0 && gamma_ < 1.0))
        throw ModelError("discount must lie in [0,1), got " + std::to_string(gamma_));
    if (static_cast<int>(transitions_.size()) != n_ * k_)
        throw ModelError("expected " + std::to_string(n_ * k_) + " transition lists, got " +
                         std::to_string(transitions_.size()));
    for (int s = 0; s < n_; ++s)
        for (int a = 0; a < k_; ++a) {
            double total = 0.0;
            for (const auto& t : transitions_[index(s, a)]) {
                if (t.state < 0 || t.state >= n_)
                    throw ModelError("transition (" + std::to_string(s) + "," + std::to_string(a) +
                                     ") targets unknown state " + std::to_string(t.state));
                if (!(t.prob >= 0.0))
                    throw ModelError("negative transition probability at (" + std::to_string(s) +
                                     "," + std::to_string(a) + ")");
                total += t.prob;
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw ModelError("transition probabilities at (" + std::to_string(s) + "," +
                                 std::to_string(a) + ") sum to " + std::to_string(total));
        }
    if (static_cast<int>(alpha_.size()) != n_)
        throw ModelError("initial distribution must have one entry per state");
    double total = 0.0;
    for (double p : alpha_) {
        if (!(p >= 0.0)) throw ModelError("initial distribution has a negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ModelError("initial distribution sums to " + std::to_string(total));
}

Policy Policy::deterministic(int states, int actions, const std::vector<int>& choice) {
    Policy pi{states, actions, std::vector<double>(static_cast<size_t>(states) * actions, 0.0)};
    for (int s = 0; s < states; ++s) pi.prob[s * actions + choice[s]] = 1.0;
    return pi;
}

bool Policy::is_deterministic() const {
    for (double p : prob)
        if (p != 0.0 && p != 1.0) return false;
    return true;
}

int Policy::action(int s) const {
    int best = 0;
    for (int a = 1; a < actions; ++a)
        if (prob[s * actions + a] > prob[s * actions + best]) best = a;
    return best;
}

void Policy::validate() const {
    if (static_cast<int>(prob.size()) != states * actions)
        throw ModelError("policy has the wrong number of entries");
    for (int s = 0; s < states; ++s) {
        double total = 0.0;
        for (int a = 0; a < actions; ++a) {
            const double p = prob[s * actions + a];
            if (!(p >= -1e-12)) throw ModelError("policy has a negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw ModelError("policy row " + std::to_string(s) + " sums to " + std::to_string(total));
    }
}

void check_reward(const Mdp& mdp, const RewardVector& r) {
    if (static_cast<int>(r.size()) != mdp.pairs())
        throw ModelError("reward vector has " + std::to_string(r.size()) + " entries, expected " +
                         std::to_string(mdp.pairs()));
    for (double x : r)
        if (!std::isfinite(x)) throw ModelError("reward vector has a non-finite entry");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

namespace {

void check_policy(const Mdp& mdp, const Policy& pi) {
    if (pi.states != mdp.states() || pi.actions != mdp.actions())
        throw ModelError("policy shape does not match the MDP");
    pi.validate();
}

/// Solves (I - gamma P_pi) x = b, or its transpose.
std::vector<double> solve_policy_system(const Mdp& mdp, const Policy& pi,
                                        const std::vector<double>& b, bool transpose) {
    const int n = mdp.states();
    const double g = mdp.gamma();
    std::vector<Eigen::Triplet<double>> trip;
    for (int s = 0; s < n; ++s) {
        trip.emplace_back(s, s, 1.0);
        for (int a = 0; a < mdp.actions(); ++a) {
            const double p = pi(s, a);
            if (p == 0.0) continue;
            for (const auto& t : mdp.successors(s, a)) {
                const double v = -g * p * t.prob;
                if (transpose)
                    trip.emplace_back(t.state, s, v);
                else
                    trip.emplace_back(s, t.state, v);
            }
        }
    }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success) throw SolverError("policy evaluation system is singular");
    Eigen::Map<const Eigen::VectorXd> rhs(b.data(), n);
    Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) throw SolverError("policy evaluation produced non-finite values");
    return {x.data(), x.data() + n};
}

std::vector<double> q_values(const Mdp& mdp, const RewardVector& r, const std::vector<double>& v) {
    std::vector<double> q(mdp.pairs());
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) {
            double acc = 0.0;
            for (const auto& t : mdp.successors(s, a)) acc += t.prob * v[t.state];
            q[mdp.index(s, a)] = r[mdp.index(s, a)] + mdp.gamma() * acc;
        }
    return q;
}

} // namespace

PolicyValue evaluate_policy(const Mdp& mdp, const RewardVector& r, const Policy& pi) {
    check_reward(mdp, r);
    check_policy(mdp, pi);
    std::vector<double> rp(mdp.states(), 0.0);
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) rp[s] += pi(s, a) * r[mdp.index(s, a)];
    PolicyValue out;
    out.v = solve_policy_system(mdp, pi, rp, false);
    out.q = q_values(mdp, r, out.v);
    return out;
}

OptimalSolution solve_optimal(const Mdp& mdp, const RewardVector& r) {
    check_reward(mdp, r);
    const int n = mdp.states(), k = mdp.actions();
    const double g = mdp.gamma();

    // A loose value-iteration warm-up picks a near-optimal policy; policy
    // iteration with exact evaluation then finishes the job.
    std::vector<double> v(n, 0.0);
    if (g > 0.0) {
        double scale = 1.0;
        for (double x : r) scale = std::max(scale, std::abs(x));
        const double threshold = 1e-6 * scale;
        std::vector<double> next(n);
        for (int it = 0; it < 300; ++it) {
            double residual = 0.0;
            for (int s = 0; s < n; ++s) {
                double best = -lp::kInf;
                for (int a = 0; a < k; ++a) {
                    double acc = 0.0;
                    for (const auto& t : mdp.successors(s, a)) acc += t.prob * v[t.state];
                    best = std::max(best, r[mdp.index(s, a)] + g * acc);
                }
                next[s] = best;
                residual = std::max(residual, std::abs(best - v[s]));
            }
            v.swap(next);
            if (residual <= threshold) break;
        }
    }

    std::vector<double> q = q_values(mdp, r, v);
    std::vector<int> choice(n, 0);
    auto greedy = [&](const std::vector<double>& qv) {
        bool changed = false;
        for (int s = 0; s < n; ++s) {
            int best = choice[s];
            for (int a = 0; a < k; ++a)
                if (qv[mdp.index(s, a)] > qv[mdp.index(s, best)] + 1e-12 * (1.0 + std::abs(qv[mdp.index(s, best)])))
                    best = a;
            changed = changed || best != choice[s];
            choice[s] = best;
        }
        return changed;
    };
    // Initial greedy pick: plain argmax, lowest index on ties.
    for (int s = 0; s < n; ++s) {
        int best = 0;
        for (int a = 1; a < k; ++a)
            if (q[mdp.index(s, a)] > q[mdp.index(s, best)]) best = a;
        choice[s] = best;
    }

    OptimalSolution out;
    for (int round = 0; round < 1000; ++round) {
        out.policy = Policy::deterministic(n, k, choice);
        auto pv = evaluate_policy(mdp, r, out.policy);
        out.v = std::move(pv.v);
        out.q = std::move(pv.q);
        if (!greedy(out.q)) break;
    }
    out.policy = Policy::deterministic(n, k, choice);
    out.value = dot(mdp.initial(), out.v);
    return out;
}

Occupancy occupancy_of_policy(const Mdp& mdp, const Policy& pi) {
    check_policy(mdp, pi);
    const auto d = solve_policy_system(mdp, pi, mdp.initial(), true);
    Occupancy f(mdp.pairs(), 0.0);
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) f[mdp.index(s, a)] = pi(s, a) * d[s];
    return f;
}

Policy policy_of_occupancy(const Mdp& mdp, const Occupancy& f) {
    if (static_cast<int>(f.size()) != mdp.pairs())
        throw ModelError("occupancy vector has the wrong length");
    for (double x : f)
        if (!(x >= -1e-9)) throw ModelError("occupancy has a negative entry");
    const int n = mdp.states(), k = mdp.actions();
    Policy pi{n, k, std::vector<double>(mdp.pairs(), 0.0)};
    for (int s = 0; s < n; ++s) {
        double mass = 0.0;
        for (int a = 0; a < k; ++a) mass += std::max(0.0, f[mdp.index(s, a)]);
        if (mass < 1e-12) {
            pi.prob[mdp.index(s, 0)] = 1.0;
            continue;
        }
        for (int a = 0; a < k; ++a) pi.prob[mdp.index(s, a)] = std::max(0.0, f[mdp.index(s, a)]) / mass;
    }
    return pi;
}

std::vector<double> flow_residual(const Mdp& mdp, const Occupancy& f) {
    std::vector<double> res(mdp.states(), 0.0);
    for (int t = 0; t < mdp.states(); ++t) res[t] = -mdp.initial()[t];
    for (int s = 0; s < mdp.states(); ++s)
        for (int a = 0; a < mdp.actions(); ++a) {
            const double x = f[mdp.index(s, a)];
            res[s] += x;
            for (const auto& t : mdp.successors(s, a)) res[t.state] -= mdp.gamma() * t.prob * x;
        }
    return res;
}

int add_flow_constraints(lp::LinearProgram& lp, const Mdp& mdp, int first_var) {
    const int n = mdp.states();
    std::vector<std::vector<lp::Term>> rows(n);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < mdp.actions(); ++a) {
            const int var = first_var + mdp.index(s, a);
            double self = 1.0;
            for (const auto& t : mdp.successors(s, a)) {
                if (t.state == s)
                    self -= mdp.gamma() * t.prob;
                else if (t.prob != 0.0)
                    rows[t.state].push_back({var, -mdp.gamma() * t.prob});
            }
            rows[s].push_back({var, self});
        }
    const int first = lp.num_rows();
    for (int t = 0; t < n; ++t)
        lp.add_row(std::move(rows[t]), lp::Relation::Equal, mdp.initial()[t]);
    return first;
}

DualLpSolution solve_dual_lp(const Mdp& mdp, const RewardVector& r) {
    check_reward(mdp, r);
    lp::LinearProgram prog(mdp.pairs());
    prog.objective = r;
    add_flow_constraints(prog, mdp, 0);
    const auto sol = lp::solve_lp(prog);
    if (sol.status != lp::Status::Optimal)
        throw SolverError("occupancy LP did not reach an optimum");
    DualLpSolution out;
    out.f = sol.primal;
    for (auto& x : out.f) x = std::max(0.0, x);
    out.value = sol.objective;
    out.basis = sol.basis;
    return out;
}

} // namespace regretel
