#include "regretel/errors.hpp"
#include "regretel/lp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace regretel::lp {

void BinaryMip::validate() const {
    base.validate();
    const int n = base.num_vars();
    std::vector<char> is_binary(n, 0), grouped(n, 0);
    for (int j : binaries) {
        if (j < 0 || j >= n)
            throw ModelError("binary index " + std::to_string(j) + " out of range");
        is_binary[j] = 1;
    }
    for (const auto& g : groups) {
        if (g.empty()) throw ModelError("empty branching group");
        for (int j : g) {
            if (j < 0 || j >= n || !is_binary[j])
                throw ModelError("group member " + std::to_string(j) + " is not a binary variable");
            if (grouped[j]) throw ModelError("branching groups overlap at " + std::to_string(j));
            grouped[j] = 1;
        }
    }
}

namespace {

bool satisfies(const LinearProgram& lp, const std::vector<double>& x, double tol) {
    if (static_cast<int>(x.size()) != lp.num_vars()) return false;
    for (int j = 0; j < lp.num_vars(); ++j)
        if (x[j] < lp.lower[j] - tol || x[j] > lp.upper[j] + tol) return false;
    for (const auto& row : lp.rows) {
        double act = 0.0;
        for (const auto& t : row.terms) act += t.coeff * x[t.index];
        const double scale = 1.0 + std::abs(row.rhs);
        switch (row.relation) {
        case Relation::LessEqual:
            if (act > row.rhs + tol * scale) return false;
            break;
        case Relation::GreaterEqual:
            if (act < row.rhs - tol * scale) return false;
            break;
        case Relation::Equal:
            if (std::abs(act - row.rhs) > tol * scale) return false;
            break;
        }
    }
    return true;
}

struct Node {
    std::vector<std::pair<int, double>> fixings;
    LpSolution lp;
};

class BranchAndBound {
public:
    BranchAndBound(const BinaryMip& mip, const MipOptions& opts) : mip_(mip), opts_(opts) {
        relax_ = mip.base;
        for (int j : mip.binaries) {
            relax_.lower[j] = std::max(relax_.lower[j], 0.0);
            relax_.upper[j] = std::min(relax_.upper[j], 1.0);
        }
        for (const auto& g : mip.groups) {
            std::vector<Term> terms;
            for (int j : g) terms.push_back({j, 1.0});
            relax_.add_row(std::move(terms), Relation::Equal, 1.0);
        }
        default_lower_ = relax_.lower;
        default_upper_ = relax_.upper;
        group_of_.assign(relax_.num_vars(), -1);
        for (int g = 0; g < static_cast<int>(mip.groups.size()); ++g)
            for (int j : mip.groups[g]) group_of_[j] = g;
    }

    MipSolution run() {
        MipSolution out;
        Node root;
        root.lp = solve_node(root.fixings, nullptr);
        ++nodes_;
        if (root.lp.status == Status::Unbounded) {
            out.status = Status::Unbounded;
            out.nodes = nodes_;
            return out;
        }
        if (root.lp.status == Status::Infeasible) {
            out.status = Status::Infeasible;
            out.nodes = nodes_;
            return out;
        }

        std::vector<Node> stack;
        stack.push_back(std::move(root));
        bool complete = true;
        while (!stack.empty()) {
            Node node = std::move(stack.back());
            stack.pop_back();
            if (has_incumbent_ && node.lp.objective <= incumbent_.objective + kMipGapTolerance)
                continue;

            offer_heuristic(node.lp.primal);
            if (has_incumbent_ && node.lp.objective <= incumbent_.objective + kMipGapTolerance)
                continue;

            const auto branch = pick_branch(node.lp.primal);
            if (branch.empty()) {
                accept(node.lp.objective, node.lp.primal);
                continue;
            }
            if (nodes_ >= opts_.node_limit) {
                complete = false;
                stack.push_back(std::move(node));
                break;
            }

            std::vector<Node> children;
            for (const auto& fix : branch) {
                Node child;
                child.fixings = node.fixings;
                child.fixings.insert(child.fixings.end(), fix.begin(), fix.end());
                child.lp = solve_node(child.fixings, &node.lp.basis);
                ++nodes_;
                if (child.lp.status != Status::Optimal) continue;
                if (has_incumbent_ &&
                    child.lp.objective <= incumbent_.objective + kMipGapTolerance)
                    continue;
                children.push_back(std::move(child));
            }
            // Best bound ends up on top of the stack.
            std::sort(children.begin(), children.end(), [](const Node& a, const Node& b) {
                return a.lp.objective < b.lp.objective;
            });
            for (auto& c : children) stack.push_back(std::move(c));
        }

        out.nodes = nodes_;
        out.complete = complete;
        if (!has_incumbent_) {
            out.status = Status::Infeasible;
            return out;
        }
        out.status = Status::Optimal;
        out.objective = incumbent_.objective;
        out.primal = incumbent_.primal;
        out.bound = out.objective;
        for (const auto& n : stack) out.bound = std::max(out.bound, n.lp.objective);
        return out;
    }

private:
    LpSolution solve_node(const std::vector<std::pair<int, double>>& fixings, const Basis* warm) {
        relax_.lower = default_lower_;
        relax_.upper = default_upper_;
        for (const auto& [j, v] : fixings) relax_.lower[j] = relax_.upper[j] = v;
        SimplexOptions lpo = opts_.lp;
        lpo.warm_start = warm;
        return solve_lp(relax_, lpo);
    }

    void offer_heuristic(const std::vector<double>& x) {
        if (!opts_.heuristic) return;
        auto cand = opts_.heuristic(x);
        if (!cand) return;
        if (!satisfies(relax_with_defaults(), cand->primal, 1e-6)) return;
        for (int j : mip_.binaries)
            if (std::abs(cand->primal[j] - std::round(cand->primal[j])) > kIntegralityTolerance)
                return;
        if (!has_incumbent_ || cand->objective > incumbent_.objective)
            accept(cand->objective, cand->primal);
    }

    const LinearProgram& relax_with_defaults() {
        relax_.lower = default_lower_;
        relax_.upper = default_upper_;
        return relax_;
    }

    void accept(double objective, std::vector<double> x) {
        if (has_incumbent_ && objective <= incumbent_.objective) return;
        for (int j : mip_.binaries) x[j] = std::round(x[j]);
        incumbent_.objective = objective;
        incumbent_.primal = std::move(x);
        has_incumbent_ = true;
    }

    /// Children as lists of fixings; empty when every binary is integral.
    std::vector<std::vector<std::pair<int, double>>> pick_branch(const std::vector<double>& x) const {
        int best = -1;
        double best_frac = kIntegralityTolerance;
        for (int j : mip_.binaries) {
            const double frac = std::min(x[j], 1.0 - x[j]);
            if (frac > best_frac) {
                best_frac = frac;
                best = j;
            }
        }
        std::vector<std::vector<std::pair<int, double>>> out;
        if (best < 0) return out;
        const int g = group_of_[best];
        if (g < 0) {
            out.push_back({{best, 1.0}});
            out.push_back({{best, 0.0}});
            return out;
        }
        const auto& members = mip_.groups[g];
        for (int chosen : members) {
            if (default_upper_[chosen] < 1.0) continue;
            std::vector<std::pair<int, double>> fix;
            for (int j : members) fix.emplace_back(j, j == chosen ? 1.0 : 0.0);
            out.push_back(std::move(fix));
        }
        return out;
    }

    const BinaryMip& mip_;
    const MipOptions& opts_;
    LinearProgram relax_;
    std::vector<double> default_lower_, default_upper_;
    std::vector<int> group_of_;
    Incumbent incumbent_{0.0, {}};
    bool has_incumbent_ = false;
    long nodes_ = 0;
};

} // namespace

MipSolution solve_binary_mip(const BinaryMip& mip, const MipOptions& opts) {
    mip.validate();
    BranchAndBound bnb(mip, opts);
    return bnb.run();
}

} // namespace regretel::lp
