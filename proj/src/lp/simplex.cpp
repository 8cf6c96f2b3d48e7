#include "regretel/lp.hpp"

#include "regretel/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>

namespace regretel::lp {

LinearProgram::LinearProgram(int num_vars)
    : objective(num_vars, 0.0), lower(num_vars, 0.0), upper(num_vars, kInf) {}

int LinearProgram::add_variable(double lo, double hi, double obj) {
    objective.push_back(obj);
    lower.push_back(lo);
    upper.push_back(hi);
    return num_vars() - 1;
}

int LinearProgram::add_row(std::vector<Term> terms, Relation rel, double rhs) {
    rows.push_back(Constraint{std::move(terms), rel, rhs});
    return num_rows() - 1;
}

int LinearProgram::add_dense_row(std::span<const double> coeffs, Relation rel, double rhs) {
    if (static_cast<int>(coeffs.size()) != num_vars())
        throw ModelError("dense row has " + std::to_string(coeffs.size()) +
                         " coefficients, program has " + std::to_string(num_vars()) +
                         " variables");
    std::vector<Term> terms;
    for (int j = 0; j < num_vars(); ++j)
        if (coeffs[j] != 0.0) terms.push_back({j, coeffs[j]});
    return add_row(std::move(terms), rel, rhs);
}

void LinearProgram::validate() const {
    const int n = num_vars();
    if (static_cast<int>(lower.size()) != n || static_cast<int>(upper.size()) != n)
        throw ModelError("bound vectors must match the objective length");
    for (int j = 0; j < n; ++j) {
        if (std::isnan(objective[j]) || std::isinf(objective[j]))
            throw ModelError("objective coefficient " + std::to_string(j) + " is not finite");
        if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j])
            throw ModelError("variable " + std::to_string(j) + " has invalid bounds");
        if (lower[j] == kInf || upper[j] == -kInf)
            throw ModelError("variable " + std::to_string(j) + " has an empty domain");
    }
    for (int i = 0; i < num_rows(); ++i) {
        const auto& row = rows[i];
        if (!std::isfinite(row.rhs))
            throw ModelError("row " + std::to_string(i) + " has a non-finite right-hand side");
        for (const auto& t : row.terms) {
            if (t.index < 0 || t.index >= n)
                throw ModelError("row " + std::to_string(i) + " references variable " +
                                 std::to_string(t.index) + " of " + std::to_string(n));
            if (!std::isfinite(t.coeff))
                throw ModelError("row " + std::to_string(i) + " has a non-finite coefficient");
        }
    }
}

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Structural columns in compressed sparse column form.
struct Columns {
    std::vector<int> start;
    std::vector<int> row;
    std::vector<double> value;

    Columns(const LinearProgram& lp) {
        const int n = lp.num_vars();
        std::vector<int> count(n + 1, 0);
        for (const auto& r : lp.rows)
            for (const auto& t : r.terms) ++count[t.index + 1];
        for (int j = 0; j < n; ++j) count[j + 1] += count[j];
        start = count;
        row.resize(start[n]);
        value.resize(start[n]);
        std::vector<int> fill(start.begin(), start.end() - 1);
        for (int i = 0; i < lp.num_rows(); ++i)
            for (const auto& t : lp.rows[i].terms) {
                row[fill[t.index]] = i;
                value[fill[t.index]] = t.coeff;
                ++fill[t.index];
            }
    }
};

/// LU factors of the basis matrix plus a product-form eta file.
class BasisFactor {
public:
    bool factorize(const Columns& cols, int nstruct, int m, const std::vector<int>& head) {
        m_ = m;
        etas_.clear();
        if (m == 0) return true;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<size_t>(m) * 4);
        for (int p = 0; p < m; ++p) {
            const int j = head[p];
            if (j < nstruct) {
                for (int e = cols.start[j]; e < cols.start[j + 1]; ++e)
                    trip.emplace_back(cols.row[e], p, cols.value[e]);
            } else {
                trip.emplace_back(j - nstruct, p, -1.0);
            }
        }
        SpMat b(m, m);
        b.setFromTriplets(trip.begin(), trip.end());
        b.makeCompressed();
        lu_.analyzePattern(b);
        lu_.factorize(b);
        return lu_.info() == Eigen::Success;
    }

    void ftran(Vec& v) const {
        if (m_ == 0) return;
        v = lu_.solve(v);
        for (const auto& eta : etas_) {
            const double vr = v[eta.r] / eta.pivot;
            if (vr != 0.0)
                for (size_t e = 0; e < eta.idx.size(); ++e) v[eta.idx[e]] -= eta.val[e] * vr;
            v[eta.r] = vr;
        }
    }

    void btran(Vec& w) const {
        if (m_ == 0) return;
        for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
            double s = w[it->r];
            for (size_t e = 0; e < it->idx.size(); ++e) s -= it->val[e] * w[it->idx[e]];
            w[it->r] = s / it->pivot;
        }
        w = lu_.transpose().solve(w);
    }

    void update(int r, const Vec& alpha) {
        Eta eta;
        eta.r = r;
        eta.pivot = alpha[r];
        for (int i = 0; i < alpha.size(); ++i)
            if (i != r && alpha[i] != 0.0) {
                eta.idx.push_back(i);
                eta.val.push_back(alpha[i]);
            }
        etas_.push_back(std::move(eta));
    }

    int updates() const { return static_cast<int>(etas_.size()); }

private:
    struct Eta {
        int r = 0;
        double pivot = 1.0;
        std::vector<int> idx;
        std::vector<double> val;
    };
    mutable Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
    std::vector<Eta> etas_;
    int m_ = 0;
};

constexpr int kRefactorPeriod = 64;
constexpr double kDualTolerance = 1e-7;

class Simplex {
public:
    Simplex(const LinearProgram& lp, const SimplexOptions& opts)
        : lp_(lp), opts_(opts), n_(lp.num_vars()), m_(lp.num_rows()), total_(n_ + m_),
          cols_(lp) {
        lb_.resize(total_);
        ub_.resize(total_);
        for (int j = 0; j < n_; ++j) {
            lb_[j] = lp.lower[j];
            ub_[j] = lp.upper[j];
        }
        for (int i = 0; i < m_; ++i) {
            const auto& row = lp.rows[i];
            double lo = -kInf, hi = kInf;
            switch (row.relation) {
            case Relation::LessEqual: hi = row.rhs; break;
            case Relation::GreaterEqual: lo = row.rhs; break;
            case Relation::Equal: lo = hi = row.rhs; break;
            }
            lb_[n_ + i] = lo;
            ub_[n_ + i] = hi;
        }
    }

    LpSolution run() {
        if (opts_.warm_start && install_basis(*opts_.warm_start))
            dual_phase();
        else
            install_slack_basis();

        bland_ = opts_.bland_only;
        int degenerate_streak = 0;
        bool verified = false;
        Vec y(m_), alpha(m_), rhs(m_);

        for (;;) {
            if (iterations_ >= opts_.iteration_limit)
                throw SolverError("simplex iteration limit (" +
                                  std::to_string(opts_.iteration_limit) + ") reached");
            if (factor_.updates() >= kRefactorPeriod) refresh();

            const bool phase1 = compute_costs();
            // y = B^-T c_B
            for (int p = 0; p < m_; ++p) y[p] = cost_[head_[p]];
            factor_.btran(y);

            int entering = -1;
            int dir = 0;
            double best = 0.0;
            for (int j = 0; j < total_; ++j) {
                const VarStatus st = status_[j];
                if (st == VarStatus::Basic || lb_[j] == ub_[j]) continue;
                const double d = reduced_cost(j, y);
                int cand = 0;
                if (d > kPivotTolerance && (st == VarStatus::AtLower || st == VarStatus::Free))
                    cand = 1;
                else if (d < -kPivotTolerance &&
                         (st == VarStatus::AtUpper || st == VarStatus::Free))
                    cand = -1;
                if (cand == 0) continue;
                if (bland_) {
                    entering = j;
                    dir = cand;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    entering = j;
                    dir = cand;
                }
            }

            if (entering < 0) {
                // Confirm against a fresh factorization before concluding.
                if (!verified && factor_.updates() > 0) {
                    refresh();
                    verified = true;
                    continue;
                }
                if (phase1) return finish(Status::Infeasible);
                return finish_optimal(y);
            }
            verified = false;

            load_column(entering, alpha);
            factor_.ftran(alpha);

            const auto step = ratio_test(alpha, dir, phase1);
            const double span = ub_[entering] - lb_[entering];
            ++iterations_;

            if (step.row < 0 && !std::isfinite(span)) {
                if (phase1)
                    throw SolverError("unbounded ray while minimizing infeasibility");
                return finish(Status::Unbounded);
            }

            if (step.row < 0 || span <= step.theta) {
                // Entering variable runs to its opposite bound.
                const double theta = span;
                move(alpha, dir, theta);
                x_[entering] = dir > 0 ? ub_[entering] : lb_[entering];
                status_[entering] = dir > 0 ? VarStatus::AtUpper : VarStatus::AtLower;
                degenerate_streak = 0;
                continue;
            }

            const double theta = step.theta;
            move(alpha, dir, theta);
            x_[entering] += dir * theta;
            const int leaving = head_[step.row];
            x_[leaving] = step.to_upper ? ub_[leaving] : lb_[leaving];
            status_[leaving] = step.to_upper ? VarStatus::AtUpper : VarStatus::AtLower;
            pos_[leaving] = -1;
            head_[step.row] = entering;
            pos_[entering] = step.row;
            status_[entering] = VarStatus::Basic;
            factor_.update(step.row, alpha);

            if (theta <= 1e-12) {
                if (++degenerate_streak >= opts_.degenerate_streak_for_bland) bland_ = true;
            } else {
                degenerate_streak = 0;
                bland_ = opts_.bland_only;
            }
        }
    }

private:
    /// Dual simplex passes from a dual feasible warm basis, the usual state
    /// after rows were appended to a solved program. Stops when the basis is
    /// primal feasible or the dual ratio test fails; the primal loop then
    /// confirms optimality or takes over.
    void dual_phase() {
        if (m_ == 0) return;
        cost_.assign(total_, 0.0);
        for (int j = 0; j < n_; ++j) cost_[j] = lp_.objective[j];
        Vec y(m_), rho(m_), alpha(m_);
        std::vector<double> d(total_, 0.0), row(total_, 0.0);
        const int cap = std::max(50, 4 * m_);
        for (int it = 0; it < cap; ++it) {
            if (iterations_ >= opts_.iteration_limit) return;
            if (factor_.updates() >= kRefactorPeriod) refresh();
            for (int p = 0; p < m_; ++p) y[p] = cost_[head_[p]];
            factor_.btran(y);
            for (int j = 0; j < total_; ++j) {
                if (status_[j] == VarStatus::Basic || lb_[j] == ub_[j]) continue;
                d[j] = reduced_cost(j, y);
                const VarStatus st = status_[j];
                if ((d[j] > kDualTolerance && st != VarStatus::AtUpper) ||
                    (d[j] < -kDualTolerance && st != VarStatus::AtLower))
                    return;
            }

            int p = -1;
            double worst = kPrimalTolerance;
            for (int q = 0; q < m_; ++q) {
                const int j = head_[q];
                const double v = std::max(lb_[j] - x_[j], x_[j] - ub_[j]);
                if (v > worst) {
                    worst = v;
                    p = q;
                }
            }
            if (p < 0) return;
            const int r = head_[p];
            const bool below = x_[r] < lb_[r];

            rho.setZero();
            rho[p] = 1.0;
            factor_.btran(rho);
            // Entering candidates move x_r toward its violated bound while
            // keeping every reduced cost on the right side.
            int q = -1;
            double ratio = kInf, pivot = 0.0;
            for (int j = 0; j < total_; ++j) {
                const VarStatus st = status_[j];
                if (st == VarStatus::Basic || lb_[j] == ub_[j]) continue;
                double a;
                if (j >= n_) {
                    a = -rho[j - n_];
                } else {
                    a = 0.0;
                    for (int e = cols_.start[j]; e < cols_.start[j + 1]; ++e)
                        a += rho[cols_.row[e]] * cols_.value[e];
                }
                row[j] = a;
                if (std::abs(a) <= kPivotTolerance) continue;
                const double s = below ? -a : a; // > 0 when raising x_j helps
                const bool ok = st == VarStatus::Free || (st == VarStatus::AtLower && s > 0) ||
                                (st == VarStatus::AtUpper && s < 0);
                if (!ok) continue;
                const double t = std::abs(d[j]) / std::abs(a);
                if (t < ratio - 1e-12 || (t <= ratio + 1e-12 && std::abs(a) > pivot)) {
                    ratio = t;
                    pivot = std::abs(a);
                    q = j;
                }
            }
            if (q < 0) return;

            load_column(q, alpha);
            factor_.ftran(alpha);
            if (std::abs(alpha[p]) <= kPivotTolerance) {
                refresh();
                return;
            }
            const double target = below ? lb_[r] : ub_[r];
            const double step = (x_[r] - target) / alpha[p];
            move(alpha, 1, step);
            x_[q] += step;
            x_[r] = target;
            status_[r] = below ? VarStatus::AtLower : VarStatus::AtUpper;
            pos_[r] = -1;
            head_[p] = q;
            pos_[q] = p;
            status_[q] = VarStatus::Basic;
            factor_.update(p, alpha);
            ++iterations_;
        }
    }

    struct Step {
        int row = -1;
        double theta = kInf;
        bool to_upper = false;
    };

    double reduced_cost(int j, const Vec& y) const {
        if (j >= n_) return cost_[j] + y[j - n_];
        double d = cost_[j];
        for (int e = cols_.start[j]; e < cols_.start[j + 1]; ++e) d -= y[cols_.row[e]] * cols_.value[e];
        return d;
    }

    void load_column(int j, Vec& out) const {
        out.setZero();
        if (j >= n_) {
            out[j - n_] = -1.0;
            return;
        }
        for (int e = cols_.start[j]; e < cols_.start[j + 1]; ++e) out[cols_.row[e]] = cols_.value[e];
    }

    /// Sets phase costs; returns true while some basic variable is infeasible.
    bool compute_costs() {
        cost_.assign(total_, 0.0);
        bool infeasible = false;
        for (int p = 0; p < m_; ++p) {
            const int j = head_[p];
            if (x_[j] < lb_[j] - kPrimalTolerance) {
                cost_[j] = 1.0;
                infeasible = true;
            } else if (x_[j] > ub_[j] + kPrimalTolerance) {
                cost_[j] = -1.0;
                infeasible = true;
            }
        }
        if (!infeasible)
            for (int j = 0; j < n_; ++j) cost_[j] = lp_.objective[j];
        return infeasible;
    }

    Step ratio_test(const Vec& alpha, int dir, bool phase1) const {
        // Limit on the entering step imposed by basic position p, evaluated
        // with bounds relaxed by `tol`.
        auto limit = [&](int p, double tol, bool& to_upper) -> double {
            const double a = alpha[p];
            if (std::abs(a) <= kPivotTolerance) return kInf;
            const int j = head_[p];
            const double rate = -dir * a;
            const double v = x_[j];
            if (rate > 0) {
                if (phase1 && v < lb_[j] - kPrimalTolerance) {
                    to_upper = false;
                    return (lb_[j] - v) / rate;
                }
                if (phase1 && v > ub_[j] + kPrimalTolerance) return kInf;
                if (ub_[j] == kInf) return kInf;
                to_upper = true;
                return (ub_[j] + tol - v) / rate;
            }
            if (phase1 && v > ub_[j] + kPrimalTolerance) {
                to_upper = true;
                return (ub_[j] - v) / rate;
            }
            if (phase1 && v < lb_[j] - kPrimalTolerance) return kInf;
            if (lb_[j] == -kInf) return kInf;
            to_upper = false;
            return (lb_[j] - tol - v) / rate;
        };

        Step step;
        if (bland_) {
            // Textbook minimum ratio, ties to the lowest variable index.
            for (int p = 0; p < m_; ++p) {
                bool up = false;
                const double t = limit(p, 0.0, up);
                if (t == kInf) continue;
                const double tt = std::max(t, 0.0);
                if (step.row < 0 || tt < step.theta - 1e-15 ||
                    (tt <= step.theta + 1e-15 && head_[p] < head_[step.row])) {
                    step.row = p;
                    step.theta = tt;
                    step.to_upper = up;
                }
            }
            return step;
        }

        // Harris two-pass: largest pivot among ratios within the relaxed bound.
        double relaxed = kInf;
        for (int p = 0; p < m_; ++p) {
            bool up = false;
            relaxed = std::min(relaxed, limit(p, kPrimalTolerance, up));
        }
        if (relaxed == kInf) return step;
        double best_pivot = 0.0;
        for (int p = 0; p < m_; ++p) {
            bool up = false;
            const double t = limit(p, 0.0, up);
            if (t == kInf || t > relaxed) continue;
            if (std::abs(alpha[p]) > best_pivot) {
                best_pivot = std::abs(alpha[p]);
                step.row = p;
                step.theta = std::max(t, 0.0);
                step.to_upper = up;
            }
        }
        return step;
    }

    void move(const Vec& alpha, int dir, double theta) {
        if (theta == 0.0) return;
        for (int p = 0; p < m_; ++p) x_[head_[p]] -= dir * theta * alpha[p];
    }

    void install_slack_basis() {
        status_.assign(total_, VarStatus::AtLower);
        head_.resize(m_);
        pos_.assign(total_, -1);
        for (int j = 0; j < n_; ++j) status_[j] = default_status(j);
        for (int i = 0; i < m_; ++i) {
            status_[n_ + i] = VarStatus::Basic;
            head_[i] = n_ + i;
            pos_[n_ + i] = i;
        }
        if (!factor_.factorize(cols_, n_, m_, head_))
            throw SolverError("failed to factorize the logical basis");
        reset_values();
    }

    bool install_basis(const Basis& b) {
        if (static_cast<int>(b.status.size()) != total_) return false;
        int basic = 0;
        for (auto st : b.status) basic += st == VarStatus::Basic;
        if (basic != m_) return false;
        status_ = b.status;
        head_.clear();
        pos_.assign(total_, -1);
        for (int j = 0; j < total_; ++j) {
            if (status_[j] == VarStatus::Basic) {
                pos_[j] = static_cast<int>(head_.size());
                head_.push_back(j);
                continue;
            }
            // Bounds may have moved since the basis was recorded.
            if ((status_[j] == VarStatus::AtLower && lb_[j] == -kInf) ||
                (status_[j] == VarStatus::AtUpper && ub_[j] == kInf) ||
                (status_[j] == VarStatus::Free && (lb_[j] > -kInf || ub_[j] < kInf)))
                status_[j] = default_status(j);
        }
        if (!factor_.factorize(cols_, n_, m_, head_)) return false;
        reset_values();
        return true;
    }

    VarStatus default_status(int j) const {
        if (lb_[j] > -kInf) return VarStatus::AtLower;
        if (ub_[j] < kInf) return VarStatus::AtUpper;
        return VarStatus::Free;
    }

    /// Places nonbasic variables on their bounds and solves for the basics.
    void reset_values() {
        x_.assign(total_, 0.0);
        for (int j = 0; j < total_; ++j) {
            switch (status_[j]) {
            case VarStatus::AtLower: x_[j] = lb_[j]; break;
            case VarStatus::AtUpper: x_[j] = ub_[j]; break;
            default: break;
            }
        }
        recompute_basics();
    }

    void recompute_basics() {
        Vec rhs = Vec::Zero(m_);
        for (int j = 0; j < total_; ++j) {
            if (status_[j] == VarStatus::Basic || x_[j] == 0.0) continue;
            if (j >= n_) {
                rhs[j - n_] += x_[j];
            } else {
                for (int e = cols_.start[j]; e < cols_.start[j + 1]; ++e)
                    rhs[cols_.row[e]] -= cols_.value[e] * x_[j];
            }
        }
        factor_.ftran(rhs);
        for (int p = 0; p < m_; ++p) x_[head_[p]] = rhs[p];
    }

    void refresh() {
        if (!factor_.factorize(cols_, n_, m_, head_))
            throw SolverError("basis became singular during simplex iterations");
        recompute_basics();
    }

    LpSolution finish(Status status) {
        LpSolution sol;
        sol.status = status;
        sol.iterations = iterations_;
        sol.basis.status = status_;
        return sol;
    }

    LpSolution finish_optimal(const Vec& y) {
        LpSolution sol = finish(Status::Optimal);
        sol.primal.assign(x_.begin(), x_.begin() + n_);
        sol.objective = 0.0;
        for (int j = 0; j < n_; ++j) sol.objective += lp_.objective[j] * sol.primal[j];
        sol.duals.assign(y.data(), y.data() + m_);
        return sol;
    }

    const LinearProgram& lp_;
    const SimplexOptions& opts_;
    int n_, m_, total_;
    Columns cols_;
    std::vector<double> lb_, ub_, cost_, x_;
    std::vector<VarStatus> status_;
    std::vector<int> head_, pos_;
    BasisFactor factor_;
    int iterations_ = 0;
    bool bland_ = false;
};

} // namespace

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
    lp.validate();
    Simplex simplex(lp, opts);
    return simplex.run();
}

} // namespace regretel::lp
