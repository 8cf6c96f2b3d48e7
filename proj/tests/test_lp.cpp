#include "doctest.h"

#include "regretel/errors.hpp"
#include "regretel/lp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>

using namespace regretel;
using namespace regretel::lp;

namespace {

// Brute-force optimum of a bounded LP: try every vertex defined by n active
// hyperplanes (rows or bounds). Returns nullopt when no feasible vertex exists.
std::optional<double> vertex_enumeration(const LinearProgram& lp) {
    const int n = lp.num_vars();
    struct Plane {
        std::vector<double> a;
        double b;
    };
    std::vector<Plane> planes;
    for (const auto& row : lp.rows) {
        std::vector<double> a(n, 0.0);
        for (const auto& t : row.terms) a[t.index] += t.coeff;
        planes.push_back({a, row.rhs});
    }
    for (int j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        planes.push_back({e, lp.lower[j]});
        planes.push_back({e, lp.upper[j]});
    }
    auto feasible = [&](const Eigen::VectorXd& x) {
        for (int j = 0; j < n; ++j)
            if (x[j] < lp.lower[j] - 1e-9 || x[j] > lp.upper[j] + 1e-9) return false;
        for (const auto& row : lp.rows) {
            double act = 0.0;
            for (const auto& t : row.terms) act += t.coeff * x[t.index];
            if (row.relation == Relation::LessEqual && act > row.rhs + 1e-9) return false;
            if (row.relation == Relation::GreaterEqual && act < row.rhs - 1e-9) return false;
            if (row.relation == Relation::Equal && std::abs(act - row.rhs) > 1e-9) return false;
        }
        return true;
    };
    std::optional<double> best;
    const int p = static_cast<int>(planes.size());
    std::vector<int> pick(n);
    // Enumerate n-subsets of planes.
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            Eigen::MatrixXd a(n, n);
            Eigen::VectorXd b(n);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) a(r, c) = planes[pick[r]].a[c];
                b[r] = planes[pick[r]].b;
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
            if (lu.rank() < n) return;
            Eigen::VectorXd x = lu.solve(b);
            if (!feasible(x)) return;
            double obj = 0.0;
            for (int j = 0; j < n; ++j) obj += lp.objective[j] * x[j];
            if (!best || obj > *best) best = obj;
            return;
        }
        for (int i = start; i < p; ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

LinearProgram random_program(std::mt19937& rng) {
    std::uniform_int_distribution<int> nvars(1, 3), nrows(1, 6), rel(0, 5);
    std::uniform_real_distribution<double> coef(-5.0, 5.0), box(0.5, 6.0);
    const int n = nvars(rng);
    LinearProgram lp(n);
    for (int j = 0; j < n; ++j) {
        lp.objective[j] = coef(rng);
        lp.lower[j] = -box(rng);
        lp.upper[j] = box(rng);
    }
    const int m = nrows(rng);
    for (int i = 0; i < m; ++i) {
        std::vector<Term> terms;
        for (int j = 0; j < n; ++j) terms.push_back({j, std::round(coef(rng) * 4) / 4});
        const int r = rel(rng);
        const Relation relation =
            r < 3 ? Relation::LessEqual : (r < 5 ? Relation::GreaterEqual : Relation::Equal);
        lp.add_row(std::move(terms), relation, coef(rng));
    }
    return lp;
}

double dual_objective(const LinearProgram& lp, const LpSolution& sol) {
    double val = 0.0;
    std::vector<double> d = lp.objective;
    for (int i = 0; i < lp.num_rows(); ++i) {
        val += sol.duals[i] * lp.rows[i].rhs;
        for (const auto& t : lp.rows[i].terms) d[t.index] -= sol.duals[i] * t.coeff;
    }
    for (int j = 0; j < lp.num_vars(); ++j) val += d[j] > 0 ? d[j] * lp.upper[j] : d[j] * lp.lower[j];
    return val;
}

void check_primal_feasible(const LinearProgram& lp, const LpSolution& sol, double tol) {
    for (int j = 0; j < lp.num_vars(); ++j) {
        CHECK(sol.primal[j] >= lp.lower[j] - tol);
        CHECK(sol.primal[j] <= lp.upper[j] + tol);
    }
    for (const auto& row : lp.rows) {
        double act = 0.0;
        for (const auto& t : row.terms) act += t.coeff * sol.primal[t.index];
        if (row.relation != Relation::GreaterEqual) CHECK(act <= row.rhs + tol);
        if (row.relation != Relation::LessEqual) CHECK(act >= row.rhs - tol);
    }
    double obj = 0.0;
    for (int j = 0; j < lp.num_vars(); ++j) obj += lp.objective[j] * sol.primal[j];
    CHECK(std::abs(obj - sol.objective) <= 1e-8);
}

} // namespace

TEST_CASE("solve_lp: single binding bound") {
    LinearProgram lp(1);
    lp.objective[0] = 1.0;
    lp.add_dense_row(std::vector<double>{1.0}, Relation::LessEqual, 3.0);
    const auto sol = solve_lp(lp);
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.objective == doctest::Approx(3.0));
    CHECK(sol.primal[0] == doctest::Approx(3.0));
    CHECK(sol.duals[0] == doctest::Approx(1.0));
}

TEST_CASE("solve_lp: unbounded and infeasible") {
    LinearProgram unb(1);
    unb.objective[0] = 1.0;
    CHECK(solve_lp(unb).status == Status::Unbounded);

    LinearProgram inf(1);
    inf.lower[0] = -kInf;
    inf.add_dense_row(std::vector<double>{1.0}, Relation::LessEqual, 1.0);
    inf.add_dense_row(std::vector<double>{1.0}, Relation::GreaterEqual, 2.0);
    CHECK(solve_lp(inf).status == Status::Infeasible);
}

TEST_CASE("solve_lp: structural errors") {
    LinearProgram lp(2);
    CHECK_THROWS_AS(lp.add_dense_row(std::vector<double>{1.0}, Relation::LessEqual, 1.0),
                    ModelError);
    lp.add_row({{5, 1.0}}, Relation::LessEqual, 1.0);
    CHECK_THROWS_AS(solve_lp(lp), ModelError);

    LinearProgram bad(1);
    bad.lower[0] = 2.0;
    bad.upper[0] = 1.0;
    CHECK_THROWS_AS(solve_lp(bad), ModelError);
}

TEST_CASE("solve_lp: iteration cap is a diagnostic error") {
    LinearProgram lp(3);
    for (int j = 0; j < 3; ++j) lp.objective[j] = 1.0;
    lp.add_dense_row(std::vector<double>{1, 2, 3}, Relation::LessEqual, 4.0);
    lp.add_dense_row(std::vector<double>{3, 1, 1}, Relation::LessEqual, 4.0);
    SimplexOptions opts;
    opts.iteration_limit = 1;
    CHECK_THROWS_AS(solve_lp(lp, opts), SolverError);
}

TEST_CASE("solve_lp: free variables and equality rows") {
    // max x - y  s.t. x + y = 2, x - y <= 1, x,y free  -> x=1.5, y=0.5
    LinearProgram lp(2);
    lp.objective = {1.0, -1.0};
    lp.lower = {-kInf, -kInf};
    lp.add_dense_row(std::vector<double>{1, 1}, Relation::Equal, 2.0);
    lp.add_dense_row(std::vector<double>{1, -1}, Relation::LessEqual, 1.0);
    const auto sol = solve_lp(lp);
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.objective == doctest::Approx(1.0));
    CHECK(sol.primal[0] == doctest::Approx(1.5));
}

TEST_CASE("solve_lp: degenerate cycling example terminates") {
    // Beale's classic cycling instance (as maximization).
    LinearProgram lp(4);
    lp.objective = {0.75, -20.0, 0.5, -6.0};
    lp.add_dense_row(std::vector<double>{0.25, -8, -1, 9}, Relation::LessEqual, 0.0);
    lp.add_dense_row(std::vector<double>{0.5, -12, -0.5, 3}, Relation::LessEqual, 0.0);
    lp.add_dense_row(std::vector<double>{0, 0, 1, 0}, Relation::LessEqual, 1.0);
    for (bool bland : {false, true}) {
        SimplexOptions opts;
        opts.bland_only = bland;
        const auto sol = solve_lp(lp, opts);
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(1.25));
    }
}

TEST_CASE("solve_lp: property - matches vertex enumeration, duality holds") {
    std::mt19937 rng(20240611);
    int optimal = 0, infeasible = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto lp = random_program(rng);
        const auto oracle = vertex_enumeration(lp);
        for (bool bland : {false, true}) {
            SimplexOptions opts;
            opts.bland_only = bland;
            const auto sol = solve_lp(lp, opts);
            if (!oracle) {
                CHECK(sol.status == Status::Infeasible);
                continue;
            }
            REQUIRE(sol.status == Status::Optimal);
            CHECK(std::abs(sol.objective - *oracle) <= 1e-7);
            check_primal_feasible(lp, sol, 1e-8);
            CHECK(std::abs(dual_objective(lp, sol) - sol.objective) <= 1e-7);
            for (int i = 0; i < lp.num_rows(); ++i) {
                if (lp.rows[i].relation == Relation::LessEqual) CHECK(sol.duals[i] >= -1e-9);
                if (lp.rows[i].relation == Relation::GreaterEqual) CHECK(sol.duals[i] <= 1e-9);
            }
        }
        oracle ? ++optimal : ++infeasible;
    }
    // The generator must exercise both outcomes.
    CHECK(optimal > 50);
    CHECK(infeasible > 10);
}

TEST_CASE("solve_lp: warm start reproduces the optimum") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        auto lp = random_program(rng);
        const auto cold = solve_lp(lp);
        if (cold.status != Status::Optimal) continue;
        // Perturb the objective and bounds, then restart from the old basis.
        std::uniform_real_distribution<double> jitter(-1.0, 1.0);
        for (auto& c : lp.objective) c += jitter(rng);
        lp.upper[0] += 0.5;
        const auto fresh = solve_lp(lp);
        SimplexOptions opts;
        opts.warm_start = &cold.basis;
        const auto warm = solve_lp(lp, opts);
        REQUIRE(warm.status == fresh.status);
        if (fresh.status == Status::Optimal)
            CHECK(warm.objective == doctest::Approx(fresh.objective).epsilon(1e-9));
    }
}

TEST_CASE("solve_lp: warm start after appending cuts") {
    // The old optimal basis plus basic logicals for the new rows is dual
    // feasible, so the re-solve goes through the dual phase.
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coef(-3.0, 3.0), cut(0.05, 2.0);
    int checked = 0, cut_off = 0;
    for (int trial = 0; trial < 150; ++trial) {
        auto lp = trial % 2 ? random_program(rng) : [&] {
            LinearProgram big(12);
            for (int j = 0; j < 12; ++j) {
                big.objective[j] = coef(rng);
                big.lower[j] = -2.0;
                big.upper[j] = 2.0 + std::abs(coef(rng));
            }
            for (int i = 0; i < 8; ++i) {
                std::vector<Term> terms;
                for (int j = 0; j < 12; ++j) terms.push_back({j, coef(rng)});
                big.add_row(std::move(terms), Relation::LessEqual, std::abs(coef(rng)) + 1.0);
            }
            return big;
        }();
        auto sol = solve_lp(lp);
        if (sol.status != Status::Optimal) continue;
        Basis basis = sol.basis;
        for (int round = 0; round < 4; ++round) {
            // A random row violated by the current optimum.
            std::vector<Term> terms;
            double at = 0.0;
            for (int j = 0; j < lp.num_vars(); ++j) {
                const double c = coef(rng);
                terms.push_back({j, c});
                at += c * sol.primal[j];
            }
            lp.add_row(std::move(terms), Relation::LessEqual, at - cut(rng));
            basis.status.push_back(VarStatus::Basic);
            SimplexOptions opts;
            opts.warm_start = &basis;
            const auto warm = solve_lp(lp, opts);
            const auto cold = solve_lp(lp);
            REQUIRE(warm.status == cold.status);
            ++checked;
            if (cold.status != Status::Optimal) break;
            ++cut_off;
            CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-9));
            check_primal_feasible(lp, warm, 1e-8);
            CHECK(std::abs(dual_objective(lp, warm) - warm.objective) <= 1e-7);
            if (lp.num_vars() <= 3) {
                const auto oracle = vertex_enumeration(lp);
                REQUIRE(oracle);
                CHECK(std::abs(warm.objective - *oracle) <= 1e-7);
            }
            sol = warm;
            basis = warm.basis;
        }
    }
    CHECK(checked > 200);
    CHECK(cut_off > 100);
}

TEST_CASE("solve_binary_mip: basic cases") {
    SUBCASE("two binaries sharing a unit budget") {
        BinaryMip mip;
        mip.base = LinearProgram(2);
        mip.base.objective = {1.0, 1.0};
        mip.base.add_dense_row(std::vector<double>{1, 1}, Relation::LessEqual, 1.0);
        mip.binaries = {0, 1};
        const auto sol = solve_binary_mip(mip);
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(1.0));
    }
    SUBCASE("integral relaxation equals the LP") {
        BinaryMip mip;
        mip.base = LinearProgram(3);
        mip.base.objective = {3.0, 2.0, -1.0};
        for (int j = 0; j < 3; ++j) mip.base.upper[j] = 1.0;
        mip.binaries = {0, 1, 2};
        const auto lp = solve_lp(mip.base);
        const auto sol = solve_binary_mip(mip);
        CHECK(sol.objective == doctest::Approx(lp.objective));
        CHECK(sol.nodes == 1);
    }
    SUBCASE("group branching: knapsack over choices") {
        // Pick exactly one item from each of two groups, weight budget 5.
        BinaryMip mip;
        mip.base = LinearProgram(4);
        mip.base.objective = {5.0, 3.0, 4.0, 1.0};
        mip.base.add_dense_row(std::vector<double>{4, 2, 3, 1}, Relation::LessEqual, 5.0);
        mip.binaries = {0, 1, 2, 3};
        mip.groups = {{0, 1}, {2, 3}};
        const auto sol = solve_binary_mip(mip);
        REQUIRE(sol.status == Status::Optimal);
        // Feasible pairs: (0,3)=6 w5, (1,2)=7 w5, (1,3)=4 w3.
        CHECK(sol.objective == doctest::Approx(7.0));
        CHECK(sol.primal[1] == doctest::Approx(1.0));
        CHECK(sol.primal[2] == doctest::Approx(1.0));
    }
    SUBCASE("infeasible integer set") {
        BinaryMip mip;
        mip.base = LinearProgram(2);
        mip.base.add_dense_row(std::vector<double>{1, 1}, Relation::Equal, 1.0);
        mip.base.add_dense_row(std::vector<double>{1, -1}, Relation::Equal, 0.0);
        mip.binaries = {0, 1};
        CHECK(solve_binary_mip(mip).status == Status::Infeasible);
    }
}

TEST_CASE("solve_binary_mip: property - never exceeds relaxation, matches enumeration") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> coef(-3.0, 5.0);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 6;
        BinaryMip mip;
        mip.base = LinearProgram(n);
        for (int j = 0; j < n; ++j) {
            mip.base.objective[j] = coef(rng);
            mip.base.upper[j] = 1.0;
        }
        for (int i = 0; i < 3; ++i) {
            std::vector<double> row(n);
            for (auto& v : row) v = std::abs(coef(rng));
            mip.base.add_dense_row(row, Relation::LessEqual, 4.0);
        }
        mip.binaries = {0, 1, 2, 3, 4, 5};
        if (trial % 2) mip.groups = {{0, 1, 2}};
        const auto relaxed = solve_lp(mip.base);
        const auto sol = solve_binary_mip(mip);

        double best = -kInf;
        for (int mask = 0; mask < (1 << n); ++mask) {
            if (trial % 2 && __builtin_popcount(mask & 7) != 1) continue;
            bool ok = true;
            for (const auto& row : mip.base.rows) {
                double act = 0.0;
                for (const auto& t : row.terms) act += t.coeff * ((mask >> t.index) & 1);
                ok = ok && act <= row.rhs + 1e-12;
            }
            if (!ok) continue;
            double v = 0.0;
            for (int j = 0; j < n; ++j) v += mip.base.objective[j] * ((mask >> j) & 1);
            best = std::max(best, v);
        }
        if (best == -kInf) {
            CHECK(sol.status == Status::Infeasible);
            continue;
        }
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(best).epsilon(1e-9));
        if (!(trial % 2)) CHECK(sol.objective <= relaxed.objective + 1e-9);
    }
}
