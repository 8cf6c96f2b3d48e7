#include "regretel/domains.hpp"

#include "regretel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace regretel {

void RandomMdpSpec::validate() const {
    if (n < 2) throw ModelError("random MDP needs n >= 2");
    if (k < 1) throw ModelError("random MDP needs k >= 1");
    if (!(rmin < rmax) || !std::isfinite(rmin) || !std::isfinite(rmax))
        throw ModelError("reward interval must satisfy rmin < rmax");
    if (!(width >= 0.0) || !std::isfinite(width)) throw ModelError("box width must be >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ModelError("discount must lie in [0, 1)");
}

Instance gen_random(const RandomMdpSpec& spec) {
    spec.validate();
    const int n = spec.n, k = spec.k;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    int fan = 0;
    while ((1 << fan) < n) ++fan;

    std::vector<std::vector<Transition>> tr(n * k);
    std::vector<int> order(n);
    for (auto& list : tr) {
        std::iota(order.begin(), order.end(), 0);
        for (int j = 0; j < fan; ++j) {
            std::uniform_int_distribution<int> pick(j, n - 1);
            std::swap(order[j], order[pick(rng)]);
        }
        std::sort(order.begin(), order.begin() + fan);
        std::vector<double> w(fan);
        double total = 0.0;
        for (auto& x : w) {
            do x = std::abs(gauss(rng));
            while (x == 0.0);
            total += x;
        }
        for (int j = 0; j < fan; ++j) list.push_back({order[j], w[j] / total});
    }

    RewardVector r(n * k);
    std::vector<double> lo(n * k), hi(n * k);
    for (int i = 0; i < n * k; ++i) {
        r[i] = spec.rmin + (spec.rmax - spec.rmin) * unit(rng);
        const double u = unit(rng), v = unit(rng);
        lo[i] = std::max(spec.rmin, r[i] - u * spec.width);
        hi[i] = std::min(spec.rmax, r[i] + v * spec.width);
    }
    return Instance{Mdp(n, k, std::move(tr), spec.gamma, std::vector<double>(n, 1.0 / n)),
                    RewardPolytope(n, k, std::move(lo), std::move(hi)), std::move(r)};
}

std::vector<std::vector<int>> allocations(int servers, int units) {
    std::vector<std::vector<int>> out;
    std::vector<int> m(servers, 0);
    while (true) {
        if (std::accumulate(m.begin(), m.end(), 0) <= units) out.push_back(m);
        int i = servers - 1;
        while (i >= 0 && ++m[i] > units) m[i--] = 0;
        if (i < 0) break;
    }
    return out;
}

void AutonomicSpec::validate() const {
    if (servers < 1 || units < 0 || demand_levels < 1)
        throw ModelError("autonomic model needs servers >= 1, units >= 0, demand levels >= 1");
    if (!(kappa >= 0.0)) throw ModelError("reallocation cost must be nonnegative");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ModelError("discount must lie in [0, 1)");
    const size_t D = demand_levels;
    if (!demand_chain.empty()) {
        if (demand_chain.size() != D) throw ModelError("demand chain must be D x D");
        for (const auto& row : demand_chain) {
            if (row.size() != D) throw ModelError("demand chain must be D x D");
            double t = 0.0;
            for (double p : row) {
                if (!(p >= 0.0)) throw ModelError("demand chain has a negative probability");
                t += p;
            }
            if (std::abs(t - 1.0) > 1e-9) throw ModelError("demand chain rows must sum to one");
        }
    }
    if (utility_lo.empty() != utility_hi.empty())
        throw ModelError("utility tables need both lower and upper bounds");
    const size_t cells = (units + 1) * D;
    for (const auto* table : {&utility_lo, &utility_hi}) {
        if (table->empty()) continue;
        if (table->size() != static_cast<size_t>(servers))
            throw ModelError("one utility table per server is required");
        for (const auto& t : *table)
            if (t.size() != cells)
                throw ModelError("utility tables need (units + 1) x demand levels entries");
    }
}

namespace {

using Table = std::vector<double>; // [m * D + d]

void default_tables(const AutonomicSpec& spec, std::mt19937_64& rng, std::vector<Table>& lo,
                    std::vector<Table>& hi) {
    const int N = spec.units, D = spec.demand_levels;
    std::uniform_real_distribution<double> spread(0.2, 1.5);
    lo.assign(spec.servers, Table((N + 1) * D));
    hi = lo;
    for (int i = 0; i < spec.servers; ++i)
        for (int m = 0; m <= N; ++m)
            for (int d = 0; d < D; ++d) {
                const double nominal = 3.0 * (d + 1) * (1.0 - std::pow(0.5, m));
                lo[i][m * D + d] = nominal - spread(rng);
                hi[i][m * D + d] = nominal + spread(rng);
            }
}

// Tightest bounds consistent with u nondecreasing in units and demand.
void monotone_repair(int N, int D, Table& lo, Table& hi) {
    for (int m = 0; m <= N; ++m)
        for (int d = 0; d < D; ++d) {
            double& x = lo[m * D + d];
            if (m > 0) x = std::max(x, lo[(m - 1) * D + d]);
            if (d > 0) x = std::max(x, lo[m * D + d - 1]);
        }
    for (int m = N; m >= 0; --m)
        for (int d = D - 1; d >= 0; --d) {
            double& x = hi[m * D + d];
            if (m < N) x = std::min(x, hi[(m + 1) * D + d]);
            if (d < D - 1) x = std::min(x, hi[m * D + d + 1]);
        }
}

bool is_monotone(int N, int D, const Table& u) {
    for (int m = 0; m <= N; ++m)
        for (int d = 0; d < D; ++d) {
            if (m > 0 && u[(m - 1) * D + d] > u[m * D + d]) return false;
            if (d > 0 && u[m * D + d - 1] > u[m * D + d]) return false;
        }
    return true;
}

std::vector<int> decode(int index, int base, int digits) {
    std::vector<int> out(digits);
    for (int i = digits - 1; i >= 0; --i) {
        out[i] = index % base;
        index /= base;
    }
    return out;
}

} // namespace

Instance gen_autonomic(const AutonomicSpec& spec) {
    spec.validate();
    const int K = spec.servers, N = spec.units, D = spec.demand_levels;
    std::mt19937_64 rng(spec.seed);

    auto chain = spec.demand_chain;
    if (chain.empty()) {
        chain.assign(D, std::vector<double>(D, 0.0));
        for (int d = 0; d < D; ++d) {
            if (D == 1) {
                chain[d][d] = 1.0;
                continue;
            }
            chain[d][d] = 0.6;
            const bool left = d > 0, right = d < D - 1;
            if (left) chain[d][d - 1] = right ? 0.2 : 0.4;
            if (right) chain[d][d + 1] = left ? 0.2 : 0.4;
        }
    }

    std::vector<Table> ulo = spec.utility_lo, uhi = spec.utility_hi;
    if (ulo.empty()) default_tables(spec, rng, ulo, uhi);
    for (int i = 0; i < K; ++i) {
        if (spec.monotone) monotone_repair(N, D, ulo[i], uhi[i]);
        for (size_t c = 0; c < ulo[i].size(); ++c)
            if (ulo[i][c] > uhi[i][c])
                throw ModelError("utility bounds of server " + std::to_string(i) +
                                 " are empty after monotone repair");
    }

    // Utilities actually in force, drawn inside the tables.
    std::vector<Table> u(K, Table((N + 1) * D));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < K; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < (spec.monotone ? 1000 : 1) && !ok; ++attempt) {
            for (size_t c = 0; c < u[i].size(); ++c)
                u[i][c] = ulo[i][c] + (uhi[i][c] - ulo[i][c]) * unit(rng);
            ok = !spec.monotone || is_monotone(N, D, u[i]);
        }
        if (!ok) {
            // Running maximum over the dominated cells keeps every entry
            // within its repaired bounds.
            for (int m = 0; m <= N; ++m)
                for (int d = 0; d < D; ++d) {
                    double& x = u[i][m * D + d];
                    if (m > 0) x = std::max(x, u[i][(m - 1) * D + d]);
                    if (d > 0) x = std::max(x, u[i][m * D + d - 1]);
                }
        }
    }

    const auto allocs = allocations(K, N);
    const int A = static_cast<int>(allocs.size());
    int Dk = 1;
    for (int i = 0; i < K; ++i) Dk *= D;
    const int S = A * Dk;

    const auto cost = [&](const std::vector<int>& from, const std::vector<int>& to) {
        double c = 0.0;
        for (int i = 0; i < K; ++i) c += spec.kappa * std::max(0, from[i] - to[i]);
        return c;
    };
    const auto alloc_index = [&](const std::vector<int>& m) {
        return static_cast<int>(std::lower_bound(allocs.begin(), allocs.end(), m) - allocs.begin());
    };

    std::vector<std::vector<Transition>> tr(S * A);
    RewardVector r(S * A);
    std::vector<double> lo(S * A), hi(S * A);
    for (int na = 0; na < A; ++na)
        for (int di = 0; di < Dk; ++di) {
            const int s = na * Dk + di;
            const auto d = decode(di, D, K);
            for (int ma = 0; ma < A; ++ma) {
                const auto& m = allocs[ma];
                const int idx = s * A + ma;
                for (int dj = 0; dj < Dk; ++dj) {
                    const auto d2 = decode(dj, D, K);
                    double p = 1.0;
                    for (int i = 0; i < K; ++i) p *= chain[d[i]][d2[i]];
                    if (p > 0.0) tr[idx].push_back({ma * Dk + dj, p});
                }
                const double c = cost(allocs[na], m);
                double ut = 0.0, ul = 0.0, uh = 0.0;
                for (int i = 0; i < K; ++i) {
                    const int cell = m[i] * D + d[i];
                    ut += u[i][cell];
                    ul += ulo[i][cell];
                    uh += uhi[i][cell];
                }
                r[idx] = ut - c;
                lo[idx] = ul - c;
                hi[idx] = uh - c;
            }
        }

    std::vector<LinearConstraint> cons;
    if (spec.monotone) {
        for (int s = 0; s < S; ++s) {
            const auto& n_alloc = allocs[s / Dk];
            const auto d = decode(s % Dk, D, K);
            for (int ma = 0; ma < A; ++ma) {
                // More units for one server never lowers its utility.
                for (int i = 0; i < K; ++i) {
                    auto up = allocs[ma];
                    ++up[i];
                    if (std::accumulate(up.begin(), up.end(), 0) > N) continue;
                    const int mb = alloc_index(up);
                    cons.push_back({{{s * A + ma, 1.0}, {s * A + mb, -1.0}},
                                    cost(n_alloc, up) - cost(n_alloc, allocs[ma])});
                }
                // Higher demand never lowers utility.
                for (int i = 0; i < K; ++i) {
                    if (d[i] + 1 >= D) continue;
                    auto d2 = d;
                    ++d2[i];
                    int dj = 0;
                    for (int x : d2) dj = dj * D + x;
                    const int s2 = (s / Dk) * Dk + dj;
                    cons.push_back({{{s * A + ma, 1.0}, {s2 * A + ma, -1.0}}, 0.0});
                }
            }
        }
    }

    return Instance{Mdp(S, A, std::move(tr), spec.gamma, std::vector<double>(S, 1.0 / S)),
                    RewardPolytope(S, A, std::move(lo), std::move(hi), std::move(cons)),
                    std::move(r)};
}

} // namespace regretel
