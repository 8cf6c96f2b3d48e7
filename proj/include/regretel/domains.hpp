#pragma once

// Instance generators: random semi-sparse MDPs with box reward uncertainty,
// and a small server resource-allocation (autonomic computing) model.

#include "regretel/mdp.hpp"
#include "regretel/reward_space.hpp"

#include <cstdint>
#include <vector>

namespace regretel {

struct Instance {
    Mdp mdp;
    RewardPolytope polytope;
    /// Hidden reward used by simulated users; may be empty.
    RewardVector r_true;
};

struct RandomMdpSpec {
    int n = 10;
    int k = 5;
    std::uint64_t seed = 0;
    double rmin = 0.0;
    double rmax = 10.0;
    /// Box around r_true is [r - u w, r + v w] with u, v ~ U[0,1].
    double width = 5.0;
    double gamma = 0.95;

    void validate() const;
};

/// ceil(log2 n) distinct successors per pair with |N(0,1)| weights,
/// uniform initial distribution.
Instance gen_random(const RandomMdpSpec& spec);

struct AutonomicSpec {
    int servers = 2;
    int units = 3;
    int demand_levels = 3;
    /// Per-server demand transition matrix, D x D row-major. Empty selects
    /// a sticky default chain.
    std::vector<std::vector<double>> demand_chain;
    /// Cost per unit taken away from a server.
    double kappa = 0.5;
    /// Utility bounds per server, indexed [server][units * D + demand] with
    /// units in 0..N. Empty draws seeded tables around a concave nominal curve.
    std::vector<std::vector<double>> utility_lo, utility_hi;
    bool monotone = false;
    std::uint64_t seed = 0;
    double gamma = 0.95;

    void validate() const;
};

/// Allocations (m_1..m_k) with sum <= N, in lexicographic order.
std::vector<std::vector<int>> allocations(int servers, int units);

/**
 * States are (allocation, demand vector) pairs, actions are allocations.
 * Taking action m moves to allocation m deterministically while demands
 * follow independent per-server chains. r(s, m) = sum_i u_i(m_i, d_i) -
 * kappa sum_i max(0, n_i - m_i), with the utilities uncertain within their
 * tables and the cost known.
 */
Instance gen_autonomic(const AutonomicSpec& spec);

} // namespace regretel
