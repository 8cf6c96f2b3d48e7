#pragma once

#include "regretel/mdp.hpp"
#include "regretel/reward_space.hpp"

namespace regretel {

struct MaximinSolution {
    Occupancy f;
    /// min_{r in R} r.f at the returned f.
    double value = 0.0;
    RewardVector worst;
};

enum class MaximinPath { Auto, Dual };

/**
 * max_f min_{r in R} r.f.
 *
 * On a box the inner minimum is r_lo for every f >= 0, so this is the
 * occupancy LP for r_lo. Otherwise the inner LP is replaced by its dual and
 * the whole problem becomes one LP over f and the dual multipliers.
 * MaximinPath::Dual forces the second route.
 */
MaximinSolution maximin(const Mdp& mdp, const RewardPolytope& R,
                        MaximinPath path = MaximinPath::Auto);

/// min_{r in R} r.f
double security_value(const RewardPolytope& R, const Occupancy& f);

} // namespace regretel
