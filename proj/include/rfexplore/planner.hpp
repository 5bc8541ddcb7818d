#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rfexplore/dataset.hpp"
#include "rfexplore/estimators.hpp"
#include "rfexplore/policies.hpp"

namespace rfe {

struct PlanResult {
    DeterministicPolicy chosen;
    std::size_t chosen_index = 0;
    double estimated_value = 0;
    std::vector<double> estimates;  // one per policy, indexed like PolicySet
    std::string reward_id;
};

// Uniform policy evaluation: estimate V^pi(r) for every policy of the eval
// set and return the greedy one (ties to the lowest policy index). The
// dataset is read-only; shared backward passes make the product enumeration
// cheap, and each value equals the corresponding estimate_value output.
PlanResult plan(const Dataset& data, const RewardFunction& reward, const PolicySet& eval_set,
                int initial_state);

// Element-wise plan over several rewards against the same dataset.
std::vector<PlanResult> plan_many(const Dataset& data, const std::vector<RewardFunction>& rewards,
                                  const PolicySet& eval_set, int initial_state);

}  // namespace rfe
