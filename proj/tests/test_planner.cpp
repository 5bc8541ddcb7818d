#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rfexplore/errors.hpp"
#include "rfexplore/experiment.hpp"
#include "rfexplore/explorer.hpp"
#include "rfexplore/planner.hpp"

using namespace rfe;

namespace {

Dataset explored_chain_dataset(long n, std::uint64_t seed) {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    ExploreConfig cfg;
    cfg.mode = ExploreConfig::Mode::Tabular;
    cfg.epsilon = 0.15;
    cfg.delta = 0.1;
    cfg.n_override = n;
    cfg.seed = seed;
    MdpSampler sampler(mdp);
    return explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, all).dataset;
}

}  // namespace

TEST_CASE("plan: zero reward returns index 0, singleton set returns its policy") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(200, 3);

    const PlanResult zero = plan(data, RewardFunction::zero(mdp.H, mdp.dim()), all,
                                 mdp.initial_state);
    CHECK(zero.chosen_index == 0);
    CHECK(zero.estimated_value == 0.0);
    for (double v : zero.estimates) CHECK(v == 0.0);

    PolicySet single;
    single.layers.assign(3, {PolicyRule::table({1, 0, 1})});
    const RewardFunction native = RewardFunction::linear(mdp.thetas, "native");
    const PlanResult r = plan(data, native, single, mdp.initial_state);
    CHECK(r.chosen_index == 0);
    CHECK(r.estimates.size() == 1);
    CHECK(policy_action(r.chosen, mdp.features, 0, 0) == 1);

    PolicySet empty;
    empty.layers.assign(3, {});
    CHECK_THROWS_AS((void)plan(data, native, empty, mdp.initial_state), ContractError);
}

TEST_CASE("plan estimates equal per-policy estimate_value outputs") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(300, 5);
    const RewardFunction native = RewardFunction::linear(mdp.thetas, "native");
    const PlanResult r = plan(data, native, all, mdp.initial_state);
    REQUIRE(r.estimates.size() == all.size());
    for (std::size_t i = 0; i < all.size(); i += 29) {
        const double direct = estimate_value(all.policy_at(i), native, data,
                                             mdp.initial_state).value;
        CHECK(r.estimates[i] == direct);
    }
    // Greedy consistency: the chosen estimate dominates with index ties low.
    for (std::size_t i = 0; i < r.estimates.size(); ++i) {
        CHECK(r.estimated_value >= r.estimates[i]);
        if (r.estimates[i] == r.estimated_value) {
            CHECK(r.chosen_index <= i);
            break;
        }
    }
}

TEST_CASE("plan_many: reward-freeness, duplicates, element-wise equality") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(300, 7);
    Rng reward_rng(9);
    std::vector<RewardFunction> rewards;
    rewards.push_back(sample_linear_reward(mdp, reward_rng, "r0"));
    rewards.push_back(sample_linear_reward(mdp, reward_rng, "r1"));
    rewards.push_back(rewards[0]);  // duplicate

    const std::uint64_t checksum_before = data.checksum();
    const auto results = plan_many(data, rewards, all, mdp.initial_state);
    CHECK(data.checksum() == checksum_before);
    REQUIRE(results.size() == 3);
    CHECK(results[0].chosen_index == results[2].chosen_index);
    CHECK(results[0].estimated_value == results[2].estimated_value);

    const PlanResult direct = plan(data, rewards[1], all, mdp.initial_state);
    CHECK(results[1].chosen_index == direct.chosen_index);
    CHECK(results[1].estimates == direct.estimates);
}

TEST_CASE("plan is deterministic") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(300, 11);
    const RewardFunction native = RewardFunction::linear(mdp.thetas, "native");
    const PlanResult a = plan(data, native, all, mdp.initial_state);
    const PlanResult b = plan(data, native, all, mdp.initial_state);
    CHECK(a.chosen_index == b.chosen_index);
    CHECK(a.estimates == b.estimates);
}

TEST_CASE("suboptimality decomposition bounds the realized gap") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(1000, 13);
    Rng reward_rng(15);
    for (int t = 0; t < 5; ++t) {
        const RewardFunction r = sample_linear_reward(mdp, reward_rng, "t");
        const PlanResult res = plan(data, r, all, mdp.initial_state);
        const double opt = dp_optimal(mdp, r).first;

        double best_in_set = -1e300;
        double max_err = 0;
        for (std::size_t i = 0; i < all.size(); ++i) {
            const double truth = dp_policy_value(mdp, all.policy_at(i), r);
            best_in_set = std::max(best_in_set, truth);
            max_err = std::max(max_err, std::abs(res.estimates[i] - truth));
        }
        const double gap = opt - dp_policy_value(mdp, res.chosen, r);
        CHECK(gap <= (opt - best_in_set) + 2.0 * max_err + 1e-9);
    }
}

TEST_CASE("end-to-end on the chain finds near-optimal policies") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const Dataset data = explored_chain_dataset(2000, 17);
    Rng reward_rng(19);
    int hits = 0;
    for (int t = 0; t < 10; ++t) {
        const RewardFunction r = sample_linear_reward(mdp, reward_rng, "t");
        const PlanResult res = plan(data, r, all, mdp.initial_state);
        const double gap = dp_optimal(mdp, r).first - dp_policy_value(mdp, res.chosen, r);
        if (gap <= 0.1 * mdp.H) ++hits;
    }
    CHECK(hits >= 9);
}
