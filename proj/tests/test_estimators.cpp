#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rfexplore/errors.hpp"
#include "rfexplore/estimators.hpp"
#include "rfexplore/experiment.hpp"

using namespace rfe;

namespace {

DeterministicPolicy table_policy(std::vector<std::vector<int>> per_layer) {
    DeterministicPolicy p;
    for (auto& t : per_layer) p.layers.push_back(PolicyRule::table(std::move(t)));
    return p;
}

// Deterministic 2-state MDP (all transition probabilities 0/1).
LinearMdp deterministic_mdp(int H) {
    Mat tr(4, 2);
    tr << 0, 1,   // (s0,a0) -> s1
          1, 0,   // (s0,a1) -> s0
          1, 0,   // (s1,a0) -> s0
          0, 1;   // (s1,a1) -> s1
    Mat rw(2, 2);
    rw << 0.2, 0.7, 0.9, 0.4;
    return tabular_to_linear(std::vector<Mat>(static_cast<std::size_t>(H), tr),
                             std::vector<Mat>(static_cast<std::size_t>(H), rw), 0);
}

}  // namespace

TEST_CASE("dataset caches match direct recomputation and count trajectories") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 1}});
    Rng rng(5);
    Dataset data(mdp.features, mdp.H);
    for (int i = 0; i < 200; ++i) {
        Trajectory t = sample_trajectory(mdp, policy, rng);
        t.deployment_index = i % 3;
        data.append(t);
        if (i % 50 == 0)
            for (int h = 0; h < mdp.H; ++h)
                CHECK((data.gram(h) - data.gram_direct(h)).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK(data.episode_count() == 200);
    for (int h = 0; h < mdp.H; ++h) {
        CHECK(data.watermark(h) == 200);
        CHECK(min_eigenvalue(data.gram(h)) >= 1.0 - 1e-9);
    }
    const std::uint64_t before = data.checksum();
    Trajectory t = sample_trajectory(mdp, policy, rng);
    data.append(t);
    CHECK(data.checksum() != before);
}

TEST_CASE("estimate_value: zero reward is exactly zero") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 1}});
    Rng rng(7);
    const Dataset data = test::rollout_dataset(mdp, policy, 50, rng);
    const Estimate e =
        estimate_value(policy, RewardFunction::zero(mdp.H, mdp.dim()), data, mdp.initial_state);
    CHECK(e.value == 0.0);
    for (double n : e.trace.weight_norms) CHECK(n == 0.0);
}

TEST_CASE("estimate_value tracks the dp value on a deterministic instance") {
    const LinearMdp mdp = deterministic_mdp(3);
    const auto policy = table_policy({{1, 0}, {0, 1}, {1, 0}});
    Rng rng(11);
    const Dataset data = test::rollout_dataset(mdp, policy, 500, rng);
    const RewardFunction native = RewardFunction::linear(mdp.thetas);
    const Estimate e = estimate_value(policy, native, data, mdp.initial_state);
    const double exact = dp_policy_value(mdp, policy, native);
    CHECK(std::abs(e.value - exact) <= 0.05 * mdp.H);
}

TEST_CASE("estimate_value requires data in every layer and a linear reward") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 1}});
    Dataset empty(mdp.features, mdp.H);
    CHECK_THROWS_AS(
        (void)estimate_value(policy, RewardFunction::zero(3, mdp.dim()), empty, mdp.initial_state),
        EstimationError);
    Rng rng(3);
    const Dataset data = test::rollout_dataset(mdp, policy, 10, rng);
    const RewardFunction generic =
        RewardFunction::generic([](int, int, int) { return 0.5; }, 1.0);
    CHECK_THROWS_AS((void)estimate_value(policy, generic, data, mdp.initial_state), ContractError);
}

TEST_CASE("estimate_value error follows the uncertainty functional") {
    Rng rng(13);
    const LinearMdp mdp = generate_random_linear_mdp(3, 4, 3, 3, rng);
    const auto policy = table_policy({{0, 1, 2, 0}, {1, 2, 0, 1}, {2, 0, 1, 2}});
    const RewardFunction native = RewardFunction::linear(mdp.thetas);
    const double exact = dp_policy_value(mdp, policy, native);

    auto run = [&](int n_episodes, std::uint64_t seed) {
        Rng sim(seed);
        const Dataset data = test::rollout_dataset(mdp, policy, n_episodes, sim);
        const double err =
            std::abs(estimate_value(policy, native, data, mdp.initial_state).value - exact);
        const double rhs = exact_uncertainty(policy, data, {0, 1, 2}, mdp);
        return std::pair<double, double>(err, rhs);
    };

    // Fit the constant at the small level, validate at the large one.
    std::vector<double> ratios_small, err_large, rhs_large;
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        const auto [err, rhs] = run(300, seed);
        ratios_small.push_back(err / rhs);
    }
    std::sort(ratios_small.begin(), ratios_small.end());
    const double fitted = ratios_small.back();
    for (std::uint64_t seed = 100; seed < 115; ++seed) {
        const auto [err, rhs] = run(1200, seed);
        err_large.push_back(err);
        rhs_large.push_back(rhs);
    }
    int ok = 0;
    for (std::size_t i = 0; i < err_large.size(); ++i)
        if (err_large[i] <= 2.0 * fitted * rhs_large[i] + 1e-9) ++ok;
    CHECK(ok >= 13);  // the bound is a high-probability statement
}

TEST_CASE("estimate_expected_reward at the first layer is exact") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{1, 1, 0}, {0, 0, 0}, {0, 0, 0}});
    Dataset empty(mdp.features, mdp.H);
    const RewardFunction r = RewardFunction::generic(
        [](int, int s, int a) { return 0.1 * (s + 1) + 0.2 * a; }, 1.0);
    const Estimate e = estimate_expected_reward(policy, r, 0, empty, mdp.initial_state);
    // Initial state 1, action 1: r = 0.1 * 2 + 0.2 = 0.4, no regression.
    CHECK(e.value == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(e.trace.total_clamps() == 0);
}

TEST_CASE("estimate_expected_reward: constant reward on abundant data") {
    const LinearMdp mdp = deterministic_mdp(3);
    const auto policy = table_policy({{1, 0}, {0, 1}, {1, 0}});
    Rng rng(17);
    const Dataset data = test::rollout_dataset(mdp, policy, 800, rng);
    const double cap = 0.6;
    const RewardFunction r = RewardFunction::generic([cap](int, int, int) { return cap; }, cap);
    for (int h = 0; h < mdp.H; ++h) {
        const Estimate e = estimate_expected_reward(policy, r, h, data, mdp.initial_state);
        CHECK(std::abs(e.value - cap) <= 0.05 * cap);
        CHECK(e.value <= cap);
        CHECK(e.value >= 0.0);
    }
}

TEST_CASE("estimate_expected_reward rejects rewards above their cap and bad layers") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    Dataset empty(mdp.features, mdp.H);
    const RewardFunction too_big =
        RewardFunction::generic([](int, int, int) { return 0.9; }, 0.5);
    CHECK_THROWS_AS((void)estimate_expected_reward(policy, too_big, 0, empty, mdp.initial_state),
                    ContractError);
    const RewardFunction ok = RewardFunction::generic([](int, int, int) { return 0.1; }, 0.5);
    CHECK_THROWS_AS((void)estimate_expected_reward(policy, ok, 2, empty, mdp.initial_state),
                    EstimationError);  // layers below h are empty
    CHECK_THROWS_AS((void)estimate_expected_reward(policy, ok, 3, empty, mdp.initial_state),
                    ContractError);
}

TEST_CASE("mixture estimates are exactly linear in the weights") {
    const LinearMdp mdp = bundled_chain3();
    const auto p0 = table_policy({{0, 0, 0}, {1, 1, 1}, {0, 1, 0}});
    const auto p1 = table_policy({{1, 1, 1}, {0, 0, 0}, {1, 0, 1}});
    Rng rng(19);
    MixturePolicy behave;
    behave.components = {{0.5, p0}, {0.5, p1}};
    const Dataset data = test::rollout_dataset(mdp, behave, 300, rng);
    const RewardFunction r = RewardFunction::generic(
        [](int, int s, int a) { return 0.15 * s + 0.3 * a; }, 1.0);

    const double e0 = estimate_expected_reward(p0, r, 2, data, mdp.initial_state).value;
    const double e1 = estimate_expected_reward(p1, r, 2, data, mdp.initial_state).value;
    MixturePolicy mix;
    mix.components = {{0.3, p0}, {0.7, p1}};
    const double em = estimate_expected_reward(mix, r, 2, data, mdp.initial_state);
    CHECK(em == doctest::Approx(0.3 * e0 + 0.7 * e1).epsilon(1e-12));

    MixturePolicy dup;
    dup.components = {{0.5, p0}, {0.5, p0}};
    CHECK(estimate_expected_reward(dup, r, 2, data, mdp.initial_state) ==
          doctest::Approx(e0).epsilon(1e-12));
}

TEST_CASE("covariance estimate: layer 0 is the exact rank-1 outer product") {
    Rng rng(23);
    const LinearMdp mdp = generate_random_linear_mdp(3, 4, 2, 2, rng);
    const auto policy = table_policy({{1, 0, 1, 0}, {0, 0, 0, 0}});
    Dataset empty(mdp.features, mdp.H);
    const Mat sigma = estimate_covariance(policy, 0, empty, mdp.initial_state);
    const Vec phi = mdp.features.phi(mdp.initial_state, 1);
    CHECK((sigma - phi * phi.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance estimate is symmetric, bounded, and converges") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 0}});
    Rng rng(29);
    const int h = 2;
    const Mat exact = expected_feature_cov(mdp, policy, h);
    double prev_err = 1e9;
    for (int n : {400, 3200}) {
        Rng sim(rng.next_u64());
        const Dataset data = test::rollout_dataset(mdp, policy, n, sim);
        const Mat sigma = estimate_covariance(policy, h, data, mdp.initial_state);
        CHECK(symmetry_defect(sigma) == 0.0);
        CHECK(sigma.minCoeff() >= -1.0 - 1e-12);
        CHECK(sigma.maxCoeff() <= 1.0 + 1e-12);
        const double err = (sigma - exact).norm();
        CHECK(err < prev_err + 0.05);
        prev_err = err;
    }
    CHECK(prev_err < 0.12);
}

TEST_CASE("covariance coordinates equal scalar expected-reward estimates") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 1}, {1, 1, 0}, {0, 0, 1}});
    Rng rng(31);
    const Dataset data = test::rollout_dataset(mdp, policy, 150, rng);
    const int h = 1;
    const Mat sigma = estimate_covariance(policy, h, data, mdp.initial_state);
    const FeatureTable& f = mdp.features;
    for (int i = 0; i < mdp.dim(); i += 2)
        for (int j = i; j < mdp.dim(); j += 3) {
            const RewardFunction rij = RewardFunction::generic(
                [&f, i, j](int, int s, int a) {
                    return (f.phi(s, a)[i] * f.phi(s, a)[j] + 1.0) / 2.0;
                },
                1.0);
            const double e = estimate_expected_reward(policy, rij, h, data, mdp.initial_state).value;
            CHECK(sigma(i, j) == doctest::Approx(2.0 * e - 1.0).epsilon(1e-12));
        }
}

TEST_CASE("occupancy estimate matches dp occupancy with abundant data") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{1, 1, 0}, {0, 1, 1}, {1, 0, 0}});
    Rng rng(37);
    const Dataset data = test::rollout_dataset(mdp, policy, 4000, rng);
    for (int h = 0; h < mdp.H; ++h) {
        const Mat est = estimate_occupancy(policy, h, data, mdp.initial_state);
        const Mat exact = dp_occupancy(mdp, policy, h);
        CHECK((est - exact).cwiseAbs().maxCoeff() < 0.05);
    }
}

TEST_CASE("leverage estimate: identity covariance at the first layer is exact") {
    Rng rng(41);
    const LinearMdp mdp = generate_random_linear_mdp(3, 4, 2, 2, rng);
    const auto policy = table_policy({{1, 0, 0, 1}, {0, 1, 0, 1}});
    Dataset empty(mdp.features, mdp.H);
    const Mat sigma = Mat::Identity(3, 3);
    const Estimate e = estimate_leverage(policy, sigma, 1.0, 0, empty, mdp.initial_state, 1.0);
    const Vec phi = mdp.features.phi(mdp.initial_state,
                                     policy_action(policy, mdp.features, 0, mdp.initial_state));
    CHECK(e.value == doctest::Approx(phi.squaredNorm()).epsilon(1e-12));
    CHECK(phi.squaredNorm() <= 1.0 + 1e-12);

    Mat singular = Mat::Zero(3, 3);
    CHECK_THROWS_AS(
        (void)estimate_leverage(policy, singular, 100.0, 0, empty, mdp.initial_state, 1.0),
        SingularityError);
}

TEST_CASE("leverage sums: canonical basis reduces to occupancy ratios") {
    const LinearMdp mdp = bundled_chain3();
    // Behavior covers every reachable pair at layer 1: the uniform mixture
    // over all deterministic policies.
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    std::vector<DeterministicPolicy> components;
    for (std::size_t i = 0; i < all.size(); ++i) components.push_back(all.policy_at(i));
    const MixturePolicy behavior = MixturePolicy::uniform(std::move(components));
    const auto target = table_policy({{1, 0, 0}, {0, 1, 0}, {1, 1, 1}});
    Rng rng(43);
    const Dataset data = test::rollout_dataset(mdp, behavior, 6000, rng);
    const int h = 1;
    const double n = 50.0;

    // Diagonal covariance of the exact behavior occupancies.
    const Mat occ_b = dp_occupancy(mdp, behavior, h);
    Vec diag(mdp.dim());
    for (int s = 0; s < mdp.S(); ++s)
        for (int a = 0; a < mdp.A(); ++a)
            diag[mdp.features.index(s, a)] = occ_b(s, a);
    REQUIRE(diag.minCoeff() > 0.01);
    const Mat sigma = diag.asDiagonal();

    double expected = 0;  // E_target sum d^target / (n d^behavior)
    const Mat occ_t = dp_occupancy(mdp, target, h);
    for (int s = 0; s < mdp.S(); ++s)
        for (int a = 0; a < mdp.A(); ++a)
            if (occ_t(s, a) > 0)
                expected += occ_t(s, a) / (n * diag[mdp.features.index(s, a)]);

    const Estimate e = estimate_leverage(target, sigma, n, h, data, mdp.initial_state, 1.0);
    CHECK(std::abs(e.value - expected) < 0.05);
}

TEST_CASE("exact_uncertainty: unit bound on empty data, monotone in data, MC agreement") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 1, 1}, {0, 0, 1}});
    Dataset data(mdp.features, mdp.H);
    for (int h = 0; h < mdp.H; ++h) {
        const double u = exact_uncertainty(policy, data, {h}, mdp);
        CHECK(u <= 1.0 + 1e-12);  // Lambda = I and unit features
    }
    const double before = exact_uncertainty(policy, data, {0, 1, 2}, mdp);
    Rng rng(47);
    Dataset grown = test::rollout_dataset(mdp, policy, 200, rng);
    const double after = exact_uncertainty(policy, grown, {0, 1, 2}, mdp);
    CHECK(after <= before + 1e-12);

    // Monte-Carlo cross-check of the expectation at one layer.
    const int h = 1;
    Rng sim(53);
    double mc = 0;
    const int n = 100000;
    const auto& llt = grown.gram_factor(h);
    for (int i = 0; i < n; ++i) {
        const Trajectory t = sample_trajectory(mdp, policy, sim);
        const Vec phi = mdp.features.phi(t.states[h], t.actions[h]);
        mc += std::sqrt(std::max(0.0, phi.dot(llt.solve(phi))));
    }
    mc /= n;
    CHECK(std::abs(mc - exact_uncertainty(policy, grown, {h}, mdp)) < 0.01);
}

TEST_CASE("weight norms respect the regression bounds on every run") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 1}});
    Rng rng(59);
    const Dataset data = test::rollout_dataset(mdp, policy, 500, rng);
    const RewardFunction native = RewardFunction::linear(mdp.thetas);
    const Estimate ev = estimate_value(policy, native, data, mdp.initial_state);
    for (int h = 0; h < mdp.H; ++h) {
        const double bound = mdp.H * std::sqrt(static_cast<double>(mdp.dim()) * 500.0);
        CHECK(ev.trace.weight_norms[static_cast<std::size_t>(h)] <= bound * (1.0 + 1e-6));
    }
    const RewardFunction r = RewardFunction::generic(
        [](int, int s, int a) { return 0.2 * s + 0.1 * a; }, 1.0);
    const Estimate er = estimate_expected_reward(policy, r, 2, data, mdp.initial_state);
    for (int h = 0; h < 2; ++h) {
        const double bound = std::sqrt(static_cast<double>(mdp.dim()) * 500.0);
        CHECK(er.trace.weight_norms[static_cast<std::size_t>(h)] <= bound * (1.0 + 1e-6));
    }
}

TEST_CASE("estimators are deterministic given the dataset") {
    const LinearMdp mdp = bundled_chain3();
    const auto policy = table_policy({{0, 1, 0}, {1, 0, 1}, {1, 1, 1}});
    Rng rng(61);
    const Dataset data = test::rollout_dataset(mdp, policy, 100, rng);
    const RewardFunction native = RewardFunction::linear(mdp.thetas);
    const double a = estimate_value(policy, native, data, mdp.initial_state).value;
    const double b = estimate_value(policy, native, data, mdp.initial_state).value;
    CHECK(a == b);
    const Mat s1 = estimate_covariance(policy, 2, data, mdp.initial_state);
    const Mat s2 = estimate_covariance(policy, 2, data, mdp.initial_state);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estimate over prefixes matches per-policy estimates") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const auto behavior = MixturePolicy::uniform({table_policy({{0, 1, 0}, {1, 0, 1}, {0, 0, 1}}),
                                                  table_policy({{1, 0, 1}, {0, 1, 0}, {1, 1, 0}})});
    Rng rng(67);
    const Dataset data = test::rollout_dataset(mdp, behavior, 400, rng);
    const int h = 2;
    const FeatureTable& f = mdp.features;
    auto reward_at_h = [&f](int s, int a, Eigen::RowVectorXd& row) {
        row[0] = (f.phi(s, a)[2] * f.phi(s, a)[4] + 1.0) / 2.0;
    };
    const Mat vals = detail::estimate_over_prefixes(all, h, reward_at_h, 1, 1.0, data,
                                                    mdp.initial_state);
    const RewardFunction r = RewardFunction::generic(
        [&f](int, int s, int a) { return (f.phi(s, a)[2] * f.phi(s, a)[4] + 1.0) / 2.0; }, 1.0);
    for (std::size_t i = 0; i < all.prefix_size(h + 1); i += 37) {
        const double direct =
            estimate_expected_reward(all.prefix_policy_at(i, h + 1), r, h, data,
                                     mdp.initial_state)
                .value;
        CHECK(vals(static_cast<Eigen::Index>(i), 0) ==
              doctest::Approx(direct).epsilon(1e-12));
    }
}
