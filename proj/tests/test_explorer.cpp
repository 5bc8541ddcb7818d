#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rfexplore/errors.hpp"
#include "rfexplore/experiment.hpp"
#include "rfexplore/explorer.hpp"

using namespace rfe;

namespace {

ExploreConfig symmetric_config() {
    ExploreConfig cfg;
    cfg.epsilon = 0.1;
    cfg.delta = 0.1;
    cfg.n_override = 200;
    cfg.c2 = 1e-6;  // keeps the leverage cap from truncating the diagnostic
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("derived parameters follow the configured formulas") {
    ExploreConfig cfg;
    cfg.epsilon = 0.2;
    cfg.delta = 0.05;
    cfg.c1 = 0.5;
    cfg.c2 = 2.0;
    cfg.c3 = 1.5;
    const int d = 3, S = 6, A = 3, H = 3;
    const DerivedParams p = derive_params(cfg, d, S, A, H);
    const double iota = std::log(d * H / (cfg.epsilon * cfg.delta));
    CHECK(p.iota == doctest::Approx(iota));
    const double eps_bar = 0.5 * 0.2 / (9.0 * std::sqrt(3.0) * iota);
    CHECK(p.eps_bar == doctest::Approx(eps_bar));
    CHECK(p.threshold == doctest::Approx(1.5 * 9.0 * 3.0 * eps_bar * iota));
    CHECK(p.episodes == static_cast<long>(std::ceil(2.0 * 3.0 * iota / (eps_bar * eps_bar))));
    CHECK(p.leverage_cap ==
          doctest::Approx(eps_bar / (2.0 * 27.0 * 3.0 * iota * iota)));
    CHECK(p.c4 == doctest::Approx(80.0 * 0.5 * 1.5));

    ExploreConfig tab = cfg;
    tab.mode = ExploreConfig::Mode::Tabular;
    const DerivedParams q = derive_params(tab, S * A, S, A, H);
    const double eps_bar_t = 0.5 * 0.2 / (9.0 * std::sqrt(6.0) * q.iota);
    CHECK(q.eps_bar == doctest::Approx(eps_bar_t));
    CHECK(q.threshold == doctest::Approx(1.5 * 3.0 * std::sqrt(6.0) * eps_bar_t * q.iota));
    CHECK(q.episodes ==
          static_cast<long>(std::ceil(2.0 * 18.0 * q.iota / (eps_bar_t * eps_bar_t))));

    tab.threshold_scale = 0.5;
    CHECK(derive_params(tab, S * A, S, A, H).threshold == doctest::Approx(q.threshold * 0.5));
}

TEST_CASE("layer-1 solve on the symmetric instance: uniform design, oracle objective") {
    const LinearMdp mdp = bundled_symmetric2();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const ExploreConfig cfg = symmetric_config();
    const DerivedParams params = derive_params(cfg, 2, 2, 2, mdp.H);
    Dataset empty(mdp.features, mdp.H);

    const ObjectiveSolution sol =
        solve_exploration_objective(0, empty, all, cfg, params, mdp.initial_state);
    // Both layer-0 atoms are e_a e_a^T exactly; symmetry forces the uniform
    // design and the objective d/N.
    CHECK(sol.design_g == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(sol.objective == doctest::Approx(2.0 / params.episodes).epsilon(1e-6));
    CHECK(sol.constraint_value == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sol.constraint_margin >= 0);

    // The h=1 estimates are exact, so the objective equals the oracle
    // design objective computed from exact covariances.
    // Prefix 0 plays action 0 at the initial state, prefix 2 action 1.
    const Mat cov0 = expected_feature_cov(mdp, all.prefix_policy_at(0, 1), 0);
    const Mat cov1 = expected_feature_cov(mdp, all.prefix_policy_at(2, 1), 0);
    const Mat v = 0.5 * (cov0 + cov1) * params.episodes;
    const Mat inv = v.llt().solve(Mat::Identity(2, 2));
    double oracle = 0;
    for (const Mat& atom : {cov0, cov1}) oracle = std::max(oracle, (inv * atom).trace());
    CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("explore runs H deployments of exactly N episodes, deterministically") {
    const LinearMdp mdp = bundled_symmetric2();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    const ExploreConfig cfg = symmetric_config();
    MdpSampler sampler(mdp);

    const ExploreResult a = explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, all);
    CHECK(a.log.entries.size() == static_cast<std::size_t>(mdp.H));
    CHECK(a.log.episodes_per_deployment == 200);
    for (const auto& e : a.log.entries) {
        CHECK(e.episodes == 200);
        CHECK(e.constraint_margin >= 0);
    }
    CHECK(a.dataset.episode_count() == static_cast<std::size_t>(mdp.H) * 200);

    const ExploreResult b = explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, all);
    CHECK(a.dataset.checksum() == b.dataset.checksum());

    ExploreConfig other = cfg;
    other.seed = 8;
    const ExploreResult c = explore(sampler, mdp.features, mdp.H, mdp.initial_state, other, all);
    CHECK(a.dataset.checksum() != c.dataset.checksum());
}

TEST_CASE("uncertainty shrinks layer by layer as deployments arrive") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    ExploreConfig cfg;
    cfg.mode = ExploreConfig::Mode::Tabular;
    cfg.epsilon = 0.15;
    cfg.delta = 0.1;
    cfg.n_override = 800;
    cfg.seed = 3;
    MdpSampler sampler(mdp);

    // Interleave the loop manually to snapshot uncertainties.
    const DerivedParams params = derive_params(cfg, mdp.dim(), mdp.S(), mdp.A(), mdp.H);
    Dataset data(mdp.features, mdp.H);
    Rng root(cfg.seed);
    for (int h = 0; h < mdp.H; ++h) {
        std::vector<double> before;
        for (std::size_t i = 0; i < all.prefix_size(h + 1); ++i)
            before.push_back(
                exact_uncertainty(all.prefix_policy_at(i, h + 1), data, {h}, mdp));
        const ObjectiveSolution sol =
            solve_exploration_objective_tabular(h, data, all, cfg, params, mdp.initial_state);
        Rng episode_rng = root.split(static_cast<std::uint64_t>(h));
        for (long n = 0; n < params.episodes; ++n) {
            Trajectory t = sampler.sample(sol.policy, episode_rng);
            t.deployment_index = h;
            data.append(t);
        }
        for (std::size_t i = 0; i < all.prefix_size(h + 1); ++i) {
            const double after =
                exact_uncertainty(all.prefix_policy_at(i, h + 1), data, {h}, mdp);
            CHECK(after <= before[i] + 1e-10);
        }
    }
}

TEST_CASE("infeasible thresholds raise with the best achieved value") {
    const LinearMdp mdp = bundled_symmetric2();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    ExploreConfig cfg = symmetric_config();
    cfg.threshold_scale = 1e7;
    const DerivedParams params = derive_params(cfg, 2, 2, 2, mdp.H);
    Dataset empty(mdp.features, mdp.H);
    try {
        (void)solve_exploration_objective(0, empty, all, cfg, params, mdp.initial_state);
        FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
        CHECK(e.best_lambda_min == doctest::Approx(0.5).epsilon(1e-6));
    }
}

TEST_CASE("solution never loses to the feasible uniform mixture") {
    const LinearMdp mdp = bundled_chain3();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    ExploreConfig cfg;
    cfg.mode = ExploreConfig::Mode::Tabular;
    cfg.epsilon = 0.15;
    cfg.delta = 0.1;
    cfg.n_override = 500;
    cfg.seed = 11;
    MdpSampler sampler(mdp);
    const DerivedParams params = derive_params(cfg, mdp.dim(), mdp.S(), mdp.A(), mdp.H);

    Dataset data(mdp.features, mdp.H);
    Rng root(cfg.seed);
    for (int h = 0; h < mdp.H; ++h) {
        const std::size_t P = all.prefix_size(h + 1);
        const ObjectiveSolution sol =
            solve_exploration_objective_tabular(h, data, all, cfg, params, mdp.initial_state);

        // Estimated occupancies, as the solver sees them.
        std::vector<Mat> occ;
        for (std::size_t i = 0; i < P; ++i)
            occ.push_back(estimate_occupancy(all.prefix_policy_at(i, h + 1), h, data,
                                             mdp.initial_state));
        Mat uniform_occ = Mat::Zero(mdp.S(), mdp.A());
        for (const Mat& o : occ) uniform_occ += o / static_cast<double>(P);
        double uniform_min = 1e300;
        for (int s = 0; s < mdp.S(); ++s)
            for (int a = 0; a < mdp.A(); ++a) {
                double reach = 0;
                for (const Mat& o : occ) reach = std::max(reach, o(s, a));
                if (reach > 1e-9) uniform_min = std::min(uniform_min, uniform_occ(s, a));
            }
        if (uniform_min >= params.threshold) {
            auto ratio = [&](const Mat& mix) {
                double worst = 0;
                for (const Mat& o : occ) {
                    double sum = 0;
                    for (int s = 0; s < mdp.S(); ++s)
                        for (int a = 0; a < mdp.A(); ++a)
                            if (o(s, a) > 0) sum += o(s, a) / mix(s, a);
                    worst = std::max(worst, sum);
                }
                return worst;
            };
            Mat chosen_occ = Mat::Zero(mdp.S(), mdp.A());
            for (Eigen::Index i = 0; i < sol.mu.size(); ++i)
                if (sol.mu[i] > 0) chosen_occ += sol.mu[i] * occ[static_cast<std::size_t>(i)];
            CHECK(ratio(chosen_occ) <= ratio(uniform_occ) + 1e-9);
        }

        Rng episode_rng = root.split(static_cast<std::uint64_t>(h));
        for (long n = 0; n < params.episodes; ++n) {
            Trajectory t = sampler.sample(sol.policy, episode_rng);
            t.deployment_index = h;
            data.append(t);
        }
    }
}

TEST_CASE("tabular single-state instance: uniform action coverage is optimal") {
    // S = 1: every policy occupies the single state; the optimal mixture
    // covers the two actions evenly.
    FeatureTable f(1, 2, 2);
    for (int a = 0; a < 2; ++a) {
        Vec e = Vec::Zero(2);
        e[a] = 1.0;
        f.set_phi(0, a, e);
    }
    LinearMdp mdp;
    mdp.H = 1;
    mdp.initial_state = 0;
    mdp.features = f;
    mdp.measures.push_back(Mat::Ones(2, 1));
    mdp.thetas.push_back(Vec::Zero(2));
    REQUIRE(validate(mdp).empty());

    const PolicySet all = enumerate_tabular_policies(mdp.features, 1);
    ExploreConfig cfg;
    cfg.mode = ExploreConfig::Mode::Tabular;
    cfg.epsilon = 0.3;
    cfg.delta = 0.1;
    cfg.n_override = 100;
    const DerivedParams params = derive_params(cfg, 2, 1, 2, 1);
    Dataset empty(mdp.features, 1);
    const ObjectiveSolution sol =
        solve_exploration_objective_tabular(0, empty, all, cfg, params, 0);
    REQUIRE(sol.mu.size() == 2);
    CHECK(sol.mu[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sol.objective == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("explore on the hard instance stays feasible on the reachable span") {
    const LinearMdp mdp = bundled_hard5();
    const PolicySet all = enumerate_tabular_policies(mdp.features, mdp.H);
    ExploreConfig cfg;
    cfg.epsilon = 0.025;
    cfg.delta = 0.1;
    cfg.n_override = 300;
    cfg.seed = 5;
    MdpSampler sampler(mdp);
    const ExploreResult r = explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, all);
    CHECK(r.log.entries.size() == 3);
    for (const auto& e : r.log.entries) CHECK(e.constraint_margin >= 0);
}
