#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rfexplore/explorer.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/planner.hpp"

namespace rfe {

// Bundled desk-scale instances anchoring the acceptance suite.
LinearMdp bundled_chain3();       // 3-state / 2-action stochastic chain, H = 3
LinearMdp bundled_symmetric2();   // symmetric 2-feature instance, H = 2
LinearMdp bundled_hard5();        // two-state absorbing instance, d = 5, H = 3
LinearMdp bundled_random_linear();  // fixed-seed random instance, d=3 S=6 A=3 H=3

// Feasible linear reward on instances whose features are nonnegative with
// unit l1 norm (all bundled instances): theta normalized affinely so the
// induced rewards span [0,1], rescaled into the sqrt(d) ball.
RewardFunction sample_linear_reward(const LinearMdp& mdp, Rng& rng, const std::string& id);

struct InstanceSpec {
    std::string kind = "chain3";  // chain3|symmetric2|hard5|random_linear|file
    std::string path;             // kind == file
    // kind == random_linear overrides
    std::optional<int> d, S, A, H;
    std::optional<std::uint64_t> seed;
};
LinearMdp build_instance(const InstanceSpec& spec);

struct RewardSpec {
    int count = 8;
    std::uint64_t seed = 1;
    bool include_native = true;  // reward 0 is the instance's own theta
};

struct ExperimentSpec {
    InstanceSpec instance;
    ExploreConfig explore;
    int eval_budget = 200;
    std::size_t eval_product_cap = 100000;
    std::vector<std::uint64_t> seeds = {1};
    RewardSpec rewards;
    bool oracle_checks = true;   // dp-oracle gap evaluation per reward
    std::string out_dir;         // empty: no artifacts written
};

struct ExperimentRow {
    std::uint64_t seed = 0;
    int reward_index = -1;
    std::string reward_id;
    long n_per_deployment = 0;
    int deployments = 0;
    int H = 0, d = 0, S = 0, A = 0;
    double estimated_value = 0;
    double chosen_true_value = 0;   // oracle
    double optimal_value = 0;       // oracle
    double gap = 0;                 // V* - V^chosen
    std::string status = "ok";      // or the failing stage name
    std::vector<double> design_g;             // per layer
    std::vector<double> constraint_margins;   // per layer
    std::vector<double> unc_before;           // per layer, max over eval set
    std::vector<double> unc_after;
    double runtime_seconds = 0;
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    // Deterministic CSV (runtimes excluded; they live in the summary JSON).
    void write_csv(const std::filesystem::path& path) const;
    void write_summary_json(const std::filesystem::path& path) const;
    std::size_t failed_count() const;
};

// Full pipeline: build instance -> build sets -> explore per seed ->
// plan_many over the sampled rewards -> oracle gaps -> report + artifacts.
ExperimentReport run_experiment(const ExperimentSpec& spec);

ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

}  // namespace rfe
