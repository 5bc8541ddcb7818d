#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rfexplore/dataset.hpp"
#include "rfexplore/design.hpp"
#include "rfexplore/explorer.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/planner.hpp"
#include "rfexplore/policies.hpp"

namespace rfe {

// All structured artifacts are JSON with a schema_version field; datasets
// are JSON-lines with a header line and a trailing checksum line.

void save_mdp(const LinearMdp& mdp, const std::filesystem::path& path);
LinearMdp load_mdp(const std::filesystem::path& path);

void save_policy(const DeterministicPolicy& policy, const std::filesystem::path& path);
DeterministicPolicy load_policy(const std::filesystem::path& path);

void save_policy_set(const PolicySet& set, const std::filesystem::path& path);
PolicySet load_policy_set(const std::filesystem::path& path);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, const FeatureTable& features);

void save_design_problem(const DesignProblem& problem, const std::filesystem::path& path);
DesignProblem load_design_problem(const std::filesystem::path& path);
void save_design_result(const DesignResult& result, const std::filesystem::path& path);
void save_design_trace_csv(const DesignResult& result, const std::filesystem::path& path);

void save_rewards(const std::vector<RewardFunction>& rewards, const std::filesystem::path& path);
std::vector<RewardFunction> load_rewards(const std::filesystem::path& path);

void save_deployment_log(const DeploymentLog& log, const std::filesystem::path& path);

void save_plan_result(const PlanResult& result, const std::filesystem::path& path);

ExploreConfig load_explore_config(const std::filesystem::path& path);
void save_explore_config(const ExploreConfig& cfg, const std::filesystem::path& path);

// Fixed-format float printing shared by every CSV writer (deterministic
// byte-for-byte output under fixed seeds).
std::string format_double(double v);

}  // namespace rfe
