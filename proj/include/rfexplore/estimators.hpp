#pragma once

#include <functional>
#include <vector>

#include "rfexplore/dataset.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/policies.hpp"

namespace rfe {

// Per-layer regression diagnostics from one backward pass.
struct EstimateTrace {
    std::vector<double> weight_norms;  // ||w_h||, indexed by layer (0 where unused)
    std::vector<int> clamp_counts;     // truncated (s,a) evaluations per layer
    double value = 0;

    int total_clamps() const;
};

struct Estimate {
    double value = 0;
    EstimateTrace trace;
};

// Backward least-squares value iteration for V^pi(r) from reward-free data:
// Q_h = clamp(phi^T w_h + r_h, [0,H]), V_h = Q_h(., pi_h(.)). Requires a
// linear reward with values in [0,1] and data in every layer.
Estimate estimate_value(const DeterministicPolicy& policy, const RewardFunction& reward,
                        const Dataset& data, int initial_state);

// Backward LSVI for E_pi r(s_h, a_h): Q_h initialized to the reward, then
// regressed down to layer 1 with clamps to [0, cap]. The reward is queried
// lazily at layer h only; its values must lie in [0, cap], cap <= 1.
Estimate estimate_expected_reward(const DeterministicPolicy& policy,
                                  const RewardFunction& reward, int h,
                                  const Dataset& data, int initial_state);

// Mixture extension: exact weighted sum of per-component estimates.
double estimate_expected_reward(const MixturePolicy& policy, const RewardFunction& reward,
                                int h, const Dataset& data, int initial_state);

// Pointwise covariance estimate: each coordinate (i,j) is the expected-
// reward estimate of (phi_i phi_j + 1)/2 mapped back through 2E - 1.
// Symmetric by construction, entries in [-1, 1].
Mat estimate_covariance(const MixturePolicy& policy, int h, const Dataset& data,
                        int initial_state);
Mat estimate_covariance(const DeterministicPolicy& policy, int h, const Dataset& data,
                        int initial_state);

// Expected-reward estimate of the leverage reward
// r(s,a) = phi^T (N Sigma)^-1 phi clamped into [0, cap].
Estimate estimate_leverage(const DeterministicPolicy& policy, const Mat& sigma, double n_episodes,
                           int h, const Dataset& data, int initial_state, double cap);

// Tabular occupancy estimates d_h^pi(s,a) via indicator rewards, as an
// S x A matrix (canonical-basis instances).
Mat estimate_occupancy(const DeterministicPolicy& policy, int h, const Dataset& data,
                       int initial_state);
Mat estimate_occupancy(const MixturePolicy& policy, int h, const Dataset& data,
                       int initial_state);

// Oracle diagnostic: exact E_pi sum_{h in layers} ||phi(s_h,a_h)||_{Lambda_h^-1}
// computed from dp occupancies and the dataset's Gram matrices. Used by
// harnesses to track uncertainty; never by the algorithm itself.
double exact_uncertainty(const DeterministicPolicy& policy, const Dataset& data,
                         const std::vector<int>& layers, const LinearMdp& mdp);
double exact_uncertainty(const MixturePolicy& policy, const Dataset& data,
                         const std::vector<int>& layers, const LinearMdp& mdp);

namespace detail {

// w = Lambda_h^{-1} Phi_h^T v_next aggregated over transition counts;
// v_next holds one column per regression target (S x K), result d x K.
Mat regress(const Dataset& data, int h, const Mat& v_next);

// Enforced weight-norm bounds (throws ContractError on violation; the
// bounds are unconditional consequences of the clamped targets).
void check_weight_norm(const Vec& w, double value_bound, int d, long n, int layer);

// Batched expected-reward estimates over every prefix policy of a set:
// returns one value per prefix index (layer-1 digit fastest) for each of
// the K reward columns. reward_at_h(s, a) fills the K columns for the top
// layer. Shared backward recursions across common prefixes.
Mat estimate_over_prefixes(const PolicySet& set, int h,
                           const std::function<void(int s, int a, Eigen::RowVectorXd&)>& reward_at_h,
                           int K, double cap, const Dataset& data, int initial_state);

}  // namespace detail

}  // namespace rfe
