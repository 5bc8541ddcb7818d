#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfexplore/linalg.hpp"
#include "rfexplore/rng.hpp"

namespace rfe {

struct DeterministicPolicy;
struct MixturePolicy;

// Known feature map of a finite linear MDP: phi(s,a) in R^d for every
// state/action pair, plus a per-state valid-action mask (used to restrict
// action sets; defaults to all-valid).
class FeatureTable {
  public:
    FeatureTable() = default;
    FeatureTable(int num_states, int num_actions, int dim);

    int S() const { return S_; }
    int A() const { return A_; }
    int dim() const { return d_; }

    Eigen::Ref<const Vec> phi(int s, int a) const { return phi_.col(index(s, a)); }
    void set_phi(int s, int a, const Vec& v) { phi_.col(index(s, a)) = v; }

    bool valid(int s, int a) const { return mask_[static_cast<std::size_t>(index(s, a))] != 0; }
    void set_valid(int s, int a, bool v) { mask_[static_cast<std::size_t>(index(s, a))] = v ? 1 : 0; }
    int valid_action_count(int s) const;
    // Lowest valid action of state s.
    int first_valid_action(int s) const;

    int index(int s, int a) const { return s * A_ + a; }

    // d x (S*A) matrix of all feature columns.
    const Mat& columns() const { return phi_; }

  private:
    int S_ = 0, A_ = 0, d_ = 0;
    Mat phi_;                     // d x (S*A), column s*A+a
    std::vector<std::uint8_t> mask_;
};

// Exact finite-state episodic linear MDP.
struct LinearMdp {
    FeatureTable features;
    int H = 0;
    int initial_state = 0;
    std::vector<Mat> measures;  // per layer, d x S; column s' holds mu_h(s')
    std::vector<Vec> thetas;    // per layer, d

    int S() const { return features.S(); }
    int A() const { return features.A(); }
    int dim() const { return features.dim(); }

    // P_h(. | s,a) as an S-vector.
    Vec next_state_dist(int h, int s, int a) const {
        return measures[static_cast<std::size_t>(h)].transpose() * features.phi(s, a);
    }
    double reward(int h, int s, int a) const {
        return features.phi(s, a).dot(thetas[static_cast<std::size_t>(h)]);
    }
};

// Reward function handed to planners and oracles. Linear rewards carry
// per-layer coefficient vectors; generic rewards carry an arbitrary
// per-(h,s,a) function plus its declared uniform upper bound.
struct RewardFunction {
    enum class Kind { Linear, Generic };
    Kind kind = Kind::Linear;
    std::vector<Vec> thetas;                              // Linear
    std::function<double(int h, int s, int a)> fn;        // Generic
    double cap = 1.0;                                     // Generic upper bound
    std::string id;

    static RewardFunction linear(std::vector<Vec> thetas, std::string id = "");
    static RewardFunction zero(int H, int d);
    static RewardFunction generic(std::function<double(int h, int s, int a)> fn,
                                  double cap, std::string id = "");

    double value(const FeatureTable& features, int h, int s, int a) const;
};

// One reward-free episode.
struct Trajectory {
    int deployment_index = 0;
    std::vector<int> states;   // length H
    std::vector<int> actions;  // length H
};

// One invariant violation found by validate().
struct Violation {
    std::string what;    // which invariant
    int h = -1, s = -1, a = -1, s_next = -1;
    double magnitude = 0;
    std::string str() const;
};

// Diagnostic check of every LinearMdp invariant; empty result iff valid.
std::vector<Violation> validate(const LinearMdp& mdp);
void require_valid(const LinearMdp& mdp);

Trajectory sample_trajectory(const LinearMdp& mdp, const DeterministicPolicy& policy, Rng& rng);
Trajectory sample_trajectory(const LinearMdp& mdp, const MixturePolicy& policy, Rng& rng);

// Exact V^pi(r) at the initial state, by backward induction.
double dp_policy_value(const LinearMdp& mdp, const DeterministicPolicy& policy,
                       const RewardFunction& reward);
double dp_policy_value(const LinearMdp& mdp, const MixturePolicy& policy,
                       const RewardFunction& reward);

// Exact optimal value and one optimal deterministic policy (argmax ties
// broken by lowest action index).
std::pair<double, DeterministicPolicy> dp_optimal(const LinearMdp& mdp,
                                                  const RewardFunction& reward);

// Full tables V*_h(s), Q*_h(s,a) (Q over valid pairs; invalid entries -inf).
struct OptimalTables {
    std::vector<Vec> v;               // per layer, S
    std::vector<Mat> q;               // per layer, S x A
    double optimal_value = 0;
    DeterministicPolicy policy() const;
};
OptimalTables dp_optimal_tables(const LinearMdp& mdp, const RewardFunction& reward);

// Occupancy d_h^pi(s,a) as an S x A matrix (zero at invalid pairs).
Mat dp_occupancy(const LinearMdp& mdp, const DeterministicPolicy& policy, int h);
Mat dp_occupancy(const LinearMdp& mdp, const MixturePolicy& policy, int h);

// Exact expected feature covariance E_pi[phi phi^T] at layer h.
Mat expected_feature_cov(const LinearMdp& mdp, const DeterministicPolicy& policy, int h);
Mat expected_feature_cov(const LinearMdp& mdp, const MixturePolicy& policy, int h);

// Canonical-basis embedding of a tabular MDP. transitions[h] is an
// (S*A) x S row-stochastic matrix, rewards[h] an S x A table in [0,1].
LinearMdp tabular_to_linear(const std::vector<Mat>& transitions,
                            const std::vector<Mat>& rewards, int initial_state);

// Random valid rank-d instance; features sampled on the simplex then
// l2-boosted with the measure rows rescaled to keep transitions exact.
LinearMdp generate_random_linear_mdp(int d, int S, int A, int H, Rng& rng);

// Two-state instance with an absorbing state; one self-loop action and
// d-2 "arm" actions per layer at the initial state. arm_rewards is an
// H x (d-2) table of values in (0,1].
LinearMdp build_hard_instance(int d, int H, const Mat& arm_rewards);

}  // namespace rfe
