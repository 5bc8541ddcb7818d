#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfexplore/linalg.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/rng.hpp"

namespace rfe {

// One layer of a deterministic policy: either argmax_a <phi(s,a), w> with
// ties broken by lowest action index, or an explicit state -> action table.
struct PolicyRule {
    enum class Kind { LinearArgmax, Table };
    Kind kind = Kind::Table;
    Vec weights;               // LinearArgmax
    std::vector<int> actions;  // Table

    static PolicyRule linear_argmax(Vec w);
    static PolicyRule table(std::vector<int> actions);
};

struct DeterministicPolicy {
    std::vector<PolicyRule> layers;  // length H
    int H() const { return static_cast<int>(layers.size()); }
};

struct MixturePolicy {
    struct Component {
        double weight = 0;
        DeterministicPolicy policy;
    };
    std::vector<Component> components;

    static MixturePolicy single(DeterministicPolicy p);
    static MixturePolicy uniform(std::vector<DeterministicPolicy> policies);
    // Throws ContractError unless weights are nonnegative, sum to 1 within
    // 1e-10 and the component list is nonempty.
    void check() const;
};

int policy_action(const PolicyRule& rule, const FeatureTable& features, int s);
int policy_action(const DeterministicPolicy& policy, const FeatureTable& features, int h, int s);

// Action table the rule induces on the finite state space.
std::vector<int> induced_table(const PolicyRule& rule, const FeatureTable& features);

// Finite policy set, stored as per-layer rule lists whose cross product is
// enumerated lazily. Policy index i decodes with the layer-1 digit fastest.
struct PolicySet {
    enum class Provenance { EvalNet, ExpNet, TabularEnum, Custom };

    std::vector<std::vector<PolicyRule>> layers;  // [H][n_h]
    Provenance provenance = Provenance::Custom;
    double resolution = 0;        // the epsilon the net was built with
    std::uint64_t seed = 0;
    double net_log_size = 0;      // log of the full (un-sampled) net, per layer
    int eval_prefix = 0;          // ExpNet: first eval_prefix rules of each
                                  // layer form the embedded eval net

    int H() const { return static_cast<int>(layers.size()); }
    std::size_t layer_size(int h) const { return layers[static_cast<std::size_t>(h)].size(); }
    std::size_t size() const;                      // product of layer sizes
    DeterministicPolicy policy_at(std::size_t idx) const;
    // Product of layer sizes for layers 0..h_limit-1 (prefix policies).
    std::size_t prefix_size(int h_limit) const;
    DeterministicPolicy prefix_policy_at(std::size_t idx, int h_limit) const;
};

struct SetBuildOptions {
    std::size_t product_cap = 200000;  // trim per-layer lists until the
                                       // cross product fits under this cap
};

// Per-layer weight net for uniform policy evaluation: `budget` weights are
// drawn from the ball the optimal Q-weights live in, deduplicated by the
// action table they induce on the finite state space.
PolicySet build_eval_set(const FeatureTable& features, int H, double epsilon,
                         int budget, Rng& rng, const SetBuildOptions& opts = {});

// Superset of the eval net: adds greedy policies of sampled uncertainty
// rewards r(s,a) = sqrt(phi^T (I+Sigma)^-1 phi) for PSD draws of Sigma.
PolicySet build_exp_set(const FeatureTable& features, int H, double epsilon,
                        int budget, Rng& rng, const SetBuildOptions& opts = {});

// Complete per-layer enumeration of table policies (masked actions skipped).
// Throws SizeError when the full cross product exceeds cap.
PolicySet enumerate_tabular_policies(const FeatureTable& features, int H,
                                     std::size_t cap = 1000000);

// Callbacks build_explorative_mixture needs at a fixed layer: exact in test
// mode (dp oracles), estimated in algorithm mode (regression on data).
struct LayerExpectation {
    const FeatureTable* features = nullptr;
    std::function<Mat(const DeterministicPolicy&)> covariance;
    std::function<double(const DeterministicPolicy&,
                         const std::function<double(int s, int a)>&)> expect;
};
LayerExpectation exact_layer_expectation(const LinearMdp& mdp, int h);

// Uniform mixture over t-1 greedily chosen policies: each round adds the
// set policy maximizing the expected uncertainty reward of the covariance
// accumulated so far.
MixturePolicy build_explorative_mixture(const LayerExpectation& expectation,
                                        const PolicySet& set, int h, int rounds);

}  // namespace rfe
