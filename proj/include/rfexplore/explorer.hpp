#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rfexplore/dataset.hpp"
#include "rfexplore/design.hpp"
#include "rfexplore/estimators.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/policies.hpp"
#include "rfexplore/rng.hpp"

namespace rfe {

// Configuration of the layer-by-layer reward-free exploration loop.
struct ExploreConfig {
    double epsilon = 0.1;
    double delta = 0.05;
    double c1 = 1.0, c2 = 1.0, c3 = 1.0;   // exposed analysis constants
    std::optional<long> n_override;         // episodes per deployment
    int exp_budget = 200;                   // per-layer policy budget
    std::size_t product_cap = 200000;
    double design_tol = 0.05;
    int design_max_iter = -1;               // -1: 500 * labels
    double ridge = 1e-9;
    enum class Mode { Linear, Tabular } mode = Mode::Linear;
    double threshold_scale = 1.0;           // logged warning when != 1
    std::uint64_t seed = 0;
};

// Quantities derived from the config and instance dimensions, fixed before
// the first episode.
struct DerivedParams {
    double iota = 0;
    double eps_bar = 0;
    double threshold = 0;      // feasibility threshold on the mixture covariance
    double leverage_cap = 0;   // uniform bound handed to the leverage estimator
    long episodes = 0;         // N, per deployment
    // Small-epsilon condition of the linear analysis, reported not gated:
    // epsilon < H (lambda*)^2 / (C4 d^{7/2} log(1/lambda*)), C4 = 80 c1 c3.
    double c4 = 0;
};

DerivedParams derive_params(const ExploreConfig& cfg, int d, int S, int A, int H);

// The only environment surface exploration may touch.
class TrajectorySampler {
  public:
    virtual ~TrajectorySampler() = default;
    virtual Trajectory sample(const MixturePolicy& policy, Rng& rng) = 0;
};

class MdpSampler final : public TrajectorySampler {
  public:
    explicit MdpSampler(const LinearMdp& mdp) : mdp_(&mdp) { require_valid(mdp); }
    Trajectory sample(const MixturePolicy& policy, Rng& rng) override {
        return sample_trajectory(*mdp_, policy, rng);
    }

  private:
    const LinearMdp* mdp_;
};

struct DeploymentEntry {
    int layer = 0;
    MixturePolicy policy;
    long episodes = 0;
    double wall_seconds = 0;
    double objective = 0;          // achieved exploration objective
    double design_g = 0;
    int design_iterations = 0;
    bool design_converged = false;
    double constraint_value = 0;   // smallest covariance eigenvalue / occupancy
    double constraint_margin = 0;  // constraint_value - threshold
    double blend_beta = 0;         // uniform blend applied in repair (0 = none)
    bool used_uniform = false;     // uniform mixture beat the design solution
};

struct DeploymentLog {
    std::vector<DeploymentEntry> entries;
    long episodes_per_deployment = 0;
    DerivedParams params;
};

struct ExploreResult {
    Dataset dataset;
    DeploymentLog log;
};

// Diagnostics of one exploration-objective solve.
struct ObjectiveSolution {
    MixturePolicy policy;
    Vec mu;                      // weights over layer-h prefix policies
    double objective = 0;
    double design_g = 0;
    int design_iterations = 0;
    bool design_converged = false;
    double constraint_value = 0;
    double constraint_margin = 0;
    double blend_beta = 0;
    bool used_uniform = false;
};

// Desk-scale solver for the per-layer exploration objective: estimate each
// prefix policy's covariance, run the log-det design over the estimated
// atoms, then repair feasibility by blending toward uniform. Feasibility is
// evaluated on the subspace the estimated atoms span (directions no policy
// can excite are excluded, otherwise any instance with a fixed initial
// state is infeasible at layer 1).
ObjectiveSolution solve_exploration_objective(int h, const Dataset& data,
                                              const PolicySet& exp_set,
                                              const ExploreConfig& cfg,
                                              const DerivedParams& params,
                                              int initial_state);

// Tabular variant: diagonal atoms of estimated occupancies, per-(s,a)
// coverage constraint over the reachable pairs, occupancy-ratio objective.
ObjectiveSolution solve_exploration_objective_tabular(int h, const Dataset& data,
                                                      const PolicySet& set,
                                                      const ExploreConfig& cfg,
                                                      const DerivedParams& params,
                                                      int initial_state);

// H deployments of exactly N episodes each; N fixed before episode 1.
ExploreResult explore(TrajectorySampler& env, const FeatureTable& features, int H,
                      int initial_state, const ExploreConfig& cfg, const PolicySet& exp_set);

}  // namespace rfe
