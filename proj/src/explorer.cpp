#include "rfexplore/explorer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rfexplore/errors.hpp"

namespace rfe {

namespace {

constexpr double kRankEps = 1e-6;        // relative cutoff for the achievable span
constexpr double kReachableTol = 1e-9;   // occupancy below this counts as unreachable

// Mixture over full policies extending the layer-h prefixes by the first
// rule of each later layer.
MixturePolicy mixture_from_prefix_weights(const PolicySet& set, int h, const Vec& mu,
                                          double weight_floor = 1e-12) {
    MixturePolicy mix;
    double total = 0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu[i] <= weight_floor) continue;
        mix.components.push_back({mu[i], set.prefix_policy_at(static_cast<std::size_t>(i), h + 1)});
        total += mu[i];
    }
    if (mix.components.empty())
        throw ContractError("mixture_from_prefix_weights: all weights below floor");
    for (auto& c : mix.components) c.weight /= total;
    return mix;
}

// Repair an estimated atom into DesignProblem territory: symmetrize, clamp
// negative eigenvalues, rescale if the trace noise pushed it above 1.
Mat repair_atom(const Mat& m) {
    Mat out = psd_floor(m);
    const double tr = out.trace();
    if (tr > 1.0) out *= 1.0 / tr;
    return out;
}

struct LinearAtoms {
    std::vector<Mat> raw;        // symmetric covariance estimates
    std::vector<Mat> repaired;   // PSD, trace <= 1
};

// Covariance estimates for every layer-h prefix policy in one shared pass.
LinearAtoms estimate_prefix_covariances(int h, const Dataset& data, const PolicySet& set,
                                        int initial_state) {
    const FeatureTable& f = data.features();
    const int d = f.dim();
    const int K = d * (d + 1) / 2;
    auto reward_at_h = [&f, d](int s, int a, Eigen::RowVectorXd& row) {
        const Vec phi = f.phi(s, a);
        int k = 0;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) row[k++] = (phi[i] * phi[j] + 1.0) / 2.0;
    };
    const Mat values = detail::estimate_over_prefixes(set, h, reward_at_h, K, 1.0, data, initial_state);

    LinearAtoms atoms;
    atoms.raw.reserve(static_cast<std::size_t>(values.rows()));
    atoms.repaired.reserve(static_cast<std::size_t>(values.rows()));
    for (Eigen::Index p = 0; p < values.rows(); ++p) {
        Mat sigma(d, d);
        int k = 0;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                const double v = 2.0 * values(p, k++) - 1.0;
                sigma(i, j) = v;
                sigma(j, i) = v;
            }
        atoms.raw.push_back(sigma);
        atoms.repaired.push_back(repair_atom(sigma));
    }
    return atoms;
}

Mat weighted_sum(const std::vector<Mat>& mats, const Vec& mu) {
    Mat out = Mat::Zero(mats[0].rows(), mats[0].cols());
    for (std::size_t i = 0; i < mats.size(); ++i) out += mu[static_cast<Eigen::Index>(i)] * mats[i];
    return out;
}

}  // namespace

DerivedParams derive_params(const ExploreConfig& cfg, int d, int S, int A, int H) {
    if (cfg.epsilon <= 0 || cfg.epsilon >= 1) throw ContractError("epsilon must lie in (0,1)");
    if (cfg.delta <= 0 || cfg.delta >= 1) throw ContractError("delta must lie in (0,1)");
    if (cfg.c1 <= 0 || cfg.c2 <= 0 || cfg.c3 <= 0) throw ContractError("constants must be positive");

    DerivedParams p;
    const bool tabular = cfg.mode == ExploreConfig::Mode::Tabular;
    const double dim_term = tabular ? static_cast<double>(S) : static_cast<double>(d);
    p.iota = std::log(d * H / (cfg.epsilon * cfg.delta));
    p.eps_bar = cfg.c1 * cfg.epsilon / (H * H * std::sqrt(dim_term) * p.iota);
    if (tabular) {
        p.threshold = cfg.c3 * H * std::sqrt(dim_term) * p.eps_bar * p.iota * cfg.threshold_scale;
        p.episodes = cfg.n_override ? *cfg.n_override
                                    : static_cast<long>(std::ceil(cfg.c2 * S * A * p.iota /
                                                                  (p.eps_bar * p.eps_bar)));
    } else {
        p.threshold = cfg.c3 * d * d * H * p.eps_bar * p.iota * cfg.threshold_scale;
        p.episodes = cfg.n_override
                         ? *cfg.n_override
                         : static_cast<long>(std::ceil(cfg.c2 * d * p.iota / (p.eps_bar * p.eps_bar)));
    }
    p.leverage_cap =
        std::clamp(p.eps_bar / (cfg.c2 * d * d * d * H * p.iota * p.iota), 1e-12, 1.0);
    p.c4 = 80.0 * cfg.c1 * cfg.c3;
    if (p.episodes < 1) throw ContractError("episodes per deployment must be at least 1");
    return p;
}

ObjectiveSolution solve_exploration_objective(int h, const Dataset& data,
                                              const PolicySet& exp_set,
                                              const ExploreConfig& cfg,
                                              const DerivedParams& params,
                                              int initial_state) {
    if (exp_set.size() == 0) throw ContractError("exploration set is empty");
    const int d = data.features().dim();
    const std::size_t P = exp_set.prefix_size(h + 1);

    // Stage 1: covariance estimate per prefix policy.
    LinearAtoms atoms = estimate_prefix_covariances(h, data, exp_set, initial_state);

    // Stage 2: log-det design over the repaired atoms.
    DesignProblem problem;
    problem.ridge = cfg.ridge;
    problem.matrices = atoms.repaired;
    problem.labels.reserve(P);
    for (std::size_t i = 0; i < P; ++i) problem.labels.push_back(std::to_string(i));
    DesignResult design = solve_design(problem, cfg.design_tol, cfg.design_max_iter);

    // Achievable span: directions some mixture of atoms can excite.
    Mat total = Mat::Zero(d, d);
    for (const Mat& m : atoms.repaired) total += m;
    if (total.cwiseAbs().maxCoeff() <= 0)
        throw InfeasibleError("exploration objective infeasible at layer " + std::to_string(h) +
                                  ": every estimated covariance is zero",
                              0.0);
    const Mat basis = dominant_eigenbasis(total, kRankEps);
    auto span_lambda_min = [&basis](const Mat& sigma) {
        return min_eigenvalue(basis.transpose() * sigma * basis);
    };

    // Stage 3: constraint repair by blending toward uniform.
    const Vec uniform = Vec::Constant(static_cast<Eigen::Index>(P), 1.0 / static_cast<double>(P));
    ObjectiveSolution sol;
    sol.design_g = design.g;
    sol.design_iterations = design.iterations;
    sol.design_converged = design.converged;

    double best_lambda = -std::numeric_limits<double>::infinity();
    bool feasible = false;
    const double betas[] = {0.0, 0.125, 0.25, 0.5, 1.0};
    for (double beta : betas) {
        const Vec mu = (1.0 - beta) * design.mu + beta * uniform;
        const double lam = span_lambda_min(weighted_sum(atoms.raw, mu));
        best_lambda = std::max(best_lambda, lam);
        if (lam >= params.threshold) {
            sol.mu = mu;
            sol.blend_beta = beta;
            sol.constraint_value = lam;
            feasible = true;
            break;
        }
    }
    if (!feasible)
        throw InfeasibleError(
            "exploration objective infeasible at layer " + std::to_string(h) +
                ": best achievable min eigenvalue " + std::to_string(best_lambda) +
                " below threshold " + std::to_string(params.threshold) +
                " (the instance likely violates the small-epsilon explorability condition "
                "epsilon < H lambda*^2 / (C4 d^{7/2} log(1/lambda*)), C4 = " +
                std::to_string(params.c4) + ")",
            best_lambda);

    // Objective diagnostic: the worst estimated leverage over the set when
    // deploying the chosen mixture, and the same for the uniform mixture;
    // keep whichever feasible candidate attains the smaller objective.
    const double n_episodes = static_cast<double>(params.episodes);
    auto max_leverage = [&](const Vec& mu) {
        const Mat sigma = weighted_sum(atoms.raw, mu) + 1e-12 * Mat::Identity(d, d);
        Eigen::LLT<Mat> llt(n_episodes * sigma);
        if (llt.info() != Eigen::Success)
            throw SingularityError("leverage objective: N Sigma not positive definite");
        const Mat inv = llt.solve(Mat::Identity(d, d));
        const FeatureTable& f = data.features();
        const double cap = params.leverage_cap;
        auto reward_at_h = [&f, &inv, cap](int s, int a, Eigen::RowVectorXd& row) {
            const Vec phi = f.phi(s, a);
            row[0] = std::clamp(phi.dot(inv * phi), 0.0, cap);
        };
        const Mat vals =
            detail::estimate_over_prefixes(exp_set, h, reward_at_h, 1, cap, data, initial_state);
        return vals.maxCoeff();
    };

    sol.objective = max_leverage(sol.mu);
    const double uniform_lambda = span_lambda_min(weighted_sum(atoms.raw, uniform));
    if (uniform_lambda >= params.threshold && sol.blend_beta != 1.0) {
        const double uniform_objective = max_leverage(uniform);
        if (uniform_objective < sol.objective) {
            sol.mu = uniform;
            sol.objective = uniform_objective;
            sol.constraint_value = uniform_lambda;
            sol.blend_beta = 1.0;
            sol.used_uniform = true;
        }
    }
    sol.constraint_margin = sol.constraint_value - params.threshold;
    sol.policy = mixture_from_prefix_weights(exp_set, h, sol.mu);
    return sol;
}

ObjectiveSolution solve_exploration_objective_tabular(int h, const Dataset& data,
                                                      const PolicySet& set,
                                                      const ExploreConfig& cfg,
                                                      const DerivedParams& params,
                                                      int initial_state) {
    if (set.size() == 0) throw ContractError("exploration set is empty");
    const FeatureTable& f = data.features();
    const int S = f.S(), A = f.A();
    const int K = S * A;
    const std::size_t P = set.prefix_size(h + 1);

    // Stage 1: occupancy estimate per prefix policy (indicator rewards).
    auto reward_at_h = [&f](int s, int a, Eigen::RowVectorXd& row) {
        row.setZero();
        row[f.index(s, a)] = 1.0;
    };
    const Mat occ = detail::estimate_over_prefixes(set, h, reward_at_h, K, 1.0, data, initial_state);

    // Reachable pairs: some policy attains visible occupancy there.
    std::vector<int> reachable;
    for (int k = 0; k < K; ++k)
        if (occ.col(k).maxCoeff() > kReachableTol) reachable.push_back(k);
    if (reachable.empty()) throw EstimationError("no reachable state-action pair at layer " +
                                                 std::to_string(h));

    // Stage 2: log-det design over diagonal atoms.
    DesignProblem problem;
    problem.ridge = std::max(cfg.ridge, 1e-12);
    problem.labels.reserve(P);
    problem.matrices.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
        Vec diag = occ.row(static_cast<Eigen::Index>(p)).transpose().cwiseMax(0.0);
        const double total = diag.sum();
        if (total > 1.0) diag /= total;
        problem.labels.push_back(std::to_string(p));
        problem.matrices.push_back(diag.asDiagonal());
    }
    DesignResult design = solve_design(problem, cfg.design_tol, cfg.design_max_iter);

    auto min_reachable_occ = [&](const Vec& mu) {
        double worst = std::numeric_limits<double>::infinity();
        for (int k : reachable) worst = std::min(worst, occ.col(k).dot(mu));
        return worst;
    };

    const Vec uniform = Vec::Constant(static_cast<Eigen::Index>(P), 1.0 / static_cast<double>(P));
    ObjectiveSolution sol;
    sol.design_g = design.g;
    sol.design_iterations = design.iterations;
    sol.design_converged = design.converged;

    double best_lambda = -std::numeric_limits<double>::infinity();
    bool feasible = false;
    const double betas[] = {0.0, 0.125, 0.25, 0.5, 1.0};
    for (double beta : betas) {
        const Vec mu = (1.0 - beta) * design.mu + beta * uniform;
        const double lam = min_reachable_occ(mu);
        best_lambda = std::max(best_lambda, lam);
        if (lam >= params.threshold) {
            sol.mu = mu;
            sol.blend_beta = beta;
            sol.constraint_value = lam;
            feasible = true;
            break;
        }
    }
    if (!feasible)
        throw InfeasibleError("tabular exploration objective infeasible at layer " +
                                  std::to_string(h) + ": best reachable occupancy " +
                                  std::to_string(best_lambda) + " below threshold " +
                                  std::to_string(params.threshold),
                              best_lambda);

    // Occupancy-ratio objective, computed directly from the estimates.
    auto ratio_objective = [&](const Vec& mu) {
        double worst = 0;
        for (Eigen::Index p = 0; p < occ.rows(); ++p) {
            double sum = 0;
            for (int k : reachable) {
                const double num = occ(p, k);
                if (num <= 0) continue;
                sum += num / occ.col(k).dot(mu);
            }
            worst = std::max(worst, sum);
        }
        return worst;
    };

    sol.objective = ratio_objective(sol.mu);
    const double uniform_lambda = min_reachable_occ(uniform);
    if (uniform_lambda >= params.threshold && sol.blend_beta != 1.0) {
        const double uniform_objective = ratio_objective(uniform);
        if (uniform_objective < sol.objective) {
            sol.mu = uniform;
            sol.objective = uniform_objective;
            sol.constraint_value = uniform_lambda;
            sol.blend_beta = 1.0;
            sol.used_uniform = true;
        }
    }
    sol.constraint_margin = sol.constraint_value - params.threshold;
    sol.policy = mixture_from_prefix_weights(set, h, sol.mu);
    return sol;
}

ExploreResult explore(TrajectorySampler& env, const FeatureTable& features, int H,
                      int initial_state, const ExploreConfig& cfg, const PolicySet& exp_set) {
    if (exp_set.size() == 0) throw ContractError("explore: exploration set is empty");
    if (exp_set.H() != H) throw ContractError("explore: policy set horizon mismatch");
    const DerivedParams params =
        derive_params(cfg, features.dim(), features.S(), features.A(), H);

    ExploreResult out{Dataset(features, H), DeploymentLog{}};
    out.log.episodes_per_deployment = params.episodes;  // fixed a priori
    out.log.params = params;
    Rng root(cfg.seed);

    for (int h = 0; h < H; ++h) {
        const auto t0 = std::chrono::steady_clock::now();
        ObjectiveSolution sol =
            (cfg.mode == ExploreConfig::Mode::Tabular)
                ? solve_exploration_objective_tabular(h, out.dataset, exp_set, cfg, params,
                                                      initial_state)
                : solve_exploration_objective(h, out.dataset, exp_set, cfg, params, initial_state);

        Rng episode_rng = root.split(static_cast<std::uint64_t>(h));
        for (long n = 0; n < params.episodes; ++n) {
            Trajectory t = env.sample(sol.policy, episode_rng);
            t.deployment_index = h;
            out.dataset.append(t);
        }
        const auto t1 = std::chrono::steady_clock::now();

        DeploymentEntry entry;
        entry.layer = h;
        entry.policy = sol.policy;
        entry.episodes = params.episodes;
        entry.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        entry.objective = sol.objective;
        entry.design_g = sol.design_g;
        entry.design_iterations = sol.design_iterations;
        entry.design_converged = sol.design_converged;
        entry.constraint_value = sol.constraint_value;
        entry.constraint_margin = sol.constraint_margin;
        entry.blend_beta = sol.blend_beta;
        entry.used_uniform = sol.used_uniform;
        out.log.entries.push_back(std::move(entry));
    }
    return out;
}

}  // namespace rfe
