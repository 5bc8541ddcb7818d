#include "rfexplore/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfexplore/errors.hpp"
#include "rfexplore/io.hpp"

namespace rfe {

using nlohmann::json;

LinearMdp bundled_chain3() {
    // Chain 0 - 1 - 2 starting in the middle; action 0 drifts left, action 1
    // drifts right, both with a 0.2 stay probability.
    const int S = 3, A = 2, H = 3;
    Mat tr(S * A, S);
    tr.setZero();
    auto set_row = [&tr](int s, int a, int target, double move) {
        tr(s * 2 + a, target) += move;
        tr(s * 2 + a, s) += 1.0 - move;
    };
    for (int s = 0; s < S; ++s) {
        set_row(s, 0, std::max(0, s - 1), 0.8);
        set_row(s, 1, std::min(S - 1, s + 1), 0.8);
    }
    Mat rw(S, A);
    rw << 0.1, 0.2, 0.0, 0.3, 0.5, 0.9;
    return tabular_to_linear(std::vector<Mat>(H, tr), std::vector<Mat>(H, rw), 1);
}

LinearMdp bundled_symmetric2() {
    // Two states, two actions with canonical features; every transition is
    // uniform, so both design atoms at layer 1 are orthogonal rank-1.
    const int S = 2, A = 2, H = 2;
    const int d = 2;
    LinearMdp mdp;
    mdp.H = H;
    mdp.initial_state = 0;
    mdp.features = FeatureTable(S, A, d);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            Vec e = Vec::Zero(d);
            e[a] = 1.0;
            mdp.features.set_phi(s, a, e);
        }
    for (int h = 0; h < H; ++h) {
        mdp.measures.push_back(Mat::Constant(d, S, 0.5));
        Vec theta(d);
        theta << 0.5, 0.5;
        mdp.thetas.push_back(theta);
    }
    return mdp;
}

LinearMdp bundled_hard5() {
    const int d = 5, H = 3;
    Mat arms(H, d - 2);
    arms << 0.30, 0.55, 0.20,
            0.45, 0.90, 0.35,
            0.25, 0.60, 0.40;
    return build_hard_instance(d, H, arms);
}

LinearMdp bundled_random_linear() {
    Rng rng(20240817u);
    return generate_random_linear_mdp(3, 6, 3, 3, rng);
}

RewardFunction sample_linear_reward(const LinearMdp& mdp, Rng& rng, const std::string& id) {
    const FeatureTable& f = mdp.features;
    const int d = f.dim();
    const double norm_cap = std::sqrt(static_cast<double>(d));

    // Every bundled or generated instance has nonnegative features of a
    // common l1 mass, so ones/mass is a constant-shift direction.
    double mass = -1;
    bool shiftable = true;
    for (int s = 0; s < f.S() && shiftable; ++s)
        for (int a = 0; a < f.A(); ++a) {
            if (!f.valid(s, a)) continue;
            const Vec phi = f.phi(s, a);
            if (phi.minCoeff() < -1e-12) {
                shiftable = false;
                break;
            }
            const double m = phi.sum();
            if (mass < 0) mass = m;
            else if (std::abs(m - mass) > 1e-9) {
                shiftable = false;
                break;
            }
        }
    if (!shiftable || mass <= 0)
        throw ContractError("sample_linear_reward: features lack a common l1 mass");
    const Vec shift = Vec::Ones(d) / mass;  // phi . shift == 1 for every pair

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Vec> thetas;
        thetas.reserve(static_cast<std::size_t>(mdp.H));
        bool ok = true;
        for (int h = 0; h < mdp.H && ok; ++h) {
            Vec raw(d);
            for (int i = 0; i < d; ++i) raw[i] = rng.uniform(-1.0, 1.0);
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (int s = 0; s < f.S(); ++s)
                for (int a = 0; a < f.A(); ++a) {
                    if (!f.valid(s, a)) continue;
                    const double r = f.phi(s, a).dot(raw);
                    lo = std::min(lo, r);
                    hi = std::max(hi, r);
                }
            if (hi - lo < 0.25) {
                ok = false;
                break;
            }
            Vec theta = (raw - lo * shift) / (hi - lo);
            if (theta.norm() > norm_cap) theta *= norm_cap / theta.norm();
            thetas.push_back(theta);
        }
        if (!ok) continue;
        RewardFunction reward = RewardFunction::linear(std::move(thetas), id);
        bool in_range = true;
        for (int h = 0; h < mdp.H && in_range; ++h)
            for (int s = 0; s < f.S() && in_range; ++s)
                for (int a = 0; a < f.A(); ++a) {
                    if (!f.valid(s, a)) continue;
                    const double r = reward.value(f, h, s, a);
                    if (r < -1e-12 || r > 1.0 + 1e-12) {
                        in_range = false;
                        break;
                    }
                }
        if (in_range) return reward;
    }
    throw ContractError("sample_linear_reward: rejection sampling failed");
}

LinearMdp build_instance(const InstanceSpec& spec) {
    if (spec.kind == "chain3") return bundled_chain3();
    if (spec.kind == "symmetric2") return bundled_symmetric2();
    if (spec.kind == "hard5") return bundled_hard5();
    if (spec.kind == "random_linear") {
        if (spec.d || spec.S || spec.A || spec.H || spec.seed) {
            Rng rng(spec.seed.value_or(20240817u));
            return generate_random_linear_mdp(spec.d.value_or(3), spec.S.value_or(6),
                                              spec.A.value_or(3), spec.H.value_or(3), rng);
        }
        return bundled_random_linear();
    }
    if (spec.kind == "file") return load_mdp(spec.path);
    throw ContractError("unknown instance kind: " + spec.kind);
}

namespace {

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ";";
        out += format_double(v[i]);
    }
    return out;
}

// Max exact uncertainty at one layer over every policy of the set, by a
// forward walk over the per-layer rule lists sharing common prefixes.
// Matches exact_uncertainty per policy: E_pi u(s_h, a_h) with
// u = ||phi||_{Lambda_h^-1}.
double max_uncertainty(const PolicySet& set, const Dataset& data, int layer,
                       const LinearMdp& mdp) {
    const FeatureTable& f = mdp.features;
    const int S = f.S(), A = f.A();
    Mat u = Mat::Zero(S, A);
    const auto& llt = data.gram_factor(layer);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            if (!f.valid(s, a)) continue;
            const Vec phi = f.phi(s, a);
            u(s, a) = std::sqrt(std::max(0.0, phi.dot(llt.solve(phi))));
        }

    double worst = 0;
    std::function<void(int, const Vec&)> walk = [&](int l, const Vec& p) {
        for (const auto& rule : set.layers[static_cast<std::size_t>(l)]) {
            if (l == layer) {
                double val = 0;
                for (int s = 0; s < S; ++s)
                    if (p[s] > 0) val += p[s] * u(s, policy_action(rule, f, s));
                worst = std::max(worst, val);
            } else {
                Vec p_next = Vec::Zero(S);
                for (int s = 0; s < S; ++s)
                    if (p[s] > 0) p_next += p[s] * mdp.next_state_dist(l, s, policy_action(rule, f, s));
                walk(l + 1, p_next);
            }
        }
    };
    Vec p0 = Vec::Zero(S);
    p0[mdp.initial_state] = 1.0;
    walk(0, p0);
    return worst;
}

}  // namespace

void ExperimentReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "seed,reward_index,reward_id,status,N,deployments,H,d,S,A,"
           "estimated_value,chosen_true_value,optimal_value,gap,"
           "design_g,constraint_margins,unc_before,unc_after\n";
    for (const auto& r : rows) {
        out << r.seed << "," << r.reward_index << "," << r.reward_id << "," << r.status << ","
            << r.n_per_deployment << "," << r.deployments << "," << r.H << "," << r.d << ","
            << r.S << "," << r.A << "," << format_double(r.estimated_value) << ","
            << format_double(r.chosen_true_value) << "," << format_double(r.optimal_value) << ","
            << format_double(r.gap) << "," << join_doubles(r.design_g) << ","
            << join_doubles(r.constraint_margins) << "," << join_doubles(r.unc_before) << ","
            << join_doubles(r.unc_after) << "\n";
    }
}

void ExperimentReport::write_summary_json(const std::filesystem::path& path) const {
    json j;
    j["schema_version"] = 1;
    j["type"] = "experiment_summary";
    j["rows"] = rows.size();
    j["failed"] = failed_count();
    double total_runtime = 0;
    std::vector<double> gaps;
    for (const auto& r : rows) {
        total_runtime += r.runtime_seconds;
        if (r.status == "ok") gaps.push_back(r.gap);
    }
    j["total_runtime_seconds"] = total_runtime;
    if (!gaps.empty()) {
        std::sort(gaps.begin(), gaps.end());
        j["median_gap"] = gaps[gaps.size() / 2];
        j["max_gap"] = gaps.back();
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::size_t ExperimentReport::failed_count() const {
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.status != "ok") ++n;
    return n;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
    const LinearMdp mdp = build_instance(spec.instance);
    require_valid(mdp);
    const int H = mdp.H;

    // Shared policy sets: the exploration set and its evaluation subset.
    ExploreConfig cfg = spec.explore;
    SetBuildOptions exp_opts{cfg.product_cap};
    Rng set_rng(cfg.seed ^ 0x5E7B0061ULL);
    PolicySet exp_set, eval_set;
    if (cfg.mode == ExploreConfig::Mode::Tabular) {
        exp_set = enumerate_tabular_policies(mdp.features, H);
        eval_set = exp_set;
    } else {
        exp_set = build_exp_set(mdp.features, H, cfg.epsilon, cfg.exp_budget, set_rng, exp_opts);
        Rng eval_rng(cfg.seed ^ 0x5E7B0061ULL);
        SetBuildOptions eval_opts{spec.eval_product_cap};
        eval_set = build_eval_set(mdp.features, H, cfg.epsilon, spec.eval_budget, eval_rng, eval_opts);
    }

    // Rewards shared across seeds; the instance's own reward comes first.
    std::vector<RewardFunction> rewards;
    Rng reward_rng(spec.rewards.seed);
    if (spec.rewards.include_native)
        rewards.push_back(RewardFunction::linear(mdp.thetas, "native"));
    while (static_cast<int>(rewards.size()) < spec.rewards.count)
        rewards.push_back(
            sample_linear_reward(mdp, reward_rng, "r" + std::to_string(rewards.size())));

    const bool write_artifacts = !spec.out_dir.empty();
    std::filesystem::path out_dir(spec.out_dir);
    if (write_artifacts) {
        std::filesystem::create_directories(out_dir);
        save_mdp(mdp, out_dir / "mdp.json");
        save_rewards(rewards, out_dir / "rewards.json");
        save_policy_set(eval_set, out_dir / "eval_set.json");
        save_policy_set(exp_set, out_dir / "exp_set.json");
    }

    ExperimentReport report;
    for (std::uint64_t run_seed : spec.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        ExperimentRow base;
        base.seed = run_seed;
        base.H = H;
        base.d = mdp.dim();
        base.S = mdp.S();
        base.A = mdp.A();

        ExploreConfig run_cfg = cfg;
        run_cfg.seed = run_seed;
        MdpSampler sampler(mdp);

        try {
            // Exploration phase, tracking the per-layer uncertainty trace
            // around each deployment.
            const DerivedParams params =
                derive_params(run_cfg, mdp.dim(), mdp.S(), mdp.A(), H);
            base.n_per_deployment = params.episodes;

            ExploreResult result{Dataset(mdp.features, H), DeploymentLog{}};
            result.log.episodes_per_deployment = params.episodes;
            result.log.params = params;
            Rng root(run_cfg.seed);
            std::vector<double> unc_before(static_cast<std::size_t>(H), 0);
            std::vector<double> unc_after(static_cast<std::size_t>(H), 0);
            for (int h = 0; h < H; ++h) {
                if (spec.oracle_checks)
                    unc_before[static_cast<std::size_t>(h)] =
                        max_uncertainty(exp_set, result.dataset, h, mdp);
                ObjectiveSolution sol =
                    (run_cfg.mode == ExploreConfig::Mode::Tabular)
                        ? solve_exploration_objective_tabular(h, result.dataset, exp_set, run_cfg,
                                                              params, mdp.initial_state)
                        : solve_exploration_objective(h, result.dataset, exp_set, run_cfg, params,
                                                      mdp.initial_state);
                Rng episode_rng = root.split(static_cast<std::uint64_t>(h));
                for (long n = 0; n < params.episodes; ++n) {
                    Trajectory t = sampler.sample(sol.policy, episode_rng);
                    t.deployment_index = h;
                    result.dataset.append(t);
                }
                if (spec.oracle_checks)
                    unc_after[static_cast<std::size_t>(h)] =
                        max_uncertainty(exp_set, result.dataset, h, mdp);
                DeploymentEntry entry;
                entry.layer = h;
                entry.policy = sol.policy;
                entry.episodes = params.episodes;
                entry.objective = sol.objective;
                entry.design_g = sol.design_g;
                entry.design_iterations = sol.design_iterations;
                entry.design_converged = sol.design_converged;
                entry.constraint_value = sol.constraint_value;
                entry.constraint_margin = sol.constraint_margin;
                entry.blend_beta = sol.blend_beta;
                entry.used_uniform = sol.used_uniform;
                result.log.entries.push_back(std::move(entry));
            }
            base.deployments = static_cast<int>(result.log.entries.size());
            for (const auto& e : result.log.entries) {
                base.design_g.push_back(e.design_g);
                base.constraint_margins.push_back(e.constraint_margin);
            }
            base.unc_before = unc_before;
            base.unc_after = unc_after;

            if (write_artifacts) {
                const std::string tag = "seed" + std::to_string(run_seed);
                save_dataset(result.dataset, out_dir / ("dataset_" + tag + ".jsonl"));
                save_deployment_log(result.log, out_dir / ("deploy_log_" + tag + ".json"));
            }

            // Planning phase over every reward.
            const std::vector<PlanResult> plans =
                plan_many(result.dataset, rewards, eval_set, mdp.initial_state);
            const auto t1 = std::chrono::steady_clock::now();
            const double elapsed = std::chrono::duration<double>(t1 - t0).count();
            for (std::size_t ri = 0; ri < plans.size(); ++ri) {
                ExperimentRow row = base;
                row.reward_index = static_cast<int>(ri);
                row.reward_id = rewards[ri].id;
                row.estimated_value = plans[ri].estimated_value;
                if (spec.oracle_checks) {
                    row.chosen_true_value = dp_policy_value(mdp, plans[ri].chosen, rewards[ri]);
                    row.optimal_value = dp_optimal(mdp, rewards[ri]).first;
                    row.gap = row.optimal_value - row.chosen_true_value;
                }
                row.runtime_seconds = elapsed / static_cast<double>(plans.size());
                report.rows.push_back(std::move(row));
            }
        } catch (const Error& e) {
            // One failed row per reward so row accounting stays exact.
            for (std::size_t ri = 0; ri < rewards.size(); ++ri) {
                ExperimentRow row = base;
                row.reward_index = static_cast<int>(ri);
                row.reward_id = rewards[ri].id;
                row.status = std::string("failed: ") + e.what();
                std::replace(row.status.begin(), row.status.end(), ',', ';');
                std::replace(row.status.begin(), row.status.end(), '\n', ' ');
                report.rows.push_back(std::move(row));
            }
        }
    }

    if (write_artifacts) {
        report.write_csv(out_dir / "report.csv");
        report.write_summary_json(out_dir / "summary.json");
    }
    return report;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
    ExperimentSpec spec;
    try {
        const json& inst = j.at("instance");
        spec.instance.kind = inst.value("kind", "chain3");
        spec.instance.path = inst.value("path", "");
        if (inst.contains("d")) spec.instance.d = inst.at("d").get<int>();
        if (inst.contains("S")) spec.instance.S = inst.at("S").get<int>();
        if (inst.contains("A")) spec.instance.A = inst.at("A").get<int>();
        if (inst.contains("H")) spec.instance.H = inst.at("H").get<int>();
        if (inst.contains("seed")) spec.instance.seed = inst.at("seed").get<std::uint64_t>();
        if (j.contains("explore")) {
            // Reuse the explore-config parser via a temporary file-free path.
            const json& e = j.at("explore");
            ExploreConfig cfg;
            cfg.epsilon = e.value("epsilon", cfg.epsilon);
            cfg.delta = e.value("delta", cfg.delta);
            cfg.c1 = e.value("c1", cfg.c1);
            cfg.c2 = e.value("c2", cfg.c2);
            cfg.c3 = e.value("c3", cfg.c3);
            if (e.contains("n_override") && !e.at("n_override").is_null())
                cfg.n_override = e.at("n_override").get<long>();
            cfg.exp_budget = e.value("exp_budget", cfg.exp_budget);
            cfg.product_cap = e.value("product_cap", cfg.product_cap);
            cfg.design_tol = e.value("design_tol", cfg.design_tol);
            cfg.design_max_iter = e.value("design_max_iter", cfg.design_max_iter);
            cfg.ridge = e.value("ridge", cfg.ridge);
            const std::string mode = e.value("mode", "linear");
            cfg.mode = (mode == "tabular") ? ExploreConfig::Mode::Tabular
                                           : ExploreConfig::Mode::Linear;
            cfg.threshold_scale = e.value("threshold_scale", cfg.threshold_scale);
            cfg.seed = e.value("seed", cfg.seed);
            spec.explore = cfg;
        }
        spec.eval_budget = j.value("eval_budget", spec.eval_budget);
        spec.eval_product_cap = j.value("eval_product_cap", spec.eval_product_cap);
        if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("rewards")) {
            spec.rewards.count = j.at("rewards").value("count", spec.rewards.count);
            spec.rewards.seed = j.at("rewards").value("seed", spec.rewards.seed);
            spec.rewards.include_native =
                j.at("rewards").value("include_native", spec.rewards.include_native);
        }
        spec.oracle_checks = j.value("oracle_checks", spec.oracle_checks);
        spec.out_dir = j.value("out_dir", spec.out_dir);
    } catch (const json::exception& e) {
        throw IoError("malformed experiment spec: " + std::string(e.what()));
    }
    return spec;
}

}  // namespace rfe
