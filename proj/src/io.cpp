#include "rfexplore/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfexplore/errors.hpp"

namespace rfe {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

json to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw IoError("expected a non-empty matrix");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols)
            throw IoError("ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

json to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vec vec_from_json(const json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

json rule_to_json(const PolicyRule& rule) {
    json j;
    if (rule.kind == PolicyRule::Kind::LinearArgmax) {
        j["kind"] = "linear_argmax";
        j["w"] = to_json(rule.weights);
    } else {
        j["kind"] = "table";
        j["actions"] = rule.actions;
    }
    return j;
}

PolicyRule rule_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "linear_argmax") return PolicyRule::linear_argmax(vec_from_json(j.at("w")));
    if (kind == "table") return PolicyRule::table(j.at("actions").get<std::vector<int>>());
    throw IoError("unknown policy rule kind: " + kind);
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
    return j;
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void save_mdp(const LinearMdp& mdp, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "linear_mdp";
    j["d"] = mdp.dim();
    j["S"] = mdp.S();
    j["A"] = mdp.A();
    j["H"] = mdp.H;
    j["initial_state"] = mdp.initial_state;
    json feats = json::array();
    json mask = json::array();
    for (int s = 0; s < mdp.S(); ++s) {
        json mask_row = json::array();
        for (int a = 0; a < mdp.A(); ++a) {
            feats.push_back(to_json(Vec(mdp.features.phi(s, a))));
            mask_row.push_back(mdp.features.valid(s, a) ? 1 : 0);
        }
        mask.push_back(std::move(mask_row));
    }
    j["features"] = std::move(feats);  // row s*A+a
    j["action_mask"] = std::move(mask);
    json measures = json::array();
    for (const Mat& mu : mdp.measures) measures.push_back(to_json(mu));
    j["measures"] = std::move(measures);
    json thetas = json::array();
    for (const Vec& t : mdp.thetas) thetas.push_back(to_json(t));
    j["thetas"] = std::move(thetas);
    write_json_file(j, path);
}

LinearMdp load_mdp(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    try {
        const int d = j.at("d").get<int>();
        const int S = j.at("S").get<int>();
        const int A = j.at("A").get<int>();
        LinearMdp mdp;
        mdp.H = j.at("H").get<int>();
        mdp.initial_state = j.at("initial_state").get<int>();
        mdp.features = FeatureTable(S, A, d);
        const json& feats = j.at("features");
        if (static_cast<int>(feats.size()) != S * A) throw IoError("feature row count mismatch");
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                mdp.features.set_phi(s, a, vec_from_json(feats[static_cast<std::size_t>(s * A + a)]));
        if (j.contains("action_mask")) {
            const json& mask = j.at("action_mask");
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a)
                    mdp.features.set_valid(s, a, mask[static_cast<std::size_t>(s)]
                                                     [static_cast<std::size_t>(a)].get<int>() != 0);
        }
        for (const auto& mu : j.at("measures")) mdp.measures.push_back(mat_from_json(mu));
        for (const auto& t : j.at("thetas")) mdp.thetas.push_back(vec_from_json(t));
        return mdp;
    } catch (const json::exception& e) {
        throw IoError("malformed MDP file " + path.string() + ": " + e.what());
    }
}

void save_policy(const DeterministicPolicy& policy, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "deterministic_policy";
    json layers = json::array();
    for (const auto& r : policy.layers) layers.push_back(rule_to_json(r));
    j["layers"] = std::move(layers);
    write_json_file(j, path);
}

DeterministicPolicy load_policy(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    DeterministicPolicy p;
    for (const auto& r : j.at("layers")) p.layers.push_back(rule_from_json(r));
    return p;
}

void save_policy_set(const PolicySet& set, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "policy_set";
    const char* prov = "custom";
    switch (set.provenance) {
        case PolicySet::Provenance::EvalNet: prov = "eval_net"; break;
        case PolicySet::Provenance::ExpNet: prov = "exp_net"; break;
        case PolicySet::Provenance::TabularEnum: prov = "tabular_enum"; break;
        case PolicySet::Provenance::Custom: prov = "custom"; break;
    }
    j["provenance"] = prov;
    j["resolution"] = set.resolution;
    j["seed"] = set.seed;
    j["net_log_size"] = set.net_log_size;
    j["eval_prefix"] = set.eval_prefix;
    json layers = json::array();
    for (const auto& layer : set.layers) {
        json rules = json::array();
        for (const auto& r : layer) rules.push_back(rule_to_json(r));
        layers.push_back(std::move(rules));
    }
    j["layers"] = std::move(layers);
    write_json_file(j, path);
}

PolicySet load_policy_set(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    PolicySet set;
    const std::string prov = j.value("provenance", "custom");
    if (prov == "eval_net") set.provenance = PolicySet::Provenance::EvalNet;
    else if (prov == "exp_net") set.provenance = PolicySet::Provenance::ExpNet;
    else if (prov == "tabular_enum") set.provenance = PolicySet::Provenance::TabularEnum;
    else set.provenance = PolicySet::Provenance::Custom;
    set.resolution = j.value("resolution", 0.0);
    set.seed = j.value("seed", std::uint64_t{0});
    set.net_log_size = j.value("net_log_size", 0.0);
    set.eval_prefix = j.value("eval_prefix", 0);
    for (const auto& layer : j.at("layers")) {
        std::vector<PolicyRule> rules;
        for (const auto& r : layer) rules.push_back(rule_from_json(r));
        set.layers.push_back(std::move(rules));
    }
    return set;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    json header;
    header["type"] = "dataset";
    header["schema_version"] = kSchemaVersion;
    header["H"] = data.H();
    header["S"] = data.features().S();
    header["A"] = data.features().A();
    if (data.initial_state()) header["initial_state"] = *data.initial_state();
    out << header.dump() << "\n";
    for (const auto& t : data.trajectories()) {
        json line;
        line["deployment"] = t.deployment_index;
        line["states"] = t.states;
        line["actions"] = t.actions;
        out << line.dump() << "\n";
    }
    json footer;
    footer["type"] = "checksum";
    footer["episodes"] = data.episode_count();
    footer["hash"] = data.checksum();
    out << footer.dump() << "\n";
}

Dataset load_dataset(const std::filesystem::path& path, const FeatureTable& features) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset file is empty: " + path.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("bad dataset header: " + std::string(e.what()));
    }
    if (header.value("type", "") != "dataset") throw IoError("not a dataset file");
    const int H = header.at("H").get<int>();
    Dataset data(features, H);
    bool saw_footer = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("bad dataset line: " + std::string(e.what()));
        }
        if (j.value("type", "") == "checksum") {
            // Gram matrices were recomputed during append; verify the
            // embedded content hash against them.
            if (j.at("episodes").get<std::size_t>() != data.episode_count())
                throw IoError("dataset episode count differs from checksum line");
            if (j.at("hash").get<std::uint64_t>() != data.checksum())
                throw IoError("dataset content hash mismatch");
            saw_footer = true;
            continue;
        }
        Trajectory t;
        t.deployment_index = j.at("deployment").get<int>();
        t.states = j.at("states").get<std::vector<int>>();
        t.actions = j.at("actions").get<std::vector<int>>();
        data.append(t);
    }
    if (!saw_footer) throw IoError("dataset file has no checksum line: " + path.string());
    return data;
}

void save_design_problem(const DesignProblem& problem, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "design_problem";
    j["labels"] = problem.labels;
    j["ridge"] = problem.ridge;
    json mats = json::array();
    for (const Mat& m : problem.matrices) mats.push_back(to_json(m));
    j["matrices"] = std::move(mats);
    write_json_file(j, path);
}

DesignProblem load_design_problem(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    DesignProblem p;
    try {
        p.labels = j.at("labels").get<std::vector<std::string>>();
        p.ridge = j.value("ridge", 0.0);
        for (const auto& m : j.at("matrices")) p.matrices.push_back(mat_from_json(m));
    } catch (const json::exception& e) {
        throw IoError("malformed design problem: " + std::string(e.what()));
    }
    return p;
}

void save_design_result(const DesignResult& result, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "design_result";
    j["mu"] = to_json(result.mu);
    j["V"] = to_json(result.V);
    j["g"] = result.g;
    j["iterations"] = result.iterations;
    j["converged"] = result.converged;
    write_json_file(j, path);
}

void save_design_trace_csv(const DesignResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step,logdet,g,grad_identity,picked,gamma\n";
    for (const auto& row : result.trace)
        out << row.step << "," << format_double(row.logdet) << "," << format_double(row.g) << ","
            << format_double(row.grad_identity) << "," << row.picked << ","
            << format_double(row.gamma) << "\n";
}

void save_rewards(const std::vector<RewardFunction>& rewards, const std::filesystem::path& path) {
    json arr = json::array();
    for (const auto& r : rewards) {
        if (r.kind != RewardFunction::Kind::Linear)
            throw ContractError("only linear rewards are serializable");
        json item;
        item["id"] = r.id;
        json thetas = json::array();
        for (const Vec& t : r.thetas) thetas.push_back(to_json(t));
        item["thetas"] = std::move(thetas);
        arr.push_back(std::move(item));
    }
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "rewards";
    j["rewards"] = std::move(arr);
    write_json_file(j, path);
}

std::vector<RewardFunction> load_rewards(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    std::vector<RewardFunction> out;
    try {
        for (const auto& item : j.at("rewards")) {
            std::vector<Vec> thetas;
            for (const auto& t : item.at("thetas")) thetas.push_back(vec_from_json(t));
            out.push_back(RewardFunction::linear(std::move(thetas), item.value("id", "")));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed rewards file: " + std::string(e.what()));
    }
    return out;
}

void save_deployment_log(const DeploymentLog& log, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "deployment_log";
    j["episodes_per_deployment"] = log.episodes_per_deployment;
    j["iota"] = log.params.iota;
    j["eps_bar"] = log.params.eps_bar;
    j["threshold"] = log.params.threshold;
    j["leverage_cap"] = log.params.leverage_cap;
    j["c4"] = log.params.c4;
    json entries = json::array();
    for (const auto& e : log.entries) {
        json item;
        item["layer"] = e.layer;
        item["episodes"] = e.episodes;
        item["wall_seconds"] = e.wall_seconds;
        item["objective"] = e.objective;
        item["design_g"] = e.design_g;
        item["design_iterations"] = e.design_iterations;
        item["design_converged"] = e.design_converged;
        item["constraint_value"] = e.constraint_value;
        item["constraint_margin"] = e.constraint_margin;
        item["blend_beta"] = e.blend_beta;
        item["used_uniform"] = e.used_uniform;
        item["components"] = e.policy.components.size();
        entries.push_back(std::move(item));
    }
    j["deployments"] = std::move(entries);
    write_json_file(j, path);
}

void save_plan_result(const PlanResult& result, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "plan_result";
    j["reward_id"] = result.reward_id;
    j["chosen_index"] = result.chosen_index;
    j["estimated_value"] = result.estimated_value;
    json layers = json::array();
    for (const auto& r : result.chosen.layers) layers.push_back(rule_to_json(r));
    j["chosen"] = std::move(layers);
    j["estimates"] = result.estimates;
    write_json_file(j, path);
}

ExploreConfig load_explore_config(const std::filesystem::path& path) {
    const json j = load_json_file(path);
    ExploreConfig cfg;
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.delta = j.value("delta", cfg.delta);
    cfg.c1 = j.value("c1", cfg.c1);
    cfg.c2 = j.value("c2", cfg.c2);
    cfg.c3 = j.value("c3", cfg.c3);
    if (j.contains("n_override") && !j.at("n_override").is_null())
        cfg.n_override = j.at("n_override").get<long>();
    cfg.exp_budget = j.value("exp_budget", cfg.exp_budget);
    cfg.product_cap = j.value("product_cap", cfg.product_cap);
    cfg.design_tol = j.value("design_tol", cfg.design_tol);
    cfg.design_max_iter = j.value("design_max_iter", cfg.design_max_iter);
    cfg.ridge = j.value("ridge", cfg.ridge);
    const std::string mode = j.value("mode", "linear");
    if (mode == "tabular") cfg.mode = ExploreConfig::Mode::Tabular;
    else if (mode == "linear") cfg.mode = ExploreConfig::Mode::Linear;
    else throw IoError("unknown explore mode: " + mode);
    cfg.threshold_scale = j.value("threshold_scale", cfg.threshold_scale);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

void save_explore_config(const ExploreConfig& cfg, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["type"] = "explore_config";
    j["epsilon"] = cfg.epsilon;
    j["delta"] = cfg.delta;
    j["c1"] = cfg.c1;
    j["c2"] = cfg.c2;
    j["c3"] = cfg.c3;
    if (cfg.n_override) j["n_override"] = *cfg.n_override;
    j["exp_budget"] = cfg.exp_budget;
    j["product_cap"] = cfg.product_cap;
    j["design_tol"] = cfg.design_tol;
    j["design_max_iter"] = cfg.design_max_iter;
    j["ridge"] = cfg.ridge;
    j["mode"] = cfg.mode == ExploreConfig::Mode::Tabular ? "tabular" : "linear";
    j["threshold_scale"] = cfg.threshold_scale;
    j["seed"] = cfg.seed;
    write_json_file(j, path);
}

}  // namespace rfe
