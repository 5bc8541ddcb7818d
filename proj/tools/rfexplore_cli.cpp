// Command-line front end: instance generation, validation, exploration,
// planning, design solving and full experiment runs.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfexplore/errors.hpp"
#include "rfexplore/experiment.hpp"
#include "rfexplore/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;        // contract / model / io errors
constexpr int kExitInfeasible = 2;   // exploration objective infeasible
constexpr int kExitUsage = 64;

std::filesystem::path default_out(const std::string& name) {
    const char* dir = std::getenv("RFEXPLORE_OUT_DIR");
    return std::filesystem::path(dir ? dir : ".") / name;
}

int cmd_generate(const std::string& kind, int d, int S, int A, int H, std::uint64_t seed,
                 const std::string& out) {
    rfe::InstanceSpec spec;
    spec.kind = kind;
    if (kind == "random_linear") {
        spec.d = d;
        spec.S = S;
        spec.A = A;
        spec.H = H;
        spec.seed = seed;
    }
    const rfe::LinearMdp mdp = rfe::build_instance(spec);
    rfe::save_mdp(mdp, out);
    std::cout << "wrote " << out << " (d=" << mdp.dim() << " S=" << mdp.S() << " A=" << mdp.A()
              << " H=" << mdp.H << ")\n";
    return kExitOk;
}

int cmd_validate(const std::string& mdp_path) {
    const rfe::LinearMdp mdp = rfe::load_mdp(mdp_path);
    const auto report = rfe::validate(mdp);
    if (report.empty()) {
        std::cout << "valid\n";
        return kExitOk;
    }
    for (const auto& v : report) std::cout << v.str() << "\n";
    std::cout << report.size() << " violation(s)\n";
    return kExitError;
}

int cmd_explore(const std::string& mdp_path, const std::string& config_path,
                const std::string& out_dataset, const std::string& out_log,
                const std::string& out_exp_set, std::optional<std::uint64_t> seed) {
    const rfe::LinearMdp mdp = rfe::load_mdp(mdp_path);
    rfe::require_valid(mdp);
    rfe::ExploreConfig cfg =
        config_path.empty() ? rfe::ExploreConfig{} : rfe::load_explore_config(config_path);
    if (seed) cfg.seed = *seed;

    rfe::PolicySet exp_set;
    if (cfg.mode == rfe::ExploreConfig::Mode::Tabular) {
        exp_set = rfe::enumerate_tabular_policies(mdp.features, mdp.H);
    } else {
        rfe::Rng rng(cfg.seed ^ 0x5E7B0061ULL);
        exp_set = rfe::build_exp_set(mdp.features, mdp.H, cfg.epsilon, cfg.exp_budget, rng,
                                     {cfg.product_cap});
    }
    rfe::MdpSampler sampler(mdp);
    rfe::ExploreResult result =
        rfe::explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, exp_set);
    rfe::save_dataset(result.dataset, out_dataset);
    rfe::save_deployment_log(result.log, out_log);
    if (!out_exp_set.empty()) rfe::save_policy_set(exp_set, out_exp_set);
    std::cout << result.log.entries.size() << " deployments of "
              << result.log.episodes_per_deployment << " episodes each -> " << out_dataset << "\n";
    return kExitOk;
}

int cmd_plan(const std::string& dataset_path, const std::string& mdp_path,
             const std::string& rewards_path, const std::string& eval_set_path, int eval_budget,
             double epsilon, std::uint64_t seed, const std::string& out) {
    const rfe::LinearMdp mdp = rfe::load_mdp(mdp_path);
    const rfe::Dataset data = rfe::load_dataset(dataset_path, mdp.features);
    const auto rewards = rfe::load_rewards(rewards_path);

    rfe::PolicySet eval_set;
    if (!eval_set_path.empty()) {
        eval_set = rfe::load_policy_set(eval_set_path);
    } else {
        rfe::Rng rng(seed ^ 0x5E7B0061ULL);
        eval_set = rfe::build_eval_set(mdp.features, mdp.H, epsilon, eval_budget, rng);
    }
    const auto results = rfe::plan_many(data, rewards, eval_set, mdp.initial_state);
    // Write one plan result per reward (suffix _i for i > 0).
    for (std::size_t i = 0; i < results.size(); ++i) {
        std::filesystem::path path = out;
        if (results.size() > 1) {
            path = std::filesystem::path(out);
            path.replace_extension("");
            path += "_" + std::to_string(i) + ".json";
        }
        rfe::save_plan_result(results[i], path);
        std::cout << "reward " << results[i].reward_id << ": chosen policy "
                  << results[i].chosen_index << " estimate "
                  << rfe::format_double(results[i].estimated_value) << " -> " << path << "\n";
    }
    return kExitOk;
}

int cmd_design(const std::string& problem_path, double tol, int max_iter, const std::string& out,
               const std::string& trace_csv) {
    const rfe::DesignProblem problem = rfe::load_design_problem(problem_path);
    const rfe::DesignResult result = rfe::solve_design(problem, tol, max_iter);
    rfe::save_design_result(result, out);
    if (!trace_csv.empty()) rfe::save_design_trace_csv(result, trace_csv);
    std::cout << "g = " << rfe::format_double(result.g) << " after " << result.iterations
              << " iterations, " << (result.converged ? "converged" : "not converged") << " -> "
              << out << "\n";
    return kExitOk;
}

int cmd_run(const std::string& spec_path) {
    const rfe::ExperimentSpec spec = rfe::load_experiment_spec(spec_path);
    const rfe::ExperimentReport report = rfe::run_experiment(spec);
    std::cout << report.rows.size() << " rows, " << report.failed_count() << " failed";
    if (!spec.out_dir.empty()) std::cout << " -> " << spec.out_dir << "/report.csv";
    std::cout << "\n";
    if (!report.rows.empty() && report.failed_count() == report.rows.size()) return kExitError;
    return kExitOk;
}

int cmd_report(const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) throw rfe::IoError("cannot open " + report_path);
    std::string line;
    if (!std::getline(in, line)) throw rfe::IoError("empty report");
    std::vector<double> gaps;
    std::size_t rows = 0, failed = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        // columns: seed,reward_index,reward_id,status,N,deployments,...,gap at index 13
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() > 13 && cols[3] == "ok")
            gaps.push_back(std::stod(cols[13]));
        else
            ++failed;
    }
    std::cout << "rows: " << rows << "\nfailed: " << failed << "\n";
    if (!gaps.empty()) {
        std::sort(gaps.begin(), gaps.end());
        std::cout << "median gap: " << rfe::format_double(gaps[gaps.size() / 2]) << "\n";
        std::cout << "max gap: " << rfe::format_double(gaps.back()) << "\n";
    }
    return failed == rows && rows > 0 ? kExitError : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deployment-efficient reward-free exploration for finite linear MDPs"};
    app.require_subcommand(1);

    // generate-mdp
    auto* gen = app.add_subcommand("generate-mdp", "Generate a bundled or random instance");
    std::string gen_kind = "random_linear";
    int gen_d = 3, gen_s = 6, gen_a = 3, gen_h = 3;
    std::uint64_t gen_seed = 1;
    std::string gen_out = default_out("mdp.json").string();
    gen->add_option("--kind", gen_kind, "chain3|symmetric2|hard5|random_linear")
        ->check(CLI::IsMember({"chain3", "symmetric2", "hard5", "random_linear"}));
    gen->add_option("--d", gen_d);
    gen->add_option("--S", gen_s);
    gen->add_option("--A", gen_a);
    gen->add_option("--H", gen_h);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    // validate
    auto* val = app.add_subcommand("validate", "Check every model invariant");
    std::string val_mdp;
    val->add_option("--mdp", val_mdp)->required();

    // explore
    auto* exp = app.add_subcommand("explore", "Run the deployment loop on an instance");
    std::string exp_mdp, exp_config, exp_out_dataset = default_out("dataset.jsonl").string();
    std::string exp_out_log = default_out("deploy_log.json").string(), exp_out_set;
    std::optional<std::uint64_t> exp_seed;
    exp->add_option("--mdp", exp_mdp)->required();
    exp->add_option("--config", exp_config, "explore config JSON");
    exp->add_option("--out-dataset", exp_out_dataset);
    exp->add_option("--out-log", exp_out_log);
    exp->add_option("--out-exp-set", exp_out_set);
    exp->add_option("--seed", exp_seed);

    // plan
    auto* pln = app.add_subcommand("plan", "Evaluate the policy net and pick the greedy policy");
    std::string pln_dataset, pln_mdp, pln_rewards, pln_eval_set;
    std::string pln_out = default_out("plan.json").string();
    int pln_budget = 200;
    double pln_epsilon = 0.1;
    std::uint64_t pln_seed = 1;
    pln->add_option("--dataset", pln_dataset)->required();
    pln->add_option("--mdp", pln_mdp)->required();
    pln->add_option("--rewards", pln_rewards)->required();
    pln->add_option("--eval-set", pln_eval_set, "policy set JSON; built in-process when omitted");
    pln->add_option("--eval-budget", pln_budget);
    pln->add_option("--epsilon", pln_epsilon);
    pln->add_option("--seed", pln_seed);
    pln->add_option("--out", pln_out);

    // design
    auto* des = app.add_subcommand("design", "Solve a generalized design problem");
    std::string des_problem, des_out = default_out("design.json").string(), des_trace;
    double des_tol = 0.05;
    int des_max_iter = -1;
    des->add_option("--problem", des_problem)->required();
    des->add_option("--tol", des_tol);
    des->add_option("--max-iter", des_max_iter);
    des->add_option("--out", des_out);
    des->add_option("--trace-csv", des_trace);

    // run
    auto* run = app.add_subcommand("run", "Run a full experiment spec");
    std::string run_spec;
    run->add_option("--spec", run_spec)->required();

    // report
    auto* rep = app.add_subcommand("report", "Summarize a report CSV");
    std::string rep_path;
    rep->add_option("--report", rep_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*gen) return cmd_generate(gen_kind, gen_d, gen_s, gen_a, gen_h, gen_seed, gen_out);
        if (*val) return cmd_validate(val_mdp);
        if (*exp)
            return cmd_explore(exp_mdp, exp_config, exp_out_dataset, exp_out_log, exp_out_set,
                               exp_seed);
        if (*pln)
            return cmd_plan(pln_dataset, pln_mdp, pln_rewards, pln_eval_set, pln_budget,
                            pln_epsilon, pln_seed, pln_out);
        if (*des) return cmd_design(des_problem, des_tol, des_max_iter, des_out, des_trace);
        if (*run) return cmd_run(run_spec);
        if (*rep) return cmd_report(rep_path);
    } catch (const rfe::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const rfe::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}
