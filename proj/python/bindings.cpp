// Python bindings for the core operations: instance construction, dynamic
// programming oracles, policy sets, the design solver and the full
// explore/plan pipeline.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rfexplore/design.hpp"
#include "rfexplore/experiment.hpp"
#include "rfexplore/explorer.hpp"
#include "rfexplore/io.hpp"
#include "rfexplore/planner.hpp"

namespace py = pybind11;
using namespace rfe;

namespace {

RewardFunction reward_from_thetas(const std::vector<Vec>& thetas, const std::string& id) {
    return RewardFunction::linear(thetas, id);
}

}  // namespace

PYBIND11_MODULE(_rfexplore, m) {
    m.doc() = "Reward-free exploration for finite linear MDPs";

    // Translators run most-recently-registered first, so the base goes in
    // ahead of the derived infeasibility error.
    py::register_exception<Error>(m, "RfeError");
    py::register_exception<InfeasibleError>(m, "Infeasible");

    py::class_<FeatureTable>(m, "FeatureTable")
        .def(py::init<int, int, int>(), py::arg("S"), py::arg("A"), py::arg("d"))
        .def_property_readonly("S", &FeatureTable::S)
        .def_property_readonly("A", &FeatureTable::A)
        .def_property_readonly("d", &FeatureTable::dim)
        .def("phi", [](const FeatureTable& f, int s, int a) { return Vec(f.phi(s, a)); })
        .def("set_phi", &FeatureTable::set_phi)
        .def("valid", &FeatureTable::valid)
        .def("set_valid", &FeatureTable::set_valid);

    py::class_<LinearMdp>(m, "LinearMdp")
        .def(py::init<>())
        .def_readwrite("features", &LinearMdp::features)
        .def_readwrite("H", &LinearMdp::H)
        .def_readwrite("initial_state", &LinearMdp::initial_state)
        .def_readwrite("measures", &LinearMdp::measures)
        .def_readwrite("thetas", &LinearMdp::thetas)
        .def_property_readonly("S", &LinearMdp::S)
        .def_property_readonly("A", &LinearMdp::A)
        .def_property_readonly("d", &LinearMdp::dim)
        .def("reward", &LinearMdp::reward)
        .def("next_state_dist", &LinearMdp::next_state_dist);

    py::class_<RewardFunction>(m, "RewardFunction")
        .def_static("linear", &reward_from_thetas, py::arg("thetas"), py::arg("id") = "")
        .def_static("zero", &RewardFunction::zero)
        .def_readonly("id", &RewardFunction::id);

    py::class_<PolicyRule>(m, "PolicyRule")
        .def_static("linear_argmax", &PolicyRule::linear_argmax)
        .def_static("table", &PolicyRule::table);

    py::class_<DeterministicPolicy>(m, "DeterministicPolicy")
        .def(py::init<>())
        .def_readwrite("layers", &DeterministicPolicy::layers)
        .def("action", [](const DeterministicPolicy& p, const FeatureTable& f, int h, int s) {
            return policy_action(p, f, h, s);
        });

    py::class_<MixturePolicy>(m, "MixturePolicy")
        .def_static("single", &MixturePolicy::single)
        .def("check", &MixturePolicy::check);

    py::class_<PolicySet>(m, "PolicySet")
        .def_property_readonly("size", &PolicySet::size)
        .def("policy_at", &PolicySet::policy_at)
        .def_readonly("eval_prefix", &PolicySet::eval_prefix);

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("deployment_index", &Trajectory::deployment_index)
        .def_readonly("states", &Trajectory::states)
        .def_readonly("actions", &Trajectory::actions);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<FeatureTable, int>())
        .def("append", &Dataset::append)
        .def_property_readonly("episode_count", &Dataset::episode_count)
        .def("gram", &Dataset::gram, py::return_value_policy::copy)
        .def("checksum", &Dataset::checksum);

    py::class_<Violation>(m, "Violation").def("__str__", &Violation::str);

    m.def("validate", &validate);
    m.def("dp_policy_value",
          py::overload_cast<const LinearMdp&, const DeterministicPolicy&, const RewardFunction&>(
              &dp_policy_value));
    m.def("dp_optimal", &dp_optimal);
    m.def("dp_occupancy",
          py::overload_cast<const LinearMdp&, const DeterministicPolicy&, int>(&dp_occupancy));
    m.def("expected_feature_cov",
          py::overload_cast<const LinearMdp&, const DeterministicPolicy&, int>(
              &expected_feature_cov));
    m.def("tabular_to_linear", &tabular_to_linear);
    m.def(
        "generate_random_linear_mdp",
        [](int d, int S, int A, int H, std::uint64_t seed) {
            Rng rng(seed);
            return generate_random_linear_mdp(d, S, A, H, rng);
        },
        py::arg("d"), py::arg("S"), py::arg("A"), py::arg("H"), py::arg("seed"));
    m.def("build_hard_instance", &build_hard_instance);
    m.def("bundled_chain3", &bundled_chain3);
    m.def("bundled_symmetric2", &bundled_symmetric2);
    m.def("bundled_hard5", &bundled_hard5);
    m.def("bundled_random_linear", &bundled_random_linear);

    m.def(
        "build_eval_set",
        [](const FeatureTable& f, int H, double eps, int budget, std::uint64_t seed) {
            Rng rng(seed);
            return build_eval_set(f, H, eps, budget, rng);
        },
        py::arg("features"), py::arg("H"), py::arg("epsilon"), py::arg("budget"), py::arg("seed"));
    m.def(
        "build_exp_set",
        [](const FeatureTable& f, int H, double eps, int budget, std::uint64_t seed) {
            Rng rng(seed);
            return build_exp_set(f, H, eps, budget, rng);
        },
        py::arg("features"), py::arg("H"), py::arg("epsilon"), py::arg("budget"), py::arg("seed"));
    m.def("enumerate_tabular_policies", &enumerate_tabular_policies, py::arg("features"),
          py::arg("H"), py::arg("cap") = 1000000);

    m.def(
        "sample_trajectory",
        [](const LinearMdp& mdp, const DeterministicPolicy& p, std::uint64_t seed) {
            Rng rng(seed);
            return sample_trajectory(mdp, p, rng);
        },
        py::arg("mdp"), py::arg("policy"), py::arg("seed"));

    m.def(
        "solve_design",
        [](const std::vector<Mat>& matrices, double ridge, double tol, int max_iter) {
            DesignProblem p;
            p.matrices = matrices;
            for (std::size_t i = 0; i < matrices.size(); ++i)
                p.labels.push_back(std::to_string(i));
            p.ridge = ridge;
            const DesignResult r = solve_design(p, tol, max_iter);
            py::dict out;
            out["mu"] = Vec(r.mu);
            out["V"] = Mat(r.V);
            out["g"] = r.g;
            out["iterations"] = r.iterations;
            out["converged"] = r.converged;
            return out;
        },
        py::arg("matrices"), py::arg("ridge") = 0.0, py::arg("tol") = 0.05,
        py::arg("max_iter") = -1);

    py::class_<ExploreConfig> cfg(m, "ExploreConfig");
    cfg.def(py::init<>())
        .def_readwrite("epsilon", &ExploreConfig::epsilon)
        .def_readwrite("delta", &ExploreConfig::delta)
        .def_readwrite("c1", &ExploreConfig::c1)
        .def_readwrite("c2", &ExploreConfig::c2)
        .def_readwrite("c3", &ExploreConfig::c3)
        .def_readwrite("n_override", &ExploreConfig::n_override)
        .def_readwrite("exp_budget", &ExploreConfig::exp_budget)
        .def_readwrite("product_cap", &ExploreConfig::product_cap)
        .def_readwrite("design_tol", &ExploreConfig::design_tol)
        .def_readwrite("ridge", &ExploreConfig::ridge)
        .def_readwrite("threshold_scale", &ExploreConfig::threshold_scale)
        .def_readwrite("seed", &ExploreConfig::seed)
        .def_property(
            "mode",
            [](const ExploreConfig& c) {
                return c.mode == ExploreConfig::Mode::Tabular ? "tabular" : "linear";
            },
            [](ExploreConfig& c, const std::string& m) {
                c.mode = (m == "tabular") ? ExploreConfig::Mode::Tabular
                                          : ExploreConfig::Mode::Linear;
            });

    py::class_<DeploymentEntry>(m, "DeploymentEntry")
        .def_readonly("layer", &DeploymentEntry::layer)
        .def_readonly("episodes", &DeploymentEntry::episodes)
        .def_readonly("objective", &DeploymentEntry::objective)
        .def_readonly("design_g", &DeploymentEntry::design_g)
        .def_readonly("constraint_margin", &DeploymentEntry::constraint_margin);

    py::class_<DeploymentLog>(m, "DeploymentLog")
        .def_readonly("entries", &DeploymentLog::entries)
        .def_readonly("episodes_per_deployment", &DeploymentLog::episodes_per_deployment);

    py::class_<ExploreResult>(m, "ExploreResult")
        .def_readonly("dataset", &ExploreResult::dataset)
        .def_readonly("log", &ExploreResult::log);

    m.def(
        "explore",
        [](const LinearMdp& mdp, const ExploreConfig& cfg, const PolicySet& exp_set) {
            MdpSampler sampler(mdp);
            return explore(sampler, mdp.features, mdp.H, mdp.initial_state, cfg, exp_set);
        },
        py::arg("mdp"), py::arg("config"), py::arg("exp_set"));

    py::class_<PlanResult>(m, "PlanResult")
        .def_readonly("chosen", &PlanResult::chosen)
        .def_readonly("chosen_index", &PlanResult::chosen_index)
        .def_readonly("estimated_value", &PlanResult::estimated_value)
        .def_readonly("estimates", &PlanResult::estimates)
        .def_readonly("reward_id", &PlanResult::reward_id);

    m.def("plan", &plan, py::arg("dataset"), py::arg("reward"), py::arg("eval_set"),
          py::arg("initial_state"));
    m.def("plan_many", &plan_many);

    m.def(
        "sample_linear_reward",
        [](const LinearMdp& mdp, std::uint64_t seed, const std::string& id) {
            Rng rng(seed);
            return sample_linear_reward(mdp, rng, id);
        },
        py::arg("mdp"), py::arg("seed"), py::arg("id") = "r");

    m.def("save_mdp", &save_mdp);
    m.def("load_mdp", &load_mdp);
    m.def("save_dataset", &save_dataset);
    m.def("load_dataset", &load_dataset);
}
