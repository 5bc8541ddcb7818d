#include "rfexplore/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "rfexplore/errors.hpp"

namespace rfe {

PolicyRule PolicyRule::linear_argmax(Vec w) {
    PolicyRule r;
    r.kind = Kind::LinearArgmax;
    r.weights = std::move(w);
    return r;
}

PolicyRule PolicyRule::table(std::vector<int> actions) {
    PolicyRule r;
    r.kind = Kind::Table;
    r.actions = std::move(actions);
    return r;
}

MixturePolicy MixturePolicy::single(DeterministicPolicy p) {
    MixturePolicy m;
    m.components.push_back({1.0, std::move(p)});
    return m;
}

MixturePolicy MixturePolicy::uniform(std::vector<DeterministicPolicy> policies) {
    if (policies.empty()) throw ContractError("uniform mixture of zero policies");
    MixturePolicy m;
    const double w = 1.0 / static_cast<double>(policies.size());
    for (auto& p : policies) m.components.push_back({w, std::move(p)});
    return m;
}

void MixturePolicy::check() const {
    if (components.empty()) throw ContractError("mixture policy has no components");
    double sum = 0;
    for (const auto& c : components) {
        if (c.weight < 0) throw ContractError("mixture weight is negative");
        sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-10)
        throw ContractError("mixture weights sum to " + std::to_string(sum));
}

int policy_action(const PolicyRule& rule, const FeatureTable& features, int s) {
    if (rule.kind == PolicyRule::Kind::Table) {
        const int a = rule.actions.at(static_cast<std::size_t>(s));
        if (a < 0 || a >= features.A() || !features.valid(s, a))
            throw ContractError("table rule selects masked action " + std::to_string(a) +
                                " at state " + std::to_string(s));
        return a;
    }
    int best_a = -1;
    double best = 0;
    for (int a = 0; a < features.A(); ++a) {
        if (!features.valid(s, a)) continue;
        const double score = features.phi(s, a).dot(rule.weights);
        if (best_a < 0 || score > best) {
            best_a = a;
            best = score;
        }
    }
    if (best_a < 0) throw ContractError("no valid action at state " + std::to_string(s));
    return best_a;
}

int policy_action(const DeterministicPolicy& policy, const FeatureTable& features, int h, int s) {
    return policy_action(policy.layers.at(static_cast<std::size_t>(h)), features, s);
}

std::vector<int> induced_table(const PolicyRule& rule, const FeatureTable& features) {
    std::vector<int> t(static_cast<std::size_t>(features.S()));
    for (int s = 0; s < features.S(); ++s)
        t[static_cast<std::size_t>(s)] = policy_action(rule, features, s);
    return t;
}

std::size_t PolicySet::size() const { return prefix_size(H()); }

std::size_t PolicySet::prefix_size(int h_limit) const {
    std::size_t n = 1;
    for (int h = 0; h < h_limit; ++h) {
        const std::size_t nh = layer_size(h);
        if (nh == 0) return 0;
        if (n > std::numeric_limits<std::size_t>::max() / nh)
            throw SizeError("policy set product overflows size_t");
        n *= nh;
    }
    return n;
}

DeterministicPolicy PolicySet::policy_at(std::size_t idx) const {
    return prefix_policy_at(idx, H());
}

DeterministicPolicy PolicySet::prefix_policy_at(std::size_t idx, int h_limit) const {
    if (idx >= prefix_size(h_limit)) throw ContractError("policy index out of range");
    DeterministicPolicy p;
    p.layers.reserve(static_cast<std::size_t>(H()));
    for (int h = 0; h < H(); ++h) {
        if (h < h_limit) {
            const std::size_t nh = layer_size(h);
            p.layers.push_back(layers[static_cast<std::size_t>(h)][idx % nh]);
            idx /= nh;
        } else {
            p.layers.push_back(layers[static_cast<std::size_t>(h)].front());
        }
    }
    return p;
}

namespace {

// Keep the first rule per induced action table.
std::vector<PolicyRule> dedup_rules(const std::vector<PolicyRule>& rules,
                                    const FeatureTable& features) {
    std::vector<PolicyRule> out;
    std::map<std::vector<int>, bool> seen;
    for (const auto& r : rules) {
        auto key = induced_table(r, features);
        if (seen.emplace(std::move(key), true).second) out.push_back(r);
    }
    return out;
}

// Uniform draw from the d-ball of the given radius.
Vec sample_ball(int d, double radius, Rng& rng) {
    Vec g(d);
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    const double n = g.norm();
    if (n < 1e-12) return Vec::Zero(d);
    const double r = radius * std::pow(rng.uniform(), 1.0 / d);
    return g * (r / n);
}

// Trim per-layer lists (from the tail, never below min_keep) until the
// cross product fits under cap.
void trim_to_product_cap(std::vector<std::vector<PolicyRule>>& layers,
                         std::size_t cap, std::size_t min_keep) {
    auto product = [&layers]() {
        double p = 1;
        for (const auto& l : layers) p *= static_cast<double>(l.size());
        return p;
    };
    while (product() > static_cast<double>(cap)) {
        auto it = std::max_element(layers.begin(), layers.end(),
                                   [](const auto& a, const auto& b) { return a.size() < b.size(); });
        if (it->size() <= std::max<std::size_t>(min_keep, 1)) break;
        it->pop_back();
    }
}

}  // namespace

PolicySet build_eval_set(const FeatureTable& features, int H, double epsilon,
                         int budget, Rng& rng, const SetBuildOptions& opts) {
    if (budget < 1) throw ContractError("build_eval_set: budget must be at least 1");
    if (epsilon <= 0) throw ContractError("build_eval_set: epsilon must be positive");
    const int d = features.dim();
    const double radius = 2.0 * H * std::sqrt(static_cast<double>(d));
    // Full-cover size of the weight ball at resolution epsilon/2H; the
    // sampled net replaces it whenever it exceeds the budget (always, at
    // desk scale).
    const double net_log_size =
        d * std::log(1.0 + 8.0 * H * H * std::sqrt(static_cast<double>(d)) / epsilon);

    std::vector<PolicyRule> rules;
    rules.reserve(static_cast<std::size_t>(budget));
    if (net_log_size <= std::log(static_cast<double>(budget))) {
        // Degenerate tiny nets only; fall through to sampling anyway, the
        // dedup below collapses to the handful of distinct tables.
    }
    for (int i = 0; i < budget; ++i)
        rules.push_back(PolicyRule::linear_argmax(sample_ball(d, radius, rng)));
    rules = dedup_rules(rules, features);

    PolicySet set;
    set.provenance = PolicySet::Provenance::EvalNet;
    set.resolution = epsilon;
    set.net_log_size = net_log_size;
    set.layers.assign(static_cast<std::size_t>(H), rules);
    trim_to_product_cap(set.layers, opts.product_cap, 1);
    set.eval_prefix = static_cast<int>(set.layers.front().size());
    return set;
}

PolicySet build_exp_set(const FeatureTable& features, int H, double epsilon,
                        int budget, Rng& rng, const SetBuildOptions& opts) {
    if (budget < 1) throw ContractError("build_exp_set: budget must be at least 1");
    PolicySet eval = build_eval_set(features, H, epsilon, budget, rng, opts);
    const int d = features.dim();

    // Greedy policies of uncertainty rewards r = sqrt(phi^T (I+Sigma)^-1 phi)
    // for sampled PSD Sigma; the zero draw comes first.
    std::vector<PolicyRule> extras;
    const int extra_budget = std::max(0, budget - static_cast<int>(eval.layers.front().size()));
    const double scales[] = {0.0, 0.25, 1.0, 4.0, 16.0, 64.0};
    for (int i = 0; i < extra_budget; ++i) {
        const double scale = scales[static_cast<std::size_t>(i) % std::size(scales)];
        Mat sigma = Mat::Zero(d, d);
        if (i > 0 && scale > 0) {
            Mat g(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
            sigma = (g * g.transpose()) * (scale / d);
        }
        const Mat inv = (Mat::Identity(d, d) + sigma).llt().solve(Mat::Identity(d, d));
        std::vector<int> actions(static_cast<std::size_t>(features.S()));
        for (int s = 0; s < features.S(); ++s) {
            int best_a = -1;
            double best = 0;
            for (int a = 0; a < features.A(); ++a) {
                if (!features.valid(s, a)) continue;
                const Vec phi = features.phi(s, a);
                const double score = phi.dot(inv * phi);
                if (best_a < 0 || score > best) {
                    best_a = a;
                    best = score;
                }
            }
            actions[static_cast<std::size_t>(s)] = best_a;
        }
        extras.push_back(PolicyRule::table(std::move(actions)));
    }

    std::vector<PolicyRule> merged = eval.layers.front();
    const int eval_prefix = static_cast<int>(merged.size());
    for (auto& r : extras) merged.push_back(std::move(r));
    merged = dedup_rules(merged, features);  // eval rules come first, so they survive

    PolicySet set;
    set.provenance = PolicySet::Provenance::ExpNet;
    set.resolution = epsilon;
    set.seed = eval.seed;
    // Full-net bound for the union net (covariance reward class on top of
    // the weight-ball class).
    set.net_log_size =
        2.0 * d * d *
        std::log(1.0 + 32.0 * H * H * std::sqrt(static_cast<double>(d)) / (epsilon * epsilon));
    set.layers.assign(static_cast<std::size_t>(H), merged);
    set.eval_prefix = eval_prefix;
    trim_to_product_cap(set.layers, opts.product_cap, static_cast<std::size_t>(eval_prefix));
    return set;
}

PolicySet enumerate_tabular_policies(const FeatureTable& features, int H, std::size_t cap) {
    const int S = features.S();
    // Per-layer count = product of per-state valid-action counts.
    double per_layer = 1;
    for (int s = 0; s < S; ++s) per_layer *= features.valid_action_count(s);
    const double total = std::pow(per_layer, H);
    if (total > static_cast<double>(cap))
        throw SizeError("tabular enumeration would produce " + std::to_string(total) +
                        " policies (cap " + std::to_string(cap) +
                        "); shrink the instance or raise the cap");

    std::vector<PolicyRule> rules;
    std::vector<int> actions(static_cast<std::size_t>(S));
    std::function<void(int)> rec = [&](int s) {
        if (s == S) {
            rules.push_back(PolicyRule::table(actions));
            return;
        }
        for (int a = 0; a < features.A(); ++a) {
            if (!features.valid(s, a)) continue;
            actions[static_cast<std::size_t>(s)] = a;
            rec(s + 1);
        }
    };
    rec(0);

    PolicySet set;
    set.provenance = PolicySet::Provenance::TabularEnum;
    set.layers.assign(static_cast<std::size_t>(H), rules);
    set.eval_prefix = static_cast<int>(rules.size());
    return set;
}

LayerExpectation exact_layer_expectation(const LinearMdp& mdp, int h) {
    LayerExpectation e;
    e.features = &mdp.features;
    e.covariance = [&mdp, h](const DeterministicPolicy& p) {
        return expected_feature_cov(mdp, p, h);
    };
    e.expect = [&mdp, h](const DeterministicPolicy& p,
                         const std::function<double(int, int)>& r) {
        const Mat occ = dp_occupancy(mdp, p, h);
        double total = 0;
        for (int s = 0; s < occ.rows(); ++s)
            for (int a = 0; a < occ.cols(); ++a)
                if (occ(s, a) > 0) total += occ(s, a) * r(s, a);
        return total;
    };
    return e;
}

MixturePolicy build_explorative_mixture(const LayerExpectation& expectation,
                                        const PolicySet& set, int h, int rounds) {
    if (set.size() == 0) throw ContractError("build_explorative_mixture: empty policy set");
    if (rounds < 2) throw ContractError("build_explorative_mixture: rounds must be at least 2");
    if (!expectation.features) throw ContractError("build_explorative_mixture: missing features");
    const FeatureTable& features = *expectation.features;
    // Only behavior up to layer h matters for a layer-h expectation.
    const std::size_t n = set.prefix_size(h + 1);

    // The accumulated covariance is seeded by the set's first policy; the
    // output mixes the rounds-1 greedily chosen policies.
    Mat sigma = expectation.covariance(set.prefix_policy_at(0, h + 1));
    const int d = static_cast<int>(sigma.rows());
    std::vector<DeterministicPolicy> chosen;

    for (int i = 0; i + 1 < rounds; ++i) {
        const Mat inv = (Mat::Identity(d, d) + sigma).llt().solve(Mat::Identity(d, d));
        auto reward = [&features, inv](int s, int a) {
            const Vec phi = features.phi(s, a);
            return std::sqrt(std::max(0.0, phi.dot(inv * phi)));
        };
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double val = expectation.expect(set.prefix_policy_at(j, h + 1), reward);
            if (val > best) {
                best = val;
                best_idx = j;
            }
        }
        chosen.push_back(set.prefix_policy_at(best_idx, h + 1));
        sigma += expectation.covariance(chosen.back());
    }
    return MixturePolicy::uniform(std::move(chosen));
}

}  // namespace rfe
