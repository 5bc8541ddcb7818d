#include "rfexplore/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <thread>

#include "rfexplore/errors.hpp"

namespace rfe {

namespace {

constexpr double kRangeTol = 1e-9;
constexpr double kNormSlack = 1e-6;

void require_layers_nonempty(const Dataset& data, int first, int last_exclusive) {
    for (int h = first; h < last_exclusive; ++h)
        if (data.watermark(h) == 0)
            throw EstimationError("no exploration data at layer " + std::to_string(h));
}

void require_policy_horizon(const DeterministicPolicy& policy, int H) {
    if (policy.H() != H)
        throw ContractError("policy has " + std::to_string(policy.H()) +
                            " layers, dataset horizon is " + std::to_string(H));
}

void check_initial_state(const Dataset& data, int s1) {
    if (s1 < 0 || s1 >= data.features().S())
        throw ContractError("initial state out of range");
}

}  // namespace

int EstimateTrace::total_clamps() const {
    return std::accumulate(clamp_counts.begin(), clamp_counts.end(), 0);
}

namespace detail {

Mat regress(const Dataset& data, int h, const Mat& v_next) {
    const int d = data.features().dim();
    const int K = static_cast<int>(v_next.cols());
    if (h + 1 >= data.H()) return Mat::Zero(d, K);  // terminal value is zero
    // target = Phi * (counts * v_next), grouping identical sample terms.
    const Mat target = data.features().columns() * (data.transition_counts(h) * v_next);
    return data.gram_factor(h).solve(target);
}

void check_weight_norm(const Vec& w, double value_bound, int d, long n, int layer) {
    const double bound =
        value_bound * std::sqrt(static_cast<double>(d) * static_cast<double>(n)) * (1.0 + kNormSlack);
    if (w.norm() > bound + 1e-12)
        throw ContractError("regression weight norm " + std::to_string(w.norm()) +
                            " exceeds bound " + std::to_string(bound) + " at layer " +
                            std::to_string(layer));
}

namespace {

struct PrefixWalk {
    const PolicySet& set;
    const Dataset& data;
    const std::function<void(int, int, Eigen::RowVectorXd&)>& reward_at_h;
    int h;
    int K;
    double cap;
    int s1;
    Mat& result;
    std::vector<std::size_t> strides;

    Mat top_table(const PolicyRule& rule) const {
        const FeatureTable& f = data.features();
        Mat v(f.S(), K);
        Eigen::RowVectorXd row(K);
        for (int s = 0; s < f.S(); ++s) {
            reward_at_h(s, policy_action(rule, f, s), row);
            v.row(s) = row;
        }
        return v;
    }

    Mat lower_table(const PolicyRule& rule, const Mat& w) const {
        const FeatureTable& f = data.features();
        Mat v(f.S(), K);
        for (int s = 0; s < f.S(); ++s) {
            const int a = policy_action(rule, f, s);
            const Eigen::RowVectorXd q = f.phi(s, a).transpose() * w;
            for (int k = 0; k < K; ++k) v(s, k) = std::clamp(q[k], 0.0, cap);
        }
        return v;
    }

    void descend(int layer, const Mat& v_above, std::size_t id_base) {
        const auto& rules = set.layers[static_cast<std::size_t>(layer)];
        if (layer == h) {
            for (std::size_t i = 0; i < rules.size(); ++i) {
                const Mat v = top_table(rules[i]);
                emit_or_recurse(layer, v, id_base + i * strides[static_cast<std::size_t>(layer)]);
            }
            return;
        }
        const Mat w = regress(data, layer, v_above);
        for (int k = 0; k < K; ++k)
            check_weight_norm(w.col(k), 1.0, data.features().dim(), data.watermark(layer), layer);
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const Mat v = lower_table(rules[i], w);
            emit_or_recurse(layer, v, id_base + i * strides[static_cast<std::size_t>(layer)]);
        }
    }

    void emit_or_recurse(int layer, const Mat& v, std::size_t id) {
        if (layer == 0) {
            result.row(static_cast<Eigen::Index>(id)) = v.row(s1);
            return;
        }
        descend(layer - 1, v, id);
    }
};

}  // namespace

Mat estimate_over_prefixes(const PolicySet& set, int h,
                           const std::function<void(int, int, Eigen::RowVectorXd&)>& reward_at_h,
                           int K, double cap, const Dataset& data, int initial_state) {
    if (h < 0 || h >= data.H()) throw ContractError("estimate_over_prefixes: layer out of range");
    check_initial_state(data, initial_state);
    require_layers_nonempty(data, 0, h);
    const std::size_t P = set.prefix_size(h + 1);
    Mat result(static_cast<Eigen::Index>(P), K);

    // Prefactor the Gram matrices before any parallel section.
    for (int l = 0; l < h; ++l) data.gram_factor(l);

    std::vector<std::size_t> strides(static_cast<std::size_t>(h) + 1);
    std::size_t acc = 1;
    for (int l = 0; l <= h; ++l) {
        strides[static_cast<std::size_t>(l)] = acc;
        acc *= set.layer_size(l);
    }

    const std::size_t n_top = set.layer_size(h);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const bool parallel = h > 0 && n_top >= 2 && P * static_cast<std::size_t>(K) >= 32768 && hw > 1;

    if (!parallel) {
        PrefixWalk walk{set, data, reward_at_h, h, K, cap, initial_state, result, strides};
        walk.descend(h, Mat(), 0);
        return result;
    }

    const unsigned n_threads = std::min<unsigned>(hw, static_cast<unsigned>(n_top));
    std::vector<std::future<void>> futures;
    for (unsigned t = 0; t < n_threads; ++t) {
        futures.push_back(std::async(std::launch::async, [&, t]() {
            PrefixWalk walk{set, data, reward_at_h, h, K, cap, initial_state, result, strides};
            const auto& rules = set.layers[static_cast<std::size_t>(h)];
            for (std::size_t i = t; i < rules.size(); i += n_threads) {
                const Mat v = walk.top_table(rules[i]);
                walk.emit_or_recurse(h, v, i * strides[static_cast<std::size_t>(h)]);
            }
        }));
    }
    for (auto& f : futures) f.get();
    return result;
}

}  // namespace detail

Estimate estimate_value(const DeterministicPolicy& policy, const RewardFunction& reward,
                        const Dataset& data, int initial_state) {
    if (reward.kind != RewardFunction::Kind::Linear)
        throw ContractError("estimate_value requires a linear reward");
    const FeatureTable& f = data.features();
    const int H = data.H(), S = f.S(), d = f.dim();
    require_policy_horizon(policy, H);
    check_initial_state(data, initial_state);
    require_layers_nonempty(data, 0, H);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < f.A(); ++a) {
                if (!f.valid(s, a)) continue;
                const double r = reward.value(f, h, s, a);
                if (r < -kRangeTol || r > 1.0 + kRangeTol)
                    throw ContractError("linear reward value " + std::to_string(r) +
                                        " outside [0,1] at layer " + std::to_string(h));
            }

    Estimate out;
    out.trace.weight_norms.assign(static_cast<std::size_t>(H), 0.0);
    out.trace.clamp_counts.assign(static_cast<std::size_t>(H), 0);
    const double hi = static_cast<double>(H);

    Mat v = Mat::Zero(S, 1);
    for (int h = H - 1; h >= 0; --h) {
        const Mat w = detail::regress(data, h, v);
        detail::check_weight_norm(w.col(0), hi, d, data.watermark(h), h);
        out.trace.weight_norms[static_cast<std::size_t>(h)] = w.col(0).norm();
        Mat v_new(S, 1);
        for (int s = 0; s < S; ++s) {
            const int a = policy_action(policy, f, h, s);
            const double q = f.phi(s, a).dot(w.col(0)) + reward.value(f, h, s, a);
            if (q < 0 || q > hi) ++out.trace.clamp_counts[static_cast<std::size_t>(h)];
            v_new(s, 0) = std::clamp(q, 0.0, hi);
        }
        v = v_new;
    }
    out.value = v(initial_state, 0);
    out.trace.value = out.value;
    return out;
}

Estimate estimate_expected_reward(const DeterministicPolicy& policy,
                                  const RewardFunction& reward, int h,
                                  const Dataset& data, int initial_state) {
    const FeatureTable& f = data.features();
    const int H = data.H(), S = f.S(), d = f.dim();
    require_policy_horizon(policy, H);
    check_initial_state(data, initial_state);
    if (h < 0 || h >= H) throw ContractError("estimate_expected_reward: layer out of range");
    const double cap = reward.cap;
    if (cap <= 0 || cap > 1.0 + kRangeTol)
        throw ContractError("reward cap must lie in (0, 1]");
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < f.A(); ++a) {
            if (!f.valid(s, a)) continue;
            const double r = reward.value(f, h, s, a);
            if (r < -kRangeTol || r > cap + kRangeTol)
                throw ContractError("reward value " + std::to_string(r) +
                                    " exceeds declared bound " + std::to_string(cap));
        }
    require_layers_nonempty(data, 0, h);

    Estimate out;
    out.trace.weight_norms.assign(static_cast<std::size_t>(H), 0.0);
    out.trace.clamp_counts.assign(static_cast<std::size_t>(H), 0);

    Mat v(S, 1);
    for (int s = 0; s < S; ++s)
        v(s, 0) = reward.value(f, h, s, policy_action(policy, f, h, s));
    for (int l = h - 1; l >= 0; --l) {
        const Mat w = detail::regress(data, l, v);
        detail::check_weight_norm(w.col(0), 1.0, d, data.watermark(l), l);
        out.trace.weight_norms[static_cast<std::size_t>(l)] = w.col(0).norm();
        Mat v_new(S, 1);
        for (int s = 0; s < S; ++s) {
            const int a = policy_action(policy, f, l, s);
            const double q = f.phi(s, a).dot(w.col(0));
            if (q < 0 || q > cap) ++out.trace.clamp_counts[static_cast<std::size_t>(l)];
            v_new(s, 0) = std::clamp(q, 0.0, cap);
        }
        v = v_new;
    }
    out.value = v(initial_state, 0);
    out.trace.value = out.value;
    return out;
}

double estimate_expected_reward(const MixturePolicy& policy, const RewardFunction& reward,
                                int h, const Dataset& data, int initial_state) {
    policy.check();
    double total = 0;
    for (const auto& c : policy.components)
        total += c.weight * estimate_expected_reward(c.policy, reward, h, data, initial_state).value;
    return total;
}

namespace {

// Average per-component expected-reward estimates for the (phi_i phi_j+1)/2
// coordinate rewards, then map through 2E - 1 and mirror.
Mat covariance_from_mixture(const MixturePolicy& policy, int h, const Dataset& data,
                            int initial_state) {
    policy.check();
    const FeatureTable& f = data.features();
    const int d = f.dim();
    const int K = d * (d + 1) / 2;

    Mat e_mix = Mat::Zero(1, K);
    for (const auto& comp : policy.components) {
        // One backward pass with all coordinate rewards as columns.
        PolicySet singleton;
        singleton.layers.assign(static_cast<std::size_t>(data.H()), {});
        for (int l = 0; l < data.H(); ++l)
            singleton.layers[static_cast<std::size_t>(l)] = {comp.policy.layers[static_cast<std::size_t>(l)]};
        auto reward_at_h = [&f, d](int s, int a, Eigen::RowVectorXd& row) {
            const Vec phi = f.phi(s, a);
            int k = 0;
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) row[k++] = (phi[i] * phi[j] + 1.0) / 2.0;
        };
        const Mat values =
            detail::estimate_over_prefixes(singleton, h, reward_at_h, K, 1.0, data, initial_state);
        e_mix += comp.weight * values;
    }

    Mat sigma(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double v = 2.0 * e_mix(0, k++) - 1.0;
            sigma(i, j) = v;
            sigma(j, i) = v;
        }
    return sigma;
}

}  // namespace

Mat estimate_covariance(const MixturePolicy& policy, int h, const Dataset& data,
                        int initial_state) {
    return covariance_from_mixture(policy, h, data, initial_state);
}

Mat estimate_covariance(const DeterministicPolicy& policy, int h, const Dataset& data,
                        int initial_state) {
    return covariance_from_mixture(MixturePolicy::single(policy), h, data, initial_state);
}

Estimate estimate_leverage(const DeterministicPolicy& policy, const Mat& sigma, double n_episodes,
                           int h, const Dataset& data, int initial_state, double cap) {
    if (n_episodes <= 0) throw ContractError("estimate_leverage: episode count must be positive");
    const int d = static_cast<int>(sigma.rows());
    const Mat scaled = n_episodes * 0.5 * (sigma + sigma.transpose());
    Eigen::LLT<Mat> llt(scaled);
    if (llt.info() != Eigen::Success)
        throw SingularityError("estimate_leverage: N * Sigma is not positive definite");
    const Mat inv = llt.solve(Mat::Identity(d, d));
    const FeatureTable* f = &data.features();
    auto reward = RewardFunction::generic(
        [f, inv, cap](int, int s, int a) {
            const Vec phi = f->phi(s, a);
            return std::clamp(phi.dot(inv * phi), 0.0, cap);
        },
        cap, "leverage");
    return estimate_expected_reward(policy, reward, h, data, initial_state);
}

Mat estimate_occupancy(const DeterministicPolicy& policy, int h, const Dataset& data,
                       int initial_state) {
    return estimate_occupancy(MixturePolicy::single(policy), h, data, initial_state);
}

Mat estimate_occupancy(const MixturePolicy& policy, int h, const Dataset& data,
                       int initial_state) {
    policy.check();
    const FeatureTable& f = data.features();
    const int S = f.S(), A = f.A();
    const int K = S * A;
    Mat e_mix = Mat::Zero(1, K);
    for (const auto& comp : policy.components) {
        PolicySet singleton;
        singleton.layers.assign(static_cast<std::size_t>(data.H()), {});
        for (int l = 0; l < data.H(); ++l)
            singleton.layers[static_cast<std::size_t>(l)] = {comp.policy.layers[static_cast<std::size_t>(l)]};
        auto reward_at_h = [&f](int s, int a, Eigen::RowVectorXd& row) {
            row.setZero();
            row[f.index(s, a)] = 1.0;
        };
        const Mat values =
            detail::estimate_over_prefixes(singleton, h, reward_at_h, K, 1.0, data, initial_state);
        e_mix += comp.weight * values;
    }
    Mat occ(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) occ(s, a) = e_mix(0, f.index(s, a));
    return occ;
}

double exact_uncertainty(const DeterministicPolicy& policy, const Dataset& data,
                         const std::vector<int>& layers, const LinearMdp& mdp) {
    double total = 0;
    for (int h : layers) {
        if (h < 0 || h >= data.H()) throw ContractError("exact_uncertainty: layer out of range");
        const Mat occ = dp_occupancy(mdp, policy, h);
        const auto& llt = data.gram_factor(h);
        for (int s = 0; s < occ.rows(); ++s)
            for (int a = 0; a < occ.cols(); ++a) {
                if (occ(s, a) == 0) continue;
                const Vec phi = mdp.features.phi(s, a);
                total += occ(s, a) * std::sqrt(std::max(0.0, phi.dot(llt.solve(phi))));
            }
    }
    return total;
}

double exact_uncertainty(const MixturePolicy& policy, const Dataset& data,
                         const std::vector<int>& layers, const LinearMdp& mdp) {
    policy.check();
    double total = 0;
    for (const auto& c : policy.components)
        total += c.weight * exact_uncertainty(c.policy, data, layers, mdp);
    return total;
}

}  // namespace rfe
