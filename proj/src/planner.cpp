#include "rfexplore/planner.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include "rfexplore/errors.hpp"

namespace rfe {

namespace {

constexpr double kRangeTol = 1e-9;

struct EvalWalk {
    const PolicySet& set;
    const Dataset& data;
    const RewardFunction& reward;
    double hi;  // clamp bound H
    int s1;
    std::vector<double>& estimates;
    std::vector<std::size_t> strides;

    Mat value_table(const PolicyRule& rule, const Mat& w, int layer) const {
        const FeatureTable& f = data.features();
        Mat v(f.S(), 1);
        for (int s = 0; s < f.S(); ++s) {
            const int a = policy_action(rule, f, s);
            const double q = f.phi(s, a).dot(w.col(0)) + reward.value(f, layer, s, a);
            v(s, 0) = std::clamp(q, 0.0, hi);
        }
        return v;
    }

    void descend(int layer, const Mat& v_above, std::size_t id_base) const {
        const Mat w = detail::regress(data, layer, v_above);
        detail::check_weight_norm(w.col(0), hi, data.features().dim(), data.watermark(layer), layer);
        const auto& rules = set.layers[static_cast<std::size_t>(layer)];
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const Mat v = value_table(rules[i], w, layer);
            const std::size_t id = id_base + i * strides[static_cast<std::size_t>(layer)];
            if (layer == 0)
                estimates[id] = v(s1, 0);
            else
                descend(layer - 1, v, id);
        }
    }
};

void check_linear_reward(const RewardFunction& reward, const Dataset& data) {
    if (reward.kind != RewardFunction::Kind::Linear)
        throw ContractError("plan requires a linear reward");
    const FeatureTable& f = data.features();
    for (int h = 0; h < data.H(); ++h)
        for (int s = 0; s < f.S(); ++s)
            for (int a = 0; a < f.A(); ++a) {
                if (!f.valid(s, a)) continue;
                const double r = reward.value(f, h, s, a);
                if (r < -kRangeTol || r > 1.0 + kRangeTol)
                    throw ContractError("linear reward value outside [0,1] at layer " +
                                        std::to_string(h));
            }
}

}  // namespace

PlanResult plan(const Dataset& data, const RewardFunction& reward, const PolicySet& eval_set,
                int initial_state) {
    if (eval_set.size() == 0) throw ContractError("plan: eval set is empty");
    if (eval_set.H() != data.H()) throw ContractError("plan: policy set horizon mismatch");
    check_linear_reward(reward, data);
    const int H = data.H();
    for (int h = 0; h < H; ++h)
        if (data.watermark(h) == 0)
            throw EstimationError("no exploration data at layer " + std::to_string(h));
    for (int h = 0; h < H; ++h) data.gram_factor(h);  // prefactor before threads

    const std::size_t P = eval_set.size();
    PlanResult out;
    out.reward_id = reward.id;
    out.estimates.assign(P, 0.0);

    std::vector<std::size_t> strides(static_cast<std::size_t>(H));
    std::size_t acc = 1;
    for (int l = 0; l < H; ++l) {
        strides[static_cast<std::size_t>(l)] = acc;
        acc *= eval_set.layer_size(l);
    }

    const int top = H - 1;
    const std::size_t n_top = eval_set.layer_size(top);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const bool parallel = H > 1 && n_top >= 2 && P >= 32768 && hw > 1;

    EvalWalk walk{eval_set, data, reward, static_cast<double>(H), initial_state, out.estimates,
                  strides};
    const Mat v_terminal = Mat::Zero(data.features().S(), 1);
    if (!parallel) {
        walk.descend(top, v_terminal, 0);
    } else {
        // The top regression is shared; branch over the top layer's rules.
        const Mat w_top = detail::regress(data, top, v_terminal);
        detail::check_weight_norm(w_top.col(0), walk.hi, data.features().dim(),
                                  data.watermark(top), top);
        const unsigned n_threads = std::min<unsigned>(hw, static_cast<unsigned>(n_top));
        std::vector<std::future<void>> futures;
        for (unsigned t = 0; t < n_threads; ++t) {
            futures.push_back(std::async(std::launch::async, [&, t]() {
                const auto& rules = eval_set.layers[static_cast<std::size_t>(top)];
                for (std::size_t i = t; i < rules.size(); i += n_threads) {
                    const Mat v = walk.value_table(rules[i], w_top, top);
                    const std::size_t id = i * strides[static_cast<std::size_t>(top)];
                    if (top == 0)
                        out.estimates[id] = v(initial_state, 0);
                    else
                        walk.descend(top - 1, v, id);
                }
            }));
        }
        for (auto& f : futures) f.get();
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < P; ++i)
        if (out.estimates[i] > out.estimates[best]) best = i;
    out.chosen_index = best;
    out.chosen = eval_set.policy_at(best);
    out.estimated_value = out.estimates[best];
    return out;
}

std::vector<PlanResult> plan_many(const Dataset& data, const std::vector<RewardFunction>& rewards,
                                  const PolicySet& eval_set, int initial_state) {
    std::vector<PlanResult> out;
    out.reserve(rewards.size());
    for (const auto& r : rewards) out.push_back(plan(data, r, eval_set, initial_state));
    return out;
}

}  // namespace rfe
