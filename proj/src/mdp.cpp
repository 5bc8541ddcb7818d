#include "rfexplore/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rfexplore/errors.hpp"
#include "rfexplore/policies.hpp"

namespace rfe {

namespace {
constexpr double kNormTol = 1e-9;        // ||phi|| <= 1 slack
constexpr double kProbTol = 1e-9;        // per-term probability slack
constexpr double kSumTol = 1e-8;         // normalization slack
constexpr double kVecNormTol = 1e-6;     // ||mu(S)||, ||theta|| slack
}  // namespace

FeatureTable::FeatureTable(int num_states, int num_actions, int dim)
    : S_(num_states), A_(num_actions), d_(dim),
      phi_(Mat::Zero(dim, static_cast<Eigen::Index>(num_states) * num_actions)),
      mask_(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions), 1) {
    if (num_states <= 0 || num_actions <= 0 || dim <= 0)
        throw ContractError("FeatureTable: S, A, d must be positive");
}

int FeatureTable::valid_action_count(int s) const {
    int n = 0;
    for (int a = 0; a < A_; ++a)
        if (valid(s, a)) ++n;
    return n;
}

int FeatureTable::first_valid_action(int s) const {
    for (int a = 0; a < A_; ++a)
        if (valid(s, a)) return a;
    throw ContractError("state " + std::to_string(s) + " has no valid action");
}

RewardFunction RewardFunction::linear(std::vector<Vec> thetas, std::string id) {
    RewardFunction r;
    r.kind = Kind::Linear;
    r.thetas = std::move(thetas);
    r.cap = 1.0;
    r.id = std::move(id);
    return r;
}

RewardFunction RewardFunction::zero(int H, int d) {
    return linear(std::vector<Vec>(static_cast<std::size_t>(H), Vec::Zero(d)), "zero");
}

RewardFunction RewardFunction::generic(std::function<double(int, int, int)> fn,
                                       double cap, std::string id) {
    RewardFunction r;
    r.kind = Kind::Generic;
    r.fn = std::move(fn);
    r.cap = cap;
    r.id = std::move(id);
    return r;
}

double RewardFunction::value(const FeatureTable& features, int h, int s, int a) const {
    if (kind == Kind::Linear) return features.phi(s, a).dot(thetas[static_cast<std::size_t>(h)]);
    return fn(h, s, a);
}

std::string Violation::str() const {
    std::ostringstream os;
    os << what << " at (h=" << h << ", s=" << s << ", a=" << a;
    if (s_next >= 0) os << ", s'=" << s_next;
    os << "), magnitude " << magnitude;
    return os.str();
}

std::vector<Violation> validate(const LinearMdp& mdp) {
    std::vector<Violation> out;
    const FeatureTable& f = mdp.features;
    const int S = f.S(), A = f.A(), d = f.dim(), H = mdp.H;
    auto add = [&out](std::string what, int h, int s, int a, int sn, double mag) {
        out.push_back({std::move(what), h, s, a, sn, mag});
    };

    if (H <= 0) add("horizon must be positive", -1, -1, -1, -1, H);
    if (mdp.initial_state < 0 || mdp.initial_state >= S)
        add("initial state out of range", -1, mdp.initial_state, -1, -1, 0);
    if (static_cast<int>(mdp.measures.size()) != H || static_cast<int>(mdp.thetas.size()) != H) {
        add("measures/thetas must have one entry per layer", -1, -1, -1, -1, 0);
        return out;
    }
    for (int s = 0; s < S; ++s)
        if (f.valid_action_count(s) == 0) add("state has no valid action", -1, s, -1, -1, 0);

    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            if (!f.valid(s, a)) continue;
            const double n = f.phi(s, a).norm();
            if (n > 1.0 + kNormTol) add("feature norm exceeds 1", -1, s, a, -1, n - 1.0);
        }

    for (int h = 0; h < H; ++h) {
        const Mat& mu = mdp.measures[static_cast<std::size_t>(h)];
        const Vec& theta = mdp.thetas[static_cast<std::size_t>(h)];
        if (mu.rows() != d || mu.cols() != S || theta.size() != d) {
            add("measure/theta dimension mismatch", h, -1, -1, -1, 0);
            continue;
        }
        const double mu_row_norm = Vec(mu.rowwise().sum()).norm();
        if (mu_row_norm > std::sqrt(static_cast<double>(d)) + kVecNormTol)
            add("||mu_h(S)|| exceeds sqrt(d)", h, -1, -1, -1, mu_row_norm);
        if (theta.norm() > std::sqrt(static_cast<double>(d)) + kVecNormTol)
            add("||theta_h|| exceeds sqrt(d)", h, -1, -1, -1, theta.norm());

        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                if (!f.valid(s, a)) continue;
                const Vec p = mu.transpose() * f.phi(s, a);
                double sum = 0;
                for (int sn = 0; sn < S; ++sn) {
                    if (p[sn] < -kProbTol || p[sn] > 1.0 + kProbTol)
                        add("transition probability out of [0,1]", h, s, a, sn, p[sn]);
                    sum += p[sn];
                }
                if (std::abs(sum - 1.0) > kSumTol)
                    add("transition normalization", h, s, a, -1, sum - 1.0);
                const double r = f.phi(s, a).dot(theta);
                if (r < -kProbTol || r > 1.0 + kProbTol)
                    add("reward out of [0,1]", h, s, a, -1, r);
            }
    }
    return out;
}

void require_valid(const LinearMdp& mdp) {
    auto report = validate(mdp);
    if (!report.empty())
        throw ModelError("invalid MDP: " + report.front().str() + " (" +
                         std::to_string(report.size()) + " violation(s) total)");
}

namespace {

int sample_next_state(const Vec& dist, Rng& rng) {
    // Inverse CDF with clamped negatives (validation bounds them by 1e-9).
    const double u = rng.uniform();
    double acc = 0;
    const int S = static_cast<int>(dist.size());
    for (int s = 0; s + 1 < S; ++s) {
        acc += std::max(0.0, dist[s]);
        if (u < acc) return s;
    }
    return S - 1;
}

void check_reward_range(const LinearMdp& mdp, const RewardFunction& reward) {
    const FeatureTable& f = mdp.features;
    const double hi = (reward.kind == RewardFunction::Kind::Linear) ? 1.0 : reward.cap;
    for (int h = 0; h < mdp.H; ++h)
        for (int s = 0; s < f.S(); ++s)
            for (int a = 0; a < f.A(); ++a) {
                if (!f.valid(s, a)) continue;
                const double r = reward.value(f, h, s, a);
                if (r < -kProbTol || r > hi + kProbTol)
                    throw ContractError("reward value " + std::to_string(r) +
                                        " outside declared range at (h=" + std::to_string(h) +
                                        ",s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")");
            }
}

}  // namespace

Trajectory sample_trajectory(const LinearMdp& mdp, const DeterministicPolicy& policy, Rng& rng) {
    require_valid(mdp);
    Trajectory t;
    t.states.reserve(static_cast<std::size_t>(mdp.H));
    t.actions.reserve(static_cast<std::size_t>(mdp.H));
    int s = mdp.initial_state;
    for (int h = 0; h < mdp.H; ++h) {
        const int a = policy_action(policy, mdp.features, h, s);
        t.states.push_back(s);
        t.actions.push_back(a);
        if (h + 1 < mdp.H) s = sample_next_state(mdp.next_state_dist(h, s, a), rng);
    }
    return t;
}

Trajectory sample_trajectory(const LinearMdp& mdp, const MixturePolicy& policy, Rng& rng) {
    policy.check();
    // One component per episode, then followed for all H steps.
    std::vector<double> w;
    w.reserve(policy.components.size());
    for (const auto& c : policy.components) w.push_back(c.weight);
    const int k = rng.categorical(w);
    return sample_trajectory(mdp, policy.components[static_cast<std::size_t>(k)].policy, rng);
}

double dp_policy_value(const LinearMdp& mdp, const DeterministicPolicy& policy,
                       const RewardFunction& reward) {
    require_valid(mdp);
    check_reward_range(mdp, reward);
    const int S = mdp.S();
    Vec v = Vec::Zero(S);
    for (int h = mdp.H - 1; h >= 0; --h) {
        Vec v_prev(S);
        for (int s = 0; s < S; ++s) {
            const int a = policy_action(policy, mdp.features, h, s);
            v_prev[s] = reward.value(mdp.features, h, s, a) + mdp.next_state_dist(h, s, a).dot(v);
        }
        v = v_prev;
    }
    return v[mdp.initial_state];
}

double dp_policy_value(const LinearMdp& mdp, const MixturePolicy& policy,
                       const RewardFunction& reward) {
    policy.check();
    double total = 0;
    for (const auto& c : policy.components)
        total += c.weight * dp_policy_value(mdp, c.policy, reward);
    return total;
}

OptimalTables dp_optimal_tables(const LinearMdp& mdp, const RewardFunction& reward) {
    require_valid(mdp);
    check_reward_range(mdp, reward);
    const int S = mdp.S(), A = mdp.A();
    OptimalTables out;
    out.v.assign(static_cast<std::size_t>(mdp.H) + 1, Vec::Zero(S));
    out.q.assign(static_cast<std::size_t>(mdp.H),
                 Mat::Constant(S, A, -std::numeric_limits<double>::infinity()));
    for (int h = mdp.H - 1; h >= 0; --h) {
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                if (!mdp.features.valid(s, a)) continue;
                const double q = reward.value(mdp.features, h, s, a) +
                                 mdp.next_state_dist(h, s, a).dot(out.v[static_cast<std::size_t>(h) + 1]);
                out.q[static_cast<std::size_t>(h)](s, a) = q;
                if (q > best) best = q;
            }
            out.v[static_cast<std::size_t>(h)][s] = best;
        }
    }
    out.optimal_value = out.v[0][mdp.initial_state];
    return out;
}

DeterministicPolicy OptimalTables::policy() const {
    DeterministicPolicy p;
    const int H = static_cast<int>(q.size());
    p.layers.reserve(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
        const Mat& qh = q[static_cast<std::size_t>(h)];
        std::vector<int> actions(static_cast<std::size_t>(qh.rows()));
        for (int s = 0; s < qh.rows(); ++s) {
            int best_a = 0;
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < qh.cols(); ++a)
                if (qh(s, a) > best) {
                    best = qh(s, a);
                    best_a = a;
                }
            actions[static_cast<std::size_t>(s)] = best_a;
        }
        p.layers.push_back(PolicyRule::table(std::move(actions)));
    }
    return p;
}

std::pair<double, DeterministicPolicy> dp_optimal(const LinearMdp& mdp,
                                                  const RewardFunction& reward) {
    OptimalTables tables = dp_optimal_tables(mdp, reward);
    return {tables.optimal_value, tables.policy()};
}

Mat dp_occupancy(const LinearMdp& mdp, const DeterministicPolicy& policy, int h) {
    require_valid(mdp);
    if (h < 0 || h >= mdp.H) throw ContractError("dp_occupancy: layer out of range");
    const int S = mdp.S(), A = mdp.A();
    Vec p = Vec::Zero(S);
    p[mdp.initial_state] = 1.0;
    for (int t = 0; t < h; ++t) {
        Vec p_next = Vec::Zero(S);
        for (int s = 0; s < S; ++s) {
            if (p[s] == 0) continue;
            const int a = policy_action(policy, mdp.features, t, s);
            p_next += p[s] * mdp.next_state_dist(t, s, a);
        }
        p = p_next.cwiseMax(0.0);
    }
    Mat occ = Mat::Zero(S, A);
    for (int s = 0; s < S; ++s) {
        if (p[s] == 0) continue;
        occ(s, policy_action(policy, mdp.features, h, s)) = p[s];
    }
    return occ;
}

Mat dp_occupancy(const LinearMdp& mdp, const MixturePolicy& policy, int h) {
    policy.check();
    Mat occ = Mat::Zero(mdp.S(), mdp.A());
    for (const auto& c : policy.components) occ += c.weight * dp_occupancy(mdp, c.policy, h);
    return occ;
}

namespace {
Mat cov_from_occupancy(const LinearMdp& mdp, const Mat& occ) {
    const int d = mdp.dim();
    Mat cov = Mat::Zero(d, d);
    for (int s = 0; s < mdp.S(); ++s)
        for (int a = 0; a < mdp.A(); ++a) {
            const double w = occ(s, a);
            if (w == 0) continue;
            const Vec phi = mdp.features.phi(s, a);
            cov += w * (phi * phi.transpose());
        }
    return cov;
}
}  // namespace

Mat expected_feature_cov(const LinearMdp& mdp, const DeterministicPolicy& policy, int h) {
    return cov_from_occupancy(mdp, dp_occupancy(mdp, policy, h));
}

Mat expected_feature_cov(const LinearMdp& mdp, const MixturePolicy& policy, int h) {
    return cov_from_occupancy(mdp, dp_occupancy(mdp, policy, h));
}

LinearMdp tabular_to_linear(const std::vector<Mat>& transitions,
                            const std::vector<Mat>& rewards, int initial_state) {
    if (transitions.empty() || transitions.size() != rewards.size())
        throw ContractError("tabular_to_linear: need one transition and reward table per layer");
    const int H = static_cast<int>(transitions.size());
    const int S = static_cast<int>(transitions[0].cols());
    if (S <= 0 || transitions[0].rows() % S != 0)
        throw ContractError("tabular_to_linear: transition table must be (S*A) x S");
    const int A = static_cast<int>(transitions[0].rows()) / S;
    const int d = S * A;

    LinearMdp mdp;
    mdp.H = H;
    mdp.initial_state = initial_state;
    mdp.features = FeatureTable(S, A, d);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            Vec e = Vec::Zero(d);
            e[mdp.features.index(s, a)] = 1.0;
            mdp.features.set_phi(s, a, e);
        }
    for (int h = 0; h < H; ++h) {
        const Mat& tr = transitions[static_cast<std::size_t>(h)];
        const Mat& rw = rewards[static_cast<std::size_t>(h)];
        if (tr.rows() != d || tr.cols() != S || rw.rows() != S || rw.cols() != A)
            throw ContractError("tabular_to_linear: table dimensions differ across layers");
        for (int i = 0; i < d; ++i) {
            const double row_sum = tr.row(i).sum();
            if (std::abs(row_sum - 1.0) > kSumTol)
                throw ContractError("tabular_to_linear: transition row " + std::to_string(i) +
                                    " at layer " + std::to_string(h) + " sums to " +
                                    std::to_string(row_sum));
        }
        mdp.measures.push_back(tr);  // already d x S: row (s,a), column s'
        Vec theta(d);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const double r = rw(s, a);
                if (r < -kProbTol || r > 1.0 + kProbTol)
                    throw ContractError("tabular_to_linear: reward out of [0,1]");
                theta[mdp.features.index(s, a)] = r;
            }
        mdp.thetas.push_back(theta);
    }
    return mdp;
}

LinearMdp generate_random_linear_mdp(int d, int S, int A, int H, Rng& rng) {
    if (d <= 0 || S <= 0 || A <= 0 || H <= 0)
        throw ContractError("generate_random_linear_mdp: dimensions must be positive");
    constexpr int kMaxTries = 16;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        LinearMdp mdp;
        mdp.H = H;
        mdp.initial_state = 0;
        mdp.features = FeatureTable(S, A, d);

        // Simplex-distributed features, sharpened so the l2 norms are not
        // all tiny, then boosted by the largest norm.
        double max_norm = 0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                Vec x(d);
                for (int i = 0; i < d; ++i) {
                    double e = -std::log(std::max(rng.uniform(), 1e-300));
                    x[i] = e * e;  // spikier than uniform on the simplex
                }
                x /= x.sum();
                mdp.features.set_phi(s, a, x);
                max_norm = std::max(max_norm, x.norm());
            }
        Mat boosted = mdp.features.columns() / max_norm;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                mdp.features.set_phi(s, a, boosted.col(mdp.features.index(s, a)));

        for (int h = 0; h < H; ++h) {
            // d latent next-state distributions as the rows of mu_h, scaled
            // by max_norm so <phi, mu(.)> stays a convex combination.
            Mat mu(d, S);
            for (int i = 0; i < d; ++i) {
                Vec row(S);
                for (int s = 0; s < S; ++s)
                    row[s] = -std::log(std::max(rng.uniform(), 1e-300));
                row /= row.sum();
                mu.row(i) = row.transpose() * max_norm;
            }
            mdp.measures.push_back(mu);
            Vec theta(d);
            for (int i = 0; i < d; ++i) theta[i] = rng.uniform() * max_norm;
            mdp.thetas.push_back(theta);
        }
        if (validate(mdp).empty()) return mdp;
    }
    throw ContractError("generate_random_linear_mdp: failed to produce a valid instance");
}

LinearMdp build_hard_instance(int d, int H, const Mat& arm_rewards) {
    if (d < 3) throw ContractError("build_hard_instance: d must be at least 3");
    if (arm_rewards.rows() != H || arm_rewards.cols() != d - 2)
        throw ContractError("build_hard_instance: arm_rewards must be H x (d-2)");
    for (int h = 0; h < H; ++h)
        for (int i = 0; i < d - 2; ++i)
            if (arm_rewards(h, i) <= 0 || arm_rewards(h, i) > 1.0)
                throw ContractError("build_hard_instance: arm rewards must lie in (0,1]");

    // State 0 is the initial state with d-1 actions (stay + d-2 arms);
    // state 1 absorbs with a single action.
    const int S = 2, A = d - 1;
    LinearMdp mdp;
    mdp.H = H;
    mdp.initial_state = 0;
    mdp.features = FeatureTable(S, A, d);
    for (int a = 0; a < A; ++a) {
        Vec e = Vec::Zero(d);
        e[a + 1] = 1.0;  // stay action -> e_2, arm i -> e_{i+2}
        mdp.features.set_phi(0, a, e);
    }
    Vec e0 = Vec::Zero(d);
    e0[0] = 1.0;
    mdp.features.set_phi(1, 0, e0);
    for (int a = 1; a < A; ++a) mdp.features.set_valid(1, a, false);

    for (int h = 0; h < H; ++h) {
        Mat mu = Mat::Zero(d, S);
        mu(1, 0) = 1.0;                      // mu_h(s1) = (0,1,0,...)
        mu(0, 1) = 1.0;                      // mu_h(s2) = (1,0,1,...,1)
        for (int i = 2; i < d; ++i) mu(i, 1) = 1.0;
        mdp.measures.push_back(mu);
        Vec theta = Vec::Zero(d);
        for (int i = 0; i < d - 2; ++i) theta[i + 2] = arm_rewards(h, i);
        mdp.thetas.push_back(theta);
    }
    return mdp;
}

}  // namespace rfe
