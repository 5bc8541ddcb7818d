#pragma once

// Test-only oracles: independent of the implementation paths they check.

#include <cmath>
#include <vector>

#include "rfexplore/dataset.hpp"
#include "rfexplore/mdp.hpp"
#include "rfexplore/policies.hpp"
#include "rfexplore/rng.hpp"

namespace rfe::test {

// Random row-stochastic tabular instance embedded as a canonical-basis
// linear MDP.
inline LinearMdp random_tabular(int S, int A, int H, Rng rng) {
    std::vector<Mat> transitions, rewards;
    for (int h = 0; h < H; ++h) {
        Mat tr(S * A, S);
        for (int i = 0; i < S * A; ++i) {
            Vec row(S);
            for (int s = 0; s < S; ++s) row[s] = -std::log(rng.uniform() + 1e-12);
            row /= row.sum();
            tr.row(i) = row.transpose();
        }
        Mat rw(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) rw(s, a) = rng.uniform();
        transitions.push_back(tr);
        rewards.push_back(rw);
    }
    return tabular_to_linear(transitions, rewards, 0);
}

// Exact E_pi r(s_h, a_h) through occupancies (independent of the LSVI path).
inline double occupancy_expectation(const LinearMdp& mdp, const DeterministicPolicy& policy,
                                    int h, const std::function<double(int, int)>& r) {
    const Mat occ = dp_occupancy(mdp, policy, h);
    double total = 0;
    for (int s = 0; s < occ.rows(); ++s)
        for (int a = 0; a < occ.cols(); ++a)
            if (occ(s, a) > 0) total += occ(s, a) * r(s, a);
    return total;
}

// Dataset of n on-policy rollouts.
inline Dataset rollout_dataset(const LinearMdp& mdp, const DeterministicPolicy& policy, int n,
                               Rng& rng, int deployment = 0) {
    Dataset data(mdp.features, mdp.H);
    for (int i = 0; i < n; ++i) {
        Trajectory t = sample_trajectory(mdp, policy, rng);
        t.deployment_index = deployment;
        data.append(t);
    }
    return data;
}

inline Dataset rollout_dataset(const LinearMdp& mdp, const MixturePolicy& policy, int n,
                               Rng& rng, int deployment = 0) {
    Dataset data(mdp.features, mdp.H);
    for (int i = 0; i < n; ++i) {
        Trajectory t = sample_trajectory(mdp, policy, rng);
        t.deployment_index = deployment;
        data.append(t);
    }
    return data;
}

}  // namespace rfe::test
