#pragma once

#include <Eigen/Cholesky>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rfexplore/linalg.hpp"
#include "rfexplore/mdp.hpp"

namespace rfe {

// Reward-free trajectories grouped by deployment, with per-layer Gram
// matrices Lambda_h = I + sum phi phi^T cached incrementally. Because the
// state space is finite, the dataset also aggregates per-layer visit and
// transition counts; every estimator consumes those aggregates, which is
// arithmetically identical to iterating samples (equal terms grouped).
class Dataset {
  public:
    Dataset() = default;
    Dataset(FeatureTable features, int H);
    Dataset(const Dataset& other);
    Dataset& operator=(const Dataset& other);
    Dataset(Dataset&&) = default;
    Dataset& operator=(Dataset&&) = default;

    const FeatureTable& features() const { return features_; }
    int H() const { return H_; }

    void append(const Trajectory& t);

    std::size_t episode_count() const { return trajectories_.size(); }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }
    std::optional<int> initial_state() const { return initial_state_; }

    // Samples folded into layer h's aggregates (the Gram watermark).
    long watermark(int h) const { return watermarks_[static_cast<std::size_t>(h)]; }

    // Lambda_h = I + sum_n phi(s_h^n, a_h^n) phi^T (cached).
    const Mat& gram(int h) const { return grams_[static_cast<std::size_t>(h)]; }
    // Recomputed from the raw trajectory list (consistency checks).
    Mat gram_direct(int h) const;

    // Cached Cholesky factor of gram(h); refreshed lazily after appends.
    const Eigen::LLT<Mat>& gram_factor(int h) const;

    // Visit counts per (s,a) at layer h, as an S x A matrix.
    const Mat& visit_counts(int h) const { return visits_[static_cast<std::size_t>(h)]; }
    // Transition counts (s,a) -> s' at layer h (defined for h < H-1 only),
    // as an (S*A) x S matrix.
    const Mat& transition_counts(int h) const;

    // Order-independent content hash (deployment, states, actions).
    std::uint64_t checksum() const;

  private:
    FeatureTable features_;
    int H_ = 0;
    std::optional<int> initial_state_;
    std::vector<Trajectory> trajectories_;
    std::vector<Mat> grams_;        // H entries, d x d
    std::vector<Mat> visits_;       // H entries, S x A
    std::vector<Mat> transitions_;  // H-1 entries, (S*A) x S
    std::vector<long> watermarks_;  // H entries
    mutable std::vector<std::unique_ptr<Eigen::LLT<Mat>>> factors_;
    mutable std::vector<long> factor_watermarks_;
};

}  // namespace rfe
