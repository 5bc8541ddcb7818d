#include "rfexplore/dataset.hpp"

#include "rfexplore/errors.hpp"

namespace rfe {

Dataset::Dataset(const Dataset& other)
    : features_(other.features_),
      H_(other.H_),
      initial_state_(other.initial_state_),
      trajectories_(other.trajectories_),
      grams_(other.grams_),
      visits_(other.visits_),
      transitions_(other.transitions_),
      watermarks_(other.watermarks_) {
    // The factorization cache is rebuilt lazily.
    factors_.resize(static_cast<std::size_t>(H_));
    factor_watermarks_.assign(static_cast<std::size_t>(H_), -1);
}

Dataset& Dataset::operator=(const Dataset& other) {
    if (this == &other) return *this;
    Dataset tmp(other);
    *this = std::move(tmp);
    return *this;
}

Dataset::Dataset(FeatureTable features, int H) : features_(std::move(features)), H_(H) {
    if (H <= 0) throw ContractError("Dataset: horizon must be positive");
    const int d = features_.dim();
    grams_.assign(static_cast<std::size_t>(H), Mat::Identity(d, d));
    visits_.assign(static_cast<std::size_t>(H), Mat::Zero(features_.S(), features_.A()));
    if (H > 1)
        transitions_.assign(static_cast<std::size_t>(H) - 1,
                            Mat::Zero(features_.S() * features_.A(), features_.S()));
    watermarks_.assign(static_cast<std::size_t>(H), 0);
    factors_.resize(static_cast<std::size_t>(H));
    factor_watermarks_.assign(static_cast<std::size_t>(H), -1);
}

void Dataset::append(const Trajectory& t) {
    if (H_ == 0) throw ContractError("Dataset: default-constructed");
    if (static_cast<int>(t.states.size()) != H_ || static_cast<int>(t.actions.size()) != H_)
        throw ContractError("Dataset: trajectory length differs from horizon");
    if (initial_state_ && t.states[0] != *initial_state_)
        throw ContractError("Dataset: trajectory starts at state " + std::to_string(t.states[0]) +
                            ", expected " + std::to_string(*initial_state_));
    for (int h = 0; h < H_; ++h) {
        const int s = t.states[static_cast<std::size_t>(h)];
        const int a = t.actions[static_cast<std::size_t>(h)];
        if (s < 0 || s >= features_.S() || a < 0 || a >= features_.A() || !features_.valid(s, a))
            throw ContractError("Dataset: invalid (state, action) at layer " + std::to_string(h));
    }
    if (!initial_state_) initial_state_ = t.states[0];

    trajectories_.push_back(t);
    for (int h = 0; h < H_; ++h) {
        const int s = t.states[static_cast<std::size_t>(h)];
        const int a = t.actions[static_cast<std::size_t>(h)];
        const Vec phi = features_.phi(s, a);
        grams_[static_cast<std::size_t>(h)] += phi * phi.transpose();
        visits_[static_cast<std::size_t>(h)](s, a) += 1.0;
        if (h + 1 < H_)
            transitions_[static_cast<std::size_t>(h)](features_.index(s, a),
                                                      t.states[static_cast<std::size_t>(h) + 1]) += 1.0;
        watermarks_[static_cast<std::size_t>(h)] += 1;
    }
}

Mat Dataset::gram_direct(int h) const {
    const int d = features_.dim();
    Mat g = Mat::Identity(d, d);
    for (const auto& t : trajectories_) {
        const Vec phi = features_.phi(t.states[static_cast<std::size_t>(h)],
                                      t.actions[static_cast<std::size_t>(h)]);
        g += phi * phi.transpose();
    }
    return g;
}

const Eigen::LLT<Mat>& Dataset::gram_factor(int h) const {
    auto& slot = factors_[static_cast<std::size_t>(h)];
    if (!slot || factor_watermarks_[static_cast<std::size_t>(h)] != watermark(h)) {
        slot = std::make_unique<Eigen::LLT<Mat>>(grams_[static_cast<std::size_t>(h)]);
        if (slot->info() != Eigen::Success)
            throw SingularityError("Dataset: Gram factorization failed at layer " + std::to_string(h));
        factor_watermarks_[static_cast<std::size_t>(h)] = watermark(h);
    }
    return *slot;
}

const Mat& Dataset::transition_counts(int h) const {
    if (h < 0 || h + 1 >= H_)
        throw ContractError("Dataset: transition counts undefined at layer " + std::to_string(h));
    return transitions_[static_cast<std::size_t>(h)];
}

std::uint64_t Dataset::checksum() const {
    // FNV-1a over the integer content.
    std::uint64_t hash = 1469598103934665603ULL;
    auto mix = [&hash](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            hash ^= (v >> (8 * b)) & 0xFF;
            hash *= 1099511628211ULL;
        }
    };
    mix(trajectories_.size());
    for (const auto& t : trajectories_) {
        mix(static_cast<std::uint64_t>(t.deployment_index));
        for (int s : t.states) mix(static_cast<std::uint64_t>(s));
        for (int a : t.actions) mix(static_cast<std::uint64_t>(a));
    }
    return hash;
}

}  // namespace rfe
