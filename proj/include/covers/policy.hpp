#pragma once

#include "covers/equivariant.hpp"
#include "covers/observation.hpp"
#include "covers/tensor.hpp"

#include <array>
#include <memory>
#include <random>

namespace covers {

enum class ExtractorKind { equivariant, cnn };

struct PolicyConfig {
    ExtractorKind kind = ExtractorKind::equivariant;
    ExtractorConfig extractor{4, 8, 4, 2, 1, 8};
    int head_fields = 16;  // regular fields in the equivariant policy head (dense width = fields * |G|)
    int value_width = 64;
    double log_std_init = 0.0;
};

using ActionVec = std::array<double, kActionDim>;

struct ActionDist {
    ActionVec loc{};   // pre-squash Gaussian mean
    ActionVec mean{};  // tanh(loc)
    ActionVec std{};   // exp(log_std), state independent
};

struct Sample {
    ActionVec action{};   // tanh(u), what the environment receives
    ActionVec raw{};      // u = loc + std * xi
    double log_prob = 0.0;
};

struct BundleOutput {
    Var loc;      // [N, 4]
    Var log_std;  // [4]
    Var value;    // [N]
    Features features;
};

/// Actor-critic sharing one feature extractor: equivariant action mean,
/// invariant value, state-independent diagonal Gaussian.
class PolicyBundle {
public:
    PolicyBundle(const PolicyConfig& cfg, std::uint64_t seed);
    PolicyBundle(const PolicyBundle&) = delete;
    PolicyBundle& operator=(const PolicyBundle&) = delete;

    BundleOutput forward(const ObsBatch& batch) const;
    // Invariant features only, as a plain [N, F] array.
    Array invariant_features(const ObsBatch& batch) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    Adam& optimizer() { return adam_; }
    const PolicyConfig& config() const { return cfg_; }
    const FeatureExtractor& extractor() const { return *extractor_; }
    const GroupSpec& group() const { return group_; }
    // Bumped by every parameter update; lets callers cache features.
    std::uint64_t version() const { return version_; }
    void mark_updated() { ++version_; }

private:
    PolicyConfig cfg_;
    GroupSpec group_;
    ParamStore store_;
    std::unique_ptr<FeatureExtractor> extractor_;
    std::unique_ptr<EquivariantLinear> head1_;
    std::unique_ptr<EquivariantLinear> head2_;
    Var dense_w1_, dense_b1_, dense_w2_, dense_b2_;
    Var value_w1_, value_b1_, value_w2_, value_b2_;
    Var log_std_;
    Adam adam_;
    std::uint64_t version_ = 0;
};

ActionDist action_dist(const PolicyBundle& bundle, const Observation& obs);
std::vector<ActionDist> action_dist(const PolicyBundle& bundle, std::span<const Observation* const> obs);
double value(const PolicyBundle& bundle, const Observation& obs);

// Sum over channels of log(1 - tanh(u)^2), computed as 2 (log 2 - u - softplus(-2u)).
double tanh_log_jacobian(std::span<const double> u);

// u = loc + std * xi, action = tanh(u); log_prob is the density of the squashed action.
Sample sample_with_noise(const ActionDist& dist, const ActionVec& xi);
Sample sample_action(const PolicyBundle& bundle, const Observation& obs, std::mt19937_64& rng);
ActionVec draw_noise(std::mt19937_64& rng);

}  // namespace covers
