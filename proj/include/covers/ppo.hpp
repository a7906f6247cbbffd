#pragma once

#include "covers/policy.hpp"

#include <optional>
#include <random>
#include <vector>

namespace covers {

struct PpoConfig {
    double clip = 0.2;
    double gamma = 0.99;
    double lambda = 0.95;
    int epochs = 8;
    int batch_size = 64;
    double lr = 3e-4;
    double entropy_coef = 0.001;
    double max_kl = 0.05;
    int rollout_steps = 1000;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
};

struct Transition {
    Observation obs;
    ActionVec raw{};  // pre-squash sample u
    double reward = 0.0;
    double log_prob_old = 0.0;
    double value_old = 0.0;
    bool terminal = false;     // success: no bootstrap
    bool episode_end = false;  // terminal or truncated
    std::optional<Observation> final_obs;  // successor of a truncated episode end
    double bootstrap_value = 0.0;          // V(final_obs) under the behaviour bundle
    int t = 0;
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

// values has one extra trailing entry (the bootstrap for the last state).
// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, accumulation stops at dones.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                      double gamma, double lambda);
// General form: next_values[t] is the value of s_{t+1}; terminals zero it, episode ends cut the sum.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const double> next_values, std::span<const bool> terminals,
                      std::span<const bool> episode_ends, double gamma, double lambda);

class RolloutBuffer {
public:
    void add(Transition t);
    void append(std::vector<Transition> episode);
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    void clear();

    // Recomputes log_prob_old, value_old and bootstrap values under `bundle`
    // (needed when the bundle being trained did not collect the data).
    void refresh(const PolicyBundle& bundle);
    void finalize(const PpoConfig& cfg);
    bool finalized() const { return finalized_; }

    const std::vector<Transition>& transitions() const { return data_; }
    const std::vector<double>& advantages() const { return adv_; }
    const std::vector<double>& returns() const { return ret_; }

private:
    std::vector<Transition> data_;
    std::vector<double> adv_;
    std::vector<double> ret_;
    bool finalized_ = false;
};

// min(rho A, clip(rho, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double eps);

struct LossTerms {
    Var loss;
    double surrogate = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
};

// Loss on the transitions at `indices`: -mean surrogate + value_coef * MSE - entropy_coef * entropy.
LossTerms clip_loss(const PolicyBundle& bundle, const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                    const PpoConfig& cfg);

struct UpdateStats {
    int epochs = 0;
    int minibatches = 0;
    bool early_stopped = false;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double explained_variance = 0.0;
    std::size_t samples = 0;
};

// Finalizes the buffer if needed; the caller clears it afterwards.
UpdateStats ppo_update(PolicyBundle& bundle, RolloutBuffer& buffer, const PpoConfig& cfg, std::mt19937_64& rng);

}  // namespace covers
