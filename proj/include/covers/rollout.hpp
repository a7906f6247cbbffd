#pragma once

#include "covers/env.hpp"
#include "covers/ppo.hpp"

#include <vector>

namespace covers {

struct EpisodeSpec {
    TaskInstance task;
    std::uint64_t reset_seed = 0;
    std::uint64_t noise_seed = 0;
    // Each drawn noise vector is mapped through the action representation of
    // this element; pairing a task with its g-twin this way gives transformed samples.
    GroupElement noise_transform{0};
    bool deterministic = false;  // act with tanh(mean)
};

struct EpisodeResult {
    TaskInstance task;
    double total_reward = 0.0;
    bool success = false;
    int length = 0;
    std::vector<Transition> transitions;
    std::vector<Observation> first_frames;  // s_0 .. s_{k-1}
};

// Runs the episodes in lockstep with batched inference. Each episode draws
// noise from its own generator.
std::vector<EpisodeResult> run_episodes(const PolicyBundle& bundle, std::span<const EpisodeSpec> specs,
                                        const EnvConfig& env_cfg, int k_frames, bool keep_transitions = true);

}  // namespace covers
