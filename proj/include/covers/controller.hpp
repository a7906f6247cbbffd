#pragma once

#include "covers/frame_buffer.hpp"
#include "covers/rollout.hpp"
#include "covers/transport.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace covers {

enum class Method { covers, covers_gt, covers_cnn, equi, cnn };

const char* method_name(Method m);
// Throws std::invalid_argument for unknown names; "3rl" and "clear" are
// reserved and raise std::runtime_error("... not implemented").
Method parse_method(const std::string& name);
bool uses_assignment(Method m);

struct ControllerConfig {
    double d_eps = 1.5;
    int k_frames = 4;
    int update_interval = 10;  // N_u, in episodes
    int rollout_steps = 1000;  // N_s
    std::size_t buffer_capacity = 128;
    void validate() const;
};

struct PolicyEntry {
    std::unique_ptr<PolicyBundle> bundle;
    FrameBuffer buffer;
    int created_episode = 0;
    std::uint64_t buffer_revision = 0;
    std::optional<TaskGroup> label;  // covers_gt only
};

class PolicyCollection {
public:
    std::size_t size() const { return entries_.size(); }
    PolicyEntry& operator[](std::size_t i) { return entries_.at(i); }
    const PolicyEntry& operator[](std::size_t i) const { return entries_.at(i); }
    std::size_t add(std::unique_ptr<PolicyBundle> bundle, FrameBuffer buffer, int episode);

private:
    std::vector<PolicyEntry> entries_;
};

struct AssignmentDecision {
    int trigger = 0;
    int episode = 0;                 // first episode of the trigger rollout
    std::vector<double> distances;   // per entry; +inf for an empty buffer
    int chosen = 0;
    int previous = 0;
    bool spawned = false;
    int rollout_episodes = 0;
    int rollout_steps = 0;
    TaskGroup majority_group = TaskGroup::reach;  // ground truth, for scoring only
    double wall_seconds = 0.0;
};

struct EpisodeRecord {
    int episode = 0;
    TaskInstance task;
    int policy = 0;
    double reward = 0.0;
    bool success = false;
    int length = 0;
    int collection_size = 0;
};

struct IntervalStats {
    std::vector<EpisodeRecord> episodes;
    std::optional<AssignmentDecision> decision;
    std::optional<UpdateStats> update;
};

// Mixes a run seed with stream and index tags into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Task-agnostic continual learner. Every N_u episodes it rolls out the
/// current policy, compares the rollout's initial frames against each
/// stored buffer, spawns or recalls a policy and runs a PPO update on the
/// episodes gathered since the previous update.
class Controller {
public:
    Controller(Method method, ControllerConfig cfg, PolicyConfig policy, PpoConfig ppo, EnvConfig env,
               std::uint64_t seed);

    // Runs from the current episode up to (not including) the next trigger, or
    // through the trigger rollout if the current episode is a trigger. `tasks`
    // holds the task of every schedule episode; returns empty stats once exhausted.
    IntervalStats train_interval(std::span<const TaskInstance> tasks);

    // Assigns a policy to the given rollout; exposed for tests.
    AssignmentDecision maybe_reassign(std::span<const EpisodeResult> rollout, int episode);

    const std::vector<std::pair<int, int>>& assignment_trace() const { return trace_; }
    const std::vector<AssignmentDecision>& decisions() const { return decisions_; }
    const PolicyCollection& collection() const { return pi_; }
    PolicyCollection& collection() { return pi_; }
    int current() const { return current_; }
    int episode() const { return n_; }
    const RolloutBuffer& pending() const { return d_; }
    Method method() const { return method_; }
    const ControllerConfig& config() const { return cfg_; }

private:
    std::unique_ptr<PolicyBundle> make_bundle(std::size_t index) const;
    const Eigen::MatrixXd& buffer_features(std::size_t i);
    EpisodeSpec spec_for(const TaskInstance& task, int episode) const;

    Method method_;
    ControllerConfig cfg_;
    PolicyConfig policy_cfg_;
    PpoConfig ppo_cfg_;
    EnvConfig env_cfg_;
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    PolicyCollection pi_;
    int current_ = 0;
    int n_ = 0;
    RolloutBuffer d_;
    std::vector<std::pair<int, int>> trace_;
    std::vector<AssignmentDecision> decisions_;
    struct CacheEntry {
        std::uint64_t version = ~0ULL;
        std::uint64_t revision = ~0ULL;
        Eigen::MatrixXd features;
    };
    std::map<std::size_t, CacheEntry> cache_;
};

}  // namespace covers
