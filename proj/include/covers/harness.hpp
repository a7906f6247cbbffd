#pragma once

#include "covers/controller.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace covers {

struct RunConfig {
    Method method = Method::covers;
    Schedule schedule = default_schedule();
    std::vector<std::uint64_t> seeds{0};
    ControllerConfig controller;
    PpoConfig ppo;
    PolicyConfig policy;
    EnvConfig env;
    bool checkpoints = true;
    void validate() const;
};

// JSON schema (every key optional):
// {
//   "method": "covers" | "covers_gt" | "covers_cnn" | "equi" | "cnn",
//   "schedule": [ {"group": "reach", "orbit": "all" | "e" | "m_x" | "m_y" | "r180" | 0..3, "episodes": 200}, ... ]
//               or "path/to/schedule.json" (relative to the config file),
//   "seeds": [0, 1, 2],
//   "controller": {"d_eps", "k_frames", "update_interval", "rollout_steps", "buffer_capacity"},
//   "ppo": {"clip", "gamma", "lambda", "epochs", "batch_size", "lr", "entropy_coef", "max_kl",
//           "value_coef", "max_grad_norm", "normalize_advantages"},
//   "policy": {"conv1_fields", "conv2_fields", "mlp_width", "init_gain", "head_fields", "value_width",
//              "log_std_init"},
//   "env": {"horizon", "shaping", "success_bonus", "start_jitter"},
//   "checkpoints": true
// }
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

// Task of every episode; "all" phases draw the orbit element from the seed.
std::vector<TaskInstance> schedule_tasks(const Schedule& schedule, std::uint64_t seed);
// Phase index of every episode.
std::vector<int> schedule_phases(const Schedule& schedule);
// First episode after every group of the schedule has appeared once.
int first_cycle_end(const Schedule& schedule);

struct Progress {
    std::uint64_t seed = 0;
    int episodes_done = 0;
    int episodes_total = 0;
    const IntervalStats* interval = nullptr;
    int policies = 0;
};
using ProgressFn = std::function<void(const Progress&)>;

// Writes <dir>/config.json and one seed_<s>/ directory per seed holding
// metrics.csv, updates.csv, decisions.jsonl, timing.csv and checkpoints/.
void run(const RunConfig& cfg, const std::filesystem::path& dir, const ProgressFn& progress = {});
void run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& seed_dir,
              const ProgressFn& progress = {});

struct EpisodeRow {
    int episode = 0;
    int phase = 0;
    TaskGroup group = TaskGroup::reach;
    int orbit = 0;
    int policy = 0;
    double reward = 0.0;
    bool success = false;
    int length = 0;
    int policies = 0;
};
std::vector<EpisodeRow> read_metrics(const std::filesystem::path& csv);

struct Stat {
    double mean = 0.0;
    double se = 0.0;  // sample std / sqrt(n); 0 for a single value
    int n = 0;
};
Stat mean_se(std::span<const double> xs);

// Greedy one-to-one matching of policy indices to ground-truth groups by
// co-occurrence counts; returns the matched fraction (NaN if empty).
double assignment_accuracy(std::span<const std::pair<TaskGroup, int>> trace);

struct SeedScore {
    std::uint64_t seed = 0;
    std::array<double, kGroupCount> success{};
    std::array<double, kGroupCount> reward{};
    std::array<bool, kGroupCount> present{};
    double avg_success = 0.0;
    double avg_reward = 0.0;
    double accuracy = 0.0;  // NaN without assignment or triggers after the first cycle
    int spawns = 0;
    int policies = 0;
};

struct Summary {
    std::string method;
    std::vector<SeedScore> seeds;
    std::array<Stat, kGroupCount> success{};
    std::array<Stat, kGroupCount> reward{};
    std::array<bool, kGroupCount> present{};
    Stat avg_success, avg_reward, accuracy, policies;
};

// Scores the last 20% of the final phase of each group.
SeedScore score_seed(const std::filesystem::path& seed_dir, const Schedule& schedule);
Summary score(const std::filesystem::path& dir);
std::string format_summary(const Summary& s);
std::string summary_to_json(const Summary& s);

// Reward curves with phase bands (rewards.svg) and one assignment trace per
// seed (assignment_<seed>.svg). Several run directories overlay their methods.
void plot(std::span<const std::filesystem::path> dirs, const std::filesystem::path& out_dir);

}  // namespace covers
