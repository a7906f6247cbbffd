#pragma once

#include "covers/observation.hpp"
#include "covers/policy.hpp"

#include <compare>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace covers {

enum class TaskGroup { reach, press, close, slide };
inline constexpr int kGroupCount = 4;
const char* group_name(TaskGroup g);
TaskGroup parse_group(const std::string& name);

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

struct TaskInstance {
    TaskGroup group = TaskGroup::reach;
    GroupElement g{0};  // orbit element applied to the base placement
    bool operator==(const TaskInstance&) const = default;
};

// transform_task(t, h).g = h o t.g
TaskInstance transform_task(const TaskInstance& task, GroupElement h);

/// Static geometry of a task: base placement mapped by the task's orbit element.
struct Layout {
    Cell object;       // button / drawer handle start / plate start (unused for reach)
    Cell goal;         // reach goal / drawer closed cell / plate goal / button cell
    Cell drawer_open;  // far end of the drawer rail (close only)
    std::vector<Cell> walls;
    bool has_object = false;
    bool goal_visible = false;
};
Layout task_layout(const TaskInstance& task);

struct EnvConfig {
    int horizon = 100;
    double shaping = 0.1;
    double success_bonus = 10.0;
    int start_jitter = 0;  // agent start drawn from the (2j+1)^2 block around its base cell
};

struct EnvState {
    Cell agent;
    int grip = 0;  // 1 closed
    Cell object;
    Cell agent_start;
    Cell object_start;
    int t = 0;
    bool success = false;
    bool operator==(const EnvState&) const = default;
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
    bool success = false;
    bool truncated = false;
    TaskGroup group = TaskGroup::reach;  // ground truth, for the harness only
};

/// Planar grid-world manipulation task. Moves are the rounded first two
/// action channels; channel 3 closes (< -0.5) or opens (> 0.5) the gripper;
/// z is inert.
class Env {
public:
    explicit Env(TaskInstance task, EnvConfig cfg = {});

    Observation reset(std::uint64_t seed);
    StepResult step(std::span<const double> action);
    Observation observe() const;

    const EnvState& state() const { return state_; }
    void set_state(const EnvState& s) { state_ = s; }
    const TaskInstance& task() const { return task_; }
    const Layout& layout() const { return layout_; }
    const EnvConfig& config() const { return cfg_; }
    bool is_wall(Cell c) const;
    // The distance the dense reward penalizes.
    double relevant_distance() const;
    bool succeeded() const;

private:
    Image render(Cell agent, Cell object) const;

    TaskInstance task_;
    EnvConfig cfg_;
    Layout layout_;
    EnvState state_;
};

EnvState transform_state(const EnvState& s, GroupElement g);
// Random valid state for symmetry oracles.
EnvState random_state(const Env& env, std::mt19937_64& rng);
// Greedy expert that solves every variant; used as a test oracle.
ActionVec scripted_action(const Env& env);

// Cell <-> normalized plane coordinates in [-1, 1].
double cell_x(Cell c);
double cell_y(Cell c);

struct Phase {
    TaskGroup group = TaskGroup::reach;
    std::optional<GroupElement> orbit;  // empty: a random orbit element per episode
    int episodes = 0;
};
using Schedule = std::vector<Phase>;

const char* orbit_name(GroupElement g);  // e, m_x, m_y, r180

Schedule default_schedule(int episodes_per_phase = 200, int cycles = 2);
Schedule parse_schedule(const std::string& json_text);
Schedule load_schedule(const std::filesystem::path& path);
std::string schedule_to_json(const Schedule& s);
int schedule_episodes(const Schedule& s);

// Grayscale PGM of the current frame, `scale` pixels per cell.
void write_pgm(const Observation& obs, const std::filesystem::path& path, int scale = 8);

}  // namespace covers
