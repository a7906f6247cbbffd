#include "covers/env.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace covers {

namespace {

const SpatialAction& arena_action() {
    static const SpatialAction act(GroupSpec::d2(), kArenaSize, kArenaSize);
    return act;
}

Cell map_cell(GroupElement g, Cell c) {
    const auto [r, col] = arena_action().map_cell(g, c.row, c.col);
    return {r, col};
}

bool in_grid(Cell c) { return c.row >= 0 && c.row < kArenaSize && c.col >= 0 && c.col < kArenaSize; }

int sgn(int v) { return (v > 0) - (v < 0); }

double dist(Cell a, Cell b) { return std::hypot(a.row - b.row, a.col - b.col); }

// Base placements for the identity orbit element.
Layout base_layout(TaskGroup group) {
    Layout l;
    switch (group) {
        case TaskGroup::reach:
            l.goal = {4, 3};
            break;
        case TaskGroup::press:
            l.object = {5, 6};
            l.goal = l.object;
            l.has_object = true;
            break;
        case TaskGroup::close:
            l.object = {6, 8};
            l.goal = {6, 4};
            l.drawer_open = {6, 8};
            l.has_object = true;
            for (int c = 2; c <= 5; ++c) {
                l.walls.push_back({5, c});
                l.walls.push_back({7, c});
            }
            break;
        case TaskGroup::slide:
            l.object = {10, 10};
            l.goal = {6, 6};
            l.has_object = true;
            l.goal_visible = true;
            break;
    }
    return l;
}

constexpr Cell kAgentBase{12, 12};

}  // namespace

const char* group_name(TaskGroup g) {
    switch (g) {
        case TaskGroup::reach: return "reach";
        case TaskGroup::press: return "press";
        case TaskGroup::close: return "close";
        case TaskGroup::slide: return "slide";
    }
    return "?";
}

TaskGroup parse_group(const std::string& name) {
    for (int i = 0; i < kGroupCount; ++i)
        if (name == group_name(static_cast<TaskGroup>(i))) return static_cast<TaskGroup>(i);
    throw std::invalid_argument("unknown task group '" + name + "' (expected reach, press, close or slide)");
}

TaskInstance transform_task(const TaskInstance& task, GroupElement h) {
    return {task.group, GroupSpec::d2().compose(h, task.g)};
}

Layout task_layout(const TaskInstance& task) {
    Layout l = base_layout(task.group);
    l.object = map_cell(task.g, l.object);
    l.goal = map_cell(task.g, l.goal);
    l.drawer_open = map_cell(task.g, l.drawer_open);
    for (auto& w : l.walls) w = map_cell(task.g, w);
    std::sort(l.walls.begin(), l.walls.end());
    return l;
}

double cell_x(Cell c) { return (c.col - 7.5) / 7.5; }
double cell_y(Cell c) { return (c.row - 7.5) / 7.5; }

Env::Env(TaskInstance task, EnvConfig cfg) : task_(task), cfg_(cfg), layout_(task_layout(task)) {
    if (cfg_.horizon < 1) throw std::invalid_argument("Env: horizon must be positive");
    if (cfg_.start_jitter < 0 || cfg_.start_jitter > 3) throw std::invalid_argument("Env: start_jitter must be in [0, 3]");
}

bool Env::is_wall(Cell c) const { return std::binary_search(layout_.walls.begin(), layout_.walls.end(), c); }

Observation Env::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> jitter(-cfg_.start_jitter, cfg_.start_jitter);
    const int dr = jitter(rng);
    const int dc = jitter(rng);
    state_ = EnvState{};
    state_.agent = map_cell(task_.g, {kAgentBase.row + dr, kAgentBase.col + dc});
    state_.object = layout_.object;
    state_.agent_start = state_.agent;
    state_.object_start = state_.object;
    return observe();
}

Image Env::render(Cell agent, Cell object) const {
    Image img(kImagePlanes, kArenaSize, kArenaSize);
    img.at(0, agent.row, agent.col) = 1.0;
    if (layout_.has_object) img.at(1, object.row, object.col) = 1.0;
    if (layout_.goal_visible) img.at(2, layout_.goal.row, layout_.goal.col) = 1.0;
    for (const auto& w : layout_.walls) img.at(3, w.row, w.col) = 1.0;
    return img;
}

Observation Env::observe() const {
    Observation o;
    o.image = render(state_.agent, state_.object);
    o.initial = render(state_.agent_start, state_.object_start);
    o.state = {cell_x(state_.agent), cell_y(state_.agent), 0.0, static_cast<double>(state_.grip)};
    if (task_.group == TaskGroup::reach) o.aux = {cell_x(layout_.goal), cell_y(layout_.goal), 0.0};
    return o;
}

double Env::relevant_distance() const {
    const auto& s = state_;
    switch (task_.group) {
        case TaskGroup::reach: return dist(s.agent, layout_.goal);
        case TaskGroup::press: return dist(s.agent, layout_.goal);
        case TaskGroup::close:
        case TaskGroup::slide: return dist(s.agent, s.object) + dist(s.object, layout_.goal);
    }
    return 0.0;
}

bool Env::succeeded() const {
    const auto& s = state_;
    switch (task_.group) {
        case TaskGroup::reach: return s.agent == layout_.goal;
        case TaskGroup::press: return s.agent == layout_.goal && s.grip == 1;
        case TaskGroup::close: return s.object == layout_.goal;
        case TaskGroup::slide:
            return std::abs(s.object.row - layout_.goal.row) <= 1 && std::abs(s.object.col - layout_.goal.col) <= 1;
    }
    return false;
}

StepResult Env::step(std::span<const double> action) {
    if (action.size() != kActionDim) throw std::invalid_argument("Env::step: action must have 4 channels");
    if (state_.success || state_.t >= cfg_.horizon) throw std::logic_error("Env::step: episode is over; call reset");
    auto ch = [&](std::size_t i) { return std::clamp(std::isfinite(action[i]) ? action[i] : 0.0, -1.0, 1.0); };
    if (ch(3) < -0.5) state_.grip = 1;
    if (ch(3) > 0.5) state_.grip = 0;
    const int dc = static_cast<int>(std::round(ch(0)));
    const int dr = static_cast<int>(std::round(ch(1)));
    Cell target{std::clamp(state_.agent.row + dr, 0, kArenaSize - 1), std::clamp(state_.agent.col + dc, 0, kArenaSize - 1)};
    const Cell delta{target.row - state_.agent.row, target.col - state_.agent.col};
    const bool pushable = task_.group == TaskGroup::close || task_.group == TaskGroup::slide;
    if (!is_wall(target)) {
        if (pushable && target == state_.object) {
            Cell moved{state_.object.row + delta.row, state_.object.col + delta.col};
            bool ok = in_grid(moved) && !is_wall(moved);
            if (task_.group == TaskGroup::close) {
                // the drawer only takes the horizontal part of a push
                const int lo = std::min(layout_.goal.col, layout_.drawer_open.col);
                const int hi = std::max(layout_.goal.col, layout_.drawer_open.col);
                moved = {state_.object.row, state_.object.col + delta.col};
                ok = delta.col != 0 && moved.col >= lo && moved.col <= hi;
            }
            if (ok) {
                state_.object = moved;
                state_.agent = target;
            }
        } else {
            state_.agent = target;
        }
    }
    ++state_.t;
    state_.success = succeeded();
    StepResult r;
    r.success = state_.success;
    r.reward = -cfg_.shaping * relevant_distance() + (r.success ? cfg_.success_bonus : 0.0);
    r.truncated = !r.success && state_.t >= cfg_.horizon;
    r.done = r.success || r.truncated;
    r.group = task_.group;
    r.obs = observe();
    return r;
}

EnvState transform_state(const EnvState& s, GroupElement g) {
    EnvState o = s;
    o.agent = map_cell(g, s.agent);
    o.object = map_cell(g, s.object);
    o.agent_start = map_cell(g, s.agent_start);
    o.object_start = map_cell(g, s.object_start);
    return o;
}

EnvState random_state(const Env& env, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> cell(0, kArenaSize - 1);
    const auto& l = env.layout();
    auto free_cell = [&](std::optional<Cell> avoid) {
        for (;;) {
            const Cell c{cell(rng), cell(rng)};
            if (!env.is_wall(c) && (!avoid || c != *avoid)) return c;
        }
    };
    auto object_cell = [&]() -> Cell {
        switch (env.task().group) {
            case TaskGroup::close: {
                const int lo = std::min(l.goal.col, l.drawer_open.col);
                const int hi = std::max(l.goal.col, l.drawer_open.col);
                for (;;) {
                    const Cell c{l.goal.row, std::uniform_int_distribution<int>(lo, hi)(rng)};
                    if (c != l.goal) return c;
                }
            }
            case TaskGroup::slide: {
                for (;;) {
                    const Cell c = free_cell(std::nullopt);
                    if (std::max(std::abs(c.row - l.goal.row), std::abs(c.col - l.goal.col)) > 1) return c;
                }
            }
            default: return l.object;
        }
    };
    EnvState s;
    s.object = object_cell();
    const bool pushable = env.task().group == TaskGroup::close || env.task().group == TaskGroup::slide;
    s.agent = free_cell(pushable ? std::optional<Cell>(s.object) : std::nullopt);
    s.grip = static_cast<int>(rng() % 2);
    s.object_start = object_cell();
    s.agent_start = free_cell(std::nullopt);
    s.t = std::uniform_int_distribution<int>(0, env.config().horizon - 1)(rng);
    if (env.task().group == TaskGroup::reach && s.agent == l.goal) s.agent = free_cell(l.goal);
    if (env.task().group == TaskGroup::press && s.agent == l.goal) s.grip = 0;
    return s;
}

ActionVec scripted_action(const Env& env) {
    const auto& s = env.state();
    const auto& l = env.layout();
    const bool pushable = env.task().group == TaskGroup::close || env.task().group == TaskGroup::slide;
    auto toward = [&](Cell target) -> Cell {
        const Cell d{sgn(target.row - s.agent.row), sgn(target.col - s.agent.col)};
        for (const Cell c : {d, Cell{d.row, 0}, Cell{0, d.col}}) {
            if (c == Cell{0, 0}) continue;
            const Cell next{s.agent.row + c.row, s.agent.col + c.col};
            if (env.is_wall(next) || (pushable && next == s.object)) continue;
            return c;
        }
        return d;
    };
    Cell move{0, 0};
    double grip = 0.0;
    switch (env.task().group) {
        case TaskGroup::reach: move = toward(l.goal); break;
        case TaskGroup::press:
            move = toward(l.goal);
            grip = -1.0;
            break;
        case TaskGroup::close:
        case TaskGroup::slide: {
            const Cell d{sgn(l.goal.row - s.object.row), sgn(l.goal.col - s.object.col)};
            const Cell stand{s.object.row - d.row, s.object.col - d.col};
            move = s.agent == stand ? d : toward(stand);
            break;
        }
    }
    return {static_cast<double>(move.col), static_cast<double>(move.row), 0.0, grip};
}

// ---------------------------------------------------------------------------

Schedule default_schedule(int episodes_per_phase, int cycles) {
    Schedule s;
    for (int c = 0; c < cycles; ++c)
        for (int g = 0; g < kGroupCount; ++g) s.push_back({static_cast<TaskGroup>(g), std::nullopt, episodes_per_phase});
    return s;
}

namespace {

GroupElement parse_orbit(const nlohmann::json& j) {
    const auto d2 = GroupSpec::d2();
    if (j.is_number_integer()) {
        const int v = j.get<int>();
        if (v < 0 || v >= d2.size()) throw std::invalid_argument("schedule: orbit index out of range");
        return {v};
    }
    const auto name = j.get<std::string>();
    if (name == "e") return d2::e;
    if (name == "m_x") return d2::m_x;
    if (name == "m_y") return d2::m_y;
    if (name == "r180") return d2::r180;
    throw std::invalid_argument("schedule: unknown orbit element '" + name + "'");
}

}  // namespace

const char* orbit_name(GroupElement g) {
    static const char* names[] = {"e", "m_x", "m_y", "r180"};
    return names[g.index];
}

Schedule parse_schedule(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("schedule: ") + e.what());
    }
    if (j.is_object() && j.contains("phases")) j = j["phases"];
    if (!j.is_array()) throw std::invalid_argument("schedule: expected an array of phases");
    Schedule s;
    for (const auto& p : j) {
        if (!p.is_object() || !p.contains("group") || !p.contains("episodes"))
            throw std::invalid_argument("schedule: each phase needs 'group' and 'episodes'");
        Phase ph;
        ph.group = parse_group(p["group"].get<std::string>());
        ph.episodes = p["episodes"].get<int>();
        if (ph.episodes < 0) throw std::invalid_argument("schedule: negative episode count");
        if (p.contains("orbit") && !(p["orbit"].is_string() && p["orbit"].get<std::string>() == "all"))
            ph.orbit = parse_orbit(p["orbit"]);
        s.push_back(ph);
    }
    return s;
}

Schedule load_schedule(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("schedule: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schedule(ss.str());
}

std::string schedule_to_json(const Schedule& s) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : s)
        j.push_back({{"group", group_name(p.group)},
                     {"orbit", p.orbit ? orbit_name(*p.orbit) : "all"},
                     {"episodes", p.episodes}});
    return j.dump(2);
}

int schedule_episodes(const Schedule& s) {
    int n = 0;
    for (const auto& p : s) n += p.episodes;
    return n;
}

void write_pgm(const Observation& obs, const std::filesystem::path& path, int scale) {
    const int h = kArenaSize * scale;
    const int w = kArenaSize * scale;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << w << " " << h << "\n255\n";
    static constexpr unsigned char shade[kImagePlanes] = {255, 170, 110, 60};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            unsigned char v = 0;
            for (int c = kImagePlanes - 1; c >= 0; --c)
                if (obs.image.at(c, y / scale, x / scale) > 0.5) v = shade[c];
            out.put(static_cast<char>(v));
        }
}

}  // namespace covers
