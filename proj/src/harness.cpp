#include "covers/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace covers {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    for (const auto& [k, v] : j.items())
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            throw std::invalid_argument("config: unknown key '" + k + "' in " + where);
}

}  // namespace

void RunConfig::validate() const {
    controller.validate();
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (env.horizon < 1) throw std::invalid_argument("config: env.horizon must be >= 1");
    if (env.start_jitter < 0 || env.start_jitter > 3) throw std::invalid_argument("config: env.start_jitter must be in [0, 3]");
    if (ppo.epochs < 1 || ppo.batch_size < 1) throw std::invalid_argument("config: ppo epochs and batch_size must be >= 1");
    if (!(ppo.lr > 0.0) || !(ppo.clip > 0.0)) throw std::invalid_argument("config: ppo lr and clip must be positive");
    if (policy.extractor.conv1_fields < 1 || policy.extractor.conv2_fields < 1 || policy.extractor.mlp_width < 1)
        throw std::invalid_argument("config: extractor widths must be >= 1");
}

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    check_keys(j, {"method", "schedule", "seeds", "controller", "ppo", "policy", "env", "checkpoints"}, "config");
    RunConfig c;
    try {
        if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            c.schedule = s.is_string() ? load_schedule(base_dir / s.get<std::string>()) : parse_schedule(s.dump());
        }
        if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("controller")) {
            const auto& k = j["controller"];
            check_keys(k, {"d_eps", "k_frames", "update_interval", "rollout_steps", "buffer_capacity"}, "controller");
            take(k, "d_eps", c.controller.d_eps);
            take(k, "k_frames", c.controller.k_frames);
            take(k, "update_interval", c.controller.update_interval);
            take(k, "rollout_steps", c.controller.rollout_steps);
            take(k, "buffer_capacity", c.controller.buffer_capacity);
        }
        if (j.contains("ppo")) {
            const auto& k = j["ppo"];
            check_keys(k, {"clip", "gamma", "lambda", "epochs", "batch_size", "lr", "entropy_coef", "max_kl", "value_coef",
                           "max_grad_norm", "normalize_advantages"},
                       "ppo");
            take(k, "clip", c.ppo.clip);
            take(k, "gamma", c.ppo.gamma);
            take(k, "lambda", c.ppo.lambda);
            take(k, "epochs", c.ppo.epochs);
            take(k, "batch_size", c.ppo.batch_size);
            take(k, "lr", c.ppo.lr);
            take(k, "entropy_coef", c.ppo.entropy_coef);
            take(k, "max_kl", c.ppo.max_kl);
            take(k, "value_coef", c.ppo.value_coef);
            take(k, "max_grad_norm", c.ppo.max_grad_norm);
            take(k, "normalize_advantages", c.ppo.normalize_advantages);
        }
        if (j.contains("policy")) {
            const auto& k = j["policy"];
            check_keys(k, {"conv1_fields", "conv2_fields", "mlp_width", "init_gain", "head_fields", "value_width", "log_std_init"},
                       "policy");
            take(k, "conv1_fields", c.policy.extractor.conv1_fields);
            take(k, "conv2_fields", c.policy.extractor.conv2_fields);
            take(k, "mlp_width", c.policy.extractor.mlp_width);
            take(k, "init_gain", c.policy.extractor.init_gain);
            take(k, "head_fields", c.policy.head_fields);
            take(k, "value_width", c.policy.value_width);
            take(k, "log_std_init", c.policy.log_std_init);
        }
        if (j.contains("env")) {
            const auto& k = j["env"];
            check_keys(k, {"horizon", "shaping", "success_bonus", "start_jitter"}, "env");
            take(k, "horizon", c.env.horizon);
            take(k, "shaping", c.env.shaping);
            take(k, "success_bonus", c.env.success_bonus);
            take(k, "start_jitter", c.env.start_jitter);
        }
        take(j, "checkpoints", c.checkpoints);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    return parse_run_config(read_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::string run_config_to_json(const RunConfig& c) {
    json j;
    j["method"] = method_name(c.method);
    j["schedule"] = json::parse(schedule_to_json(c.schedule));
    j["seeds"] = c.seeds;
    j["controller"] = {{"d_eps", c.controller.d_eps},
                       {"k_frames", c.controller.k_frames},
                       {"update_interval", c.controller.update_interval},
                       {"rollout_steps", c.controller.rollout_steps},
                       {"buffer_capacity", c.controller.buffer_capacity}};
    j["ppo"] = {{"clip", c.ppo.clip},
                {"gamma", c.ppo.gamma},
                {"lambda", c.ppo.lambda},
                {"epochs", c.ppo.epochs},
                {"batch_size", c.ppo.batch_size},
                {"lr", c.ppo.lr},
                {"entropy_coef", c.ppo.entropy_coef},
                {"max_kl", c.ppo.max_kl},
                {"value_coef", c.ppo.value_coef},
                {"max_grad_norm", c.ppo.max_grad_norm},
                {"normalize_advantages", c.ppo.normalize_advantages}};
    j["policy"] = {{"conv1_fields", c.policy.extractor.conv1_fields},
                   {"conv2_fields", c.policy.extractor.conv2_fields},
                   {"mlp_width", c.policy.extractor.mlp_width},
                   {"init_gain", c.policy.extractor.init_gain},
                   {"head_fields", c.policy.head_fields},
                   {"value_width", c.policy.value_width},
                   {"log_std_init", c.policy.log_std_init}};
    j["env"] = {{"horizon", c.env.horizon}, {"shaping", c.env.shaping}, {"success_bonus", c.env.success_bonus},
                {"start_jitter", c.env.start_jitter}};
    j["checkpoints"] = c.checkpoints;
    return j.dump(2);
}

std::vector<TaskInstance> schedule_tasks(const Schedule& schedule, std::uint64_t seed) {
    std::vector<TaskInstance> out;
    for (const auto& p : schedule)
        for (int i = 0; i < p.episodes; ++i) {
            const auto n = static_cast<std::uint64_t>(out.size());
            const GroupElement g = p.orbit ? *p.orbit : GroupElement{static_cast<int>(derive_seed(seed, 5, n) % 4)};
            out.push_back({p.group, g});
        }
    return out;
}

std::vector<int> schedule_phases(const Schedule& schedule) {
    std::vector<int> out;
    for (std::size_t p = 0; p < schedule.size(); ++p) out.insert(out.end(), schedule[p].episodes, static_cast<int>(p));
    return out;
}

int first_cycle_end(const Schedule& schedule) {
    std::array<bool, kGroupCount> seen{};
    int distinct = 0, total = 0;
    for (const auto& p : schedule)
        if (p.episodes > 0 && !seen[static_cast<std::size_t>(p.group)]) {
            seen[static_cast<std::size_t>(p.group)] = true;
            ++distinct;
        }
    std::array<bool, kGroupCount> now{};
    int have = 0;
    for (const auto& p : schedule) {
        total += p.episodes;
        if (p.episodes > 0 && !now[static_cast<std::size_t>(p.group)]) {
            now[static_cast<std::size_t>(p.group)] = true;
            if (++have == distinct) return total;
        }
    }
    return total;
}

void run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, const ProgressFn& progress) {
    fs::create_directories(dir);
    const auto tasks = schedule_tasks(cfg.schedule, seed);
    const auto phases = schedule_phases(cfg.schedule);
    Controller ctl(cfg.method, cfg.controller, cfg.policy, cfg.ppo, cfg.env, seed);

    std::ofstream metrics(dir / "metrics.csv"), updates(dir / "updates.csv"), decisions(dir / "decisions.jsonl"),
        timing(dir / "timing.csv");
    if (!metrics || !updates || !decisions || !timing) throw std::runtime_error("cannot write into " + dir.string());
    metrics << "episode,phase,group,orbit,policy,reward,success,length,policies\n";
    updates << "episode,policy,samples,epochs,minibatches,early_stopped,policy_loss,value_loss,entropy,approx_kl,"
               "clip_fraction,explained_variance\n";
    timing << "episode,seconds\n";

    const auto t0 = std::chrono::steady_clock::now();
    for (;;) {
        const auto st = ctl.train_interval(tasks);
        if (st.episodes.empty()) break;
        for (const auto& e : st.episodes)
            metrics << e.episode << ',' << phases[static_cast<std::size_t>(e.episode)] << ','
                    << group_name(e.task.group) << ',' << orbit_name(e.task.g) << ',' << e.policy << ',' << num(e.reward)
                    << ',' << (e.success ? 1 : 0) << ',' << e.length << ',' << e.collection_size << '\n';
        if (st.decision) {
            const auto& d = *st.decision;
            json jd;
            jd["trigger"] = d.trigger;
            jd["episode"] = d.episode;
            json dist = json::array();
            for (double x : d.distances) dist.push_back(std::isfinite(x) ? json(x) : json(nullptr));
            jd["distances"] = dist;
            jd["chosen"] = d.chosen;
            jd["previous"] = d.previous;
            jd["spawned"] = d.spawned;
            jd["rollout_episodes"] = d.rollout_episodes;
            jd["rollout_steps"] = d.rollout_steps;
            jd["group"] = group_name(d.majority_group);
            jd["wall_time"] = d.wall_seconds;
            decisions << jd.dump() << std::endl;
        }
        if (st.update) {
            const auto& u = *st.update;
            updates << st.episodes.back().episode << ',' << ctl.current() << ',' << u.samples << ',' << u.epochs << ','
                    << u.minibatches << ',' << (u.early_stopped ? 1 : 0) << ',' << num(u.policy_loss) << ','
                    << num(u.value_loss) << ',' << num(u.entropy) << ',' << num(u.approx_kl) << ','
                    << num(u.clip_fraction) << ',' << num(u.explained_variance) << '\n';
        }
        timing << ctl.episode() << ','
               << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << '\n';
        if (progress)
            progress({seed, ctl.episode(), static_cast<int>(tasks.size()), &st, static_cast<int>(ctl.collection().size())});
    }
    if (cfg.checkpoints) {
        for (std::size_t i = 0; i < ctl.collection().size(); ++i) {
            const auto& e = ctl.collection()[i];
            std::vector<std::pair<std::string, std::string>> extra{
                {"method", method_name(cfg.method)},
                {"created_episode", std::to_string(e.created_episode)},
                {"buffer_frames", std::to_string(e.buffer.size())}};
            if (e.label) extra.emplace_back("label", group_name(*e.label));
            save_checkpoint(e.bundle->params(), dir / "checkpoints" / ("policy_" + std::to_string(i)), extra);
        }
    }
}

void run(const RunConfig& cfg, const fs::path& dir, const ProgressFn& progress) {
    cfg.validate();
    fs::create_directories(dir);
    write_file(dir / "config.json", run_config_to_json(cfg) + "\n");
    for (auto seed : cfg.seeds) run_seed(cfg, seed, dir / ("seed_" + std::to_string(seed)), progress);
}

// ---------------------------------------------------------------------------

std::vector<EpisodeRow> read_metrics(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw std::runtime_error("missing metrics file " + csv.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("episode,", 0) != 0) throw std::runtime_error("bad metrics header in " + csv.string());
    std::vector<EpisodeRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 9) throw std::runtime_error("bad metrics row: " + line);
        EpisodeRow r;
        r.episode = std::stoi(f[0]);
        r.phase = std::stoi(f[1]);
        r.group = parse_group(f[2]);
        static const std::map<std::string, int> orbits{{"e", 0}, {"m_x", 1}, {"m_y", 2}, {"r180", 3}};
        r.orbit = orbits.at(f[3]);
        r.policy = std::stoi(f[4]);
        r.reward = std::stod(f[5]);
        r.success = f[6] == "1";
        r.length = std::stoi(f[7]);
        r.policies = std::stoi(f[8]);
        rows.push_back(r);
    }
    return rows;
}

Stat mean_se(std::span<const double> xs) {
    Stat s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) {
        s.mean = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / s.n;
    if (s.n > 1) {
        double v = 0.0;
        for (double x : xs) v += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(v / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

double assignment_accuracy(std::span<const std::pair<TaskGroup, int>> trace) {
    if (trace.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::map<std::pair<int, int>, int> counts;
    for (const auto& [g, p] : trace) ++counts[{static_cast<int>(g), p}];
    std::vector<bool> used_group(kGroupCount, false);
    std::map<int, bool> used_policy;
    int matched = 0;
    for (;;) {
        int best = 0;
        std::pair<int, int> arg{-1, -1};
        for (const auto& [key, c] : counts)
            if (!used_group[static_cast<std::size_t>(key.first)] && !used_policy[key.second] && c > best) {
                best = c;
                arg = key;
            }
        if (best == 0) break;
        matched += best;
        used_group[static_cast<std::size_t>(arg.first)] = true;
        used_policy[arg.second] = true;
    }
    return static_cast<double>(matched) / static_cast<double>(trace.size());
}

SeedScore score_seed(const fs::path& dir, const Schedule& schedule) {
    const auto rows = read_metrics(dir / "metrics.csv");
    SeedScore s;
    std::array<int, kGroupCount> last_phase;
    last_phase.fill(-1);
    for (std::size_t p = 0; p < schedule.size(); ++p)
        if (schedule[p].episodes > 0) last_phase[static_cast<std::size_t>(schedule[p].group)] = static_cast<int>(p);
    std::vector<int> phase_start(schedule.size() + 1, 0);
    for (std::size_t p = 0; p < schedule.size(); ++p) phase_start[p + 1] = phase_start[p] + schedule[p].episodes;

    int groups = 0;
    for (int g = 0; g < kGroupCount; ++g) {
        const int p = last_phase[static_cast<std::size_t>(g)];
        if (p < 0) continue;
        const int len = schedule[static_cast<std::size_t>(p)].episodes;
        const int window = std::max(1, static_cast<int>(std::ceil(0.2 * len)));
        const int from = phase_start[static_cast<std::size_t>(p) + 1] - window;
        const int to = phase_start[static_cast<std::size_t>(p) + 1];
        double succ = 0.0, rew = 0.0;
        int n = 0;
        for (const auto& r : rows)
            if (r.episode >= from && r.episode < to) {
                succ += r.success ? 1.0 : 0.0;
                rew += r.reward;
                ++n;
            }
        if (n == 0) continue;
        s.present[static_cast<std::size_t>(g)] = true;
        s.success[static_cast<std::size_t>(g)] = succ / n;
        s.reward[static_cast<std::size_t>(g)] = rew / n;
        s.avg_success += succ / n;
        s.avg_reward += rew / n;
        ++groups;
    }
    if (groups > 0) {
        s.avg_success /= groups;
        s.avg_reward /= groups;
    } else {
        s.avg_success = s.avg_reward = std::numeric_limits<double>::quiet_NaN();
    }
    s.policies = rows.empty() ? 1 : rows.back().policies;

    s.accuracy = std::numeric_limits<double>::quiet_NaN();
    std::ifstream dec(dir / "decisions.jsonl");
    if (dec) {
        const int cut = first_cycle_end(schedule);
        std::vector<std::pair<TaskGroup, int>> trace;
        for (std::string line; std::getline(dec, line);) {
            if (line.empty()) continue;
            const auto j = json::parse(line);
            if (j.at("spawned").get<bool>()) ++s.spawns;
            if (j.at("episode").get<int>() >= cut)
                trace.emplace_back(parse_group(j.at("group").get<std::string>()), j.at("chosen").get<int>());
        }
        s.accuracy = assignment_accuracy(trace);
    }
    return s;
}

Summary score(const fs::path& dir) {
    if (!fs::exists(dir / "config.json")) throw std::runtime_error("not a run directory (no config.json): " + dir.string());
    const auto cfg = parse_run_config(read_file(dir / "config.json"), dir);
    Summary sum;
    sum.method = method_name(cfg.method);
    for (auto seed : cfg.seeds) {
        auto s = score_seed(dir / ("seed_" + std::to_string(seed)), cfg.schedule);
        s.seed = seed;
        sum.seeds.push_back(s);
    }
    const bool assigns = uses_assignment(cfg.method);
    std::vector<double> avg_s, avg_r, acc, pol;
    for (const auto& s : sum.seeds) {
        avg_s.push_back(s.avg_success);
        avg_r.push_back(s.avg_reward);
        if (assigns && !std::isnan(s.accuracy)) acc.push_back(s.accuracy);
        pol.push_back(s.policies);
    }
    for (int g = 0; g < kGroupCount; ++g) {
        std::vector<double> xs, rs;
        for (const auto& s : sum.seeds)
            if (s.present[static_cast<std::size_t>(g)]) {
                xs.push_back(s.success[static_cast<std::size_t>(g)]);
                rs.push_back(s.reward[static_cast<std::size_t>(g)]);
            }
        sum.present[static_cast<std::size_t>(g)] = !xs.empty();
        sum.success[static_cast<std::size_t>(g)] = mean_se(xs);
        sum.reward[static_cast<std::size_t>(g)] = mean_se(rs);
    }
    sum.avg_success = mean_se(avg_s);
    sum.avg_reward = mean_se(avg_r);
    sum.accuracy = mean_se(acc);
    sum.policies = mean_se(pol);
    return sum;
}

std::string format_summary(const Summary& s) {
    std::ostringstream o;
    char buf[160];
    o << "method: " << s.method << "  seeds: " << s.seeds.size() << "\n";
    o << "group     success          reward\n";
    for (int g = 0; g < kGroupCount; ++g) {
        if (!s.present[static_cast<std::size_t>(g)]) continue;
        const auto& a = s.success[static_cast<std::size_t>(g)];
        const auto& r = s.reward[static_cast<std::size_t>(g)];
        std::snprintf(buf, sizeof buf, "%-8s  %.3f +- %.3f    %8.2f +- %.2f\n", group_name(static_cast<TaskGroup>(g)),
                      a.mean, a.se, r.mean, r.se);
        o << buf;
    }
    std::snprintf(buf, sizeof buf, "average   %.3f +- %.3f    %8.2f +- %.2f\n", s.avg_success.mean, s.avg_success.se,
                  s.avg_reward.mean, s.avg_reward.se);
    o << buf;
    if (s.accuracy.n > 0) {
        std::snprintf(buf, sizeof buf, "assignment accuracy %.3f +- %.3f\n", s.accuracy.mean, s.accuracy.se);
        o << buf;
    }
    std::snprintf(buf, sizeof buf, "policies  %.2f +- %.2f\n", s.policies.mean, s.policies.se);
    o << buf;
    return o.str();
}

std::string summary_to_json(const Summary& s) {
    auto stat = [](const Stat& x) {
        return json{{"mean", std::isnan(x.mean) ? json(nullptr) : json(x.mean)}, {"se", x.se}, {"n", x.n}};
    };
    json j;
    j["method"] = s.method;
    json groups = json::object();
    for (int g = 0; g < kGroupCount; ++g)
        if (s.present[static_cast<std::size_t>(g)])
            groups[group_name(static_cast<TaskGroup>(g))] = {{"success", stat(s.success[static_cast<std::size_t>(g)])},
                                                             {"reward", stat(s.reward[static_cast<std::size_t>(g)])}};
    j["groups"] = groups;
    j["avg_success"] = stat(s.avg_success);
    j["avg_reward"] = stat(s.avg_reward);
    j["accuracy"] = stat(s.accuracy);
    j["policies"] = stat(s.policies);
    json seeds = json::array();
    for (const auto& x : s.seeds)
        seeds.push_back({{"seed", x.seed},
                         {"avg_success", x.avg_success},
                         {"avg_reward", x.avg_reward},
                         {"accuracy", std::isnan(x.accuracy) ? json(nullptr) : json(x.accuracy)},
                         {"spawns", x.spawns},
                         {"policies", x.policies}});
    j["seeds"] = seeds;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

struct Frame {
    double x0 = 60, y0 = 20, w = 720, h = 300;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    double px(double x) const { return x0 + (xmax > xmin ? (x - xmin) / (xmax - xmin) : 0.0) * w; }
    double py(double y) const { return y0 + h - (ymax > ymin ? (y - ymin) / (ymax - ymin) : 0.0) * h; }
};

const char* kBand[kGroupCount] = {"#e8f0fe", "#fde8e8", "#e8f8ec", "#fdf5e0"};
const char* kLine[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void svg_axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' fill='none' stroke='black'/>\n", f.x0, f.y0, f.w,
                  f.h);
    o << buf;
    for (int i = 0; i <= 4; ++i) {
        const double yv = f.ymin + (f.ymax - f.ymin) * i / 4.0;
        std::snprintf(buf, sizeof buf, "<text x='%.1f' y='%.1f' font-size='10' text-anchor='end'>%.3g</text>\n",
                      f.x0 - 4, f.py(yv) + 3, yv);
        o << buf;
        const double xv = f.xmin + (f.xmax - f.xmin) * i / 4.0;
        std::snprintf(buf, sizeof buf, "<text x='%.1f' y='%.1f' font-size='10' text-anchor='middle'>%.0f</text>\n",
                      f.px(xv), f.y0 + f.h + 14, xv);
        o << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x='%.1f' y='%.1f' font-size='12' text-anchor='middle'>%s</text>\n",
                  f.x0 + f.w / 2, f.y0 + f.h + 32, xlabel.c_str());
    o << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x='14' y='%.1f' font-size='12' text-anchor='middle' transform='rotate(-90 14 %.1f)'>%s</text>\n",
                  f.y0 + f.h / 2, f.y0 + f.h / 2, ylabel.c_str());
    o << buf;
}

void svg_bands(std::ostringstream& o, const Frame& f, const Schedule& s) {
    int start = 0;
    char buf[256];
    for (const auto& p : s) {
        if (p.episodes > 0) {
            std::snprintf(buf, sizeof buf,
                          "<rect class='band' x='%.2f' y='%.1f' width='%.2f' height='%.1f' fill='%s'><title>%s</title></rect>\n",
                          f.px(start), f.y0, f.px(start + p.episodes) - f.px(start), f.h,
                          kBand[static_cast<int>(p.group)], group_name(p.group));
            o << buf;
        }
        start += p.episodes;
    }
}

std::string svg_open(double w, double h) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "<svg xmlns='http://www.w3.org/2000/svg' width='%.0f' height='%.0f'>\n", w, h);
    return buf;
}

}  // namespace

void plot(std::span<const fs::path> dirs, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    struct Curve {
        std::string method;
        std::vector<double> mean;
    };
    std::vector<Curve> curves;
    Schedule schedule;
    struct Trace {
        std::string label;
        std::vector<EpisodeRow> rows;
    };
    std::vector<Trace> traces;
    for (const auto& dir : dirs) {
        const auto cfg = parse_run_config(read_file(dir / "config.json"), dir);
        if (schedule.empty()) schedule = cfg.schedule;
        Curve c{method_name(cfg.method), {}};
        std::vector<int> counts;
        for (auto seed : cfg.seeds) {
            const auto rows = read_metrics(dir / ("seed_" + std::to_string(seed)) / "metrics.csv");
            for (const auto& r : rows) {
                const auto i = static_cast<std::size_t>(r.episode);
                if (c.mean.size() <= i) {
                    c.mean.resize(i + 1, 0.0);
                    counts.resize(i + 1, 0);
                }
                c.mean[i] += r.reward;
                ++counts[i];
            }
            traces.push_back({c.method + " seed " + std::to_string(seed), rows});
        }
        for (std::size_t i = 0; i < c.mean.size(); ++i)
            if (counts[i] > 0) c.mean[i] /= counts[i];
        curves.push_back(std::move(c));
    }

    const double total = std::max(1, schedule_episodes(schedule));
    {
        Frame f;
        f.xmax = total;
        f.ymin = std::numeric_limits<double>::infinity();
        f.ymax = -f.ymin;
        for (const auto& c : curves)
            for (double v : c.mean) {
                f.ymin = std::min(f.ymin, v);
                f.ymax = std::max(f.ymax, v);
            }
        if (!std::isfinite(f.ymin)) {
            f.ymin = 0;
            f.ymax = 1;
        }
        std::ostringstream o;
        o << svg_open(f.x0 + f.w + 140, f.y0 + f.h + 50);
        svg_bands(o, f, schedule);
        svg_axes(o, f, "episode", "episode reward (mean over seeds)");
        char buf[160];
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const auto& c = curves[k];
            o << "<polyline class='curve' fill='none' stroke-width='1' stroke='" << kLine[k % 6] << "' points='";
            for (std::size_t i = 0; i < c.mean.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.px(static_cast<double>(i)), f.py(c.mean[i]));
                o << buf;
            }
            o << "'/>\n";
            std::snprintf(buf, sizeof buf, "<text x='%.1f' y='%.1f' font-size='12' fill='%s'>%s</text>\n",
                          f.x0 + f.w + 10, f.y0 + 14 + 16.0 * k, kLine[k % 6], c.method.c_str());
            o << buf;
        }
        o << "</svg>\n";
        write_file(out_dir / "rewards.svg", o.str());
    }

    for (const auto& t : traces) {
        Frame f;
        f.xmax = total;
        int maxp = 0;
        for (const auto& r : t.rows) maxp = std::max(maxp, r.policy);
        f.ymin = -0.5;
        f.ymax = std::max(maxp, kGroupCount - 1) + 0.5;
        std::ostringstream o;
        o << svg_open(f.x0 + f.w + 140, f.y0 + f.h + 50);
        svg_bands(o, f, schedule);
        svg_axes(o, f, "episode", "policy index");
        char buf[160];
        o << "<polyline class='trace' fill='none' stroke='black' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& r = t.rows[i];
            if (i > 0) {
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.px(r.episode), f.py(t.rows[i - 1].policy));
                o << buf;
            }
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.px(r.episode), f.py(r.policy));
            o << buf;
        }
        o << "'/>\n";
        std::snprintf(buf, sizeof buf, "<text x='%.1f' y='%.1f' font-size='12'>%s</text>\n", f.x0 + f.w + 10, f.y0 + 14,
                      t.label.c_str());
        o << buf;
        o << "</svg>\n";
        std::string name = t.label;
        std::replace(name.begin(), name.end(), ' ', '_');
        write_file(out_dir / ("assignment_" + name + ".svg"), o.str());
    }
}

}  // namespace covers
