#include "covers/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace covers {

const char* method_name(Method m) {
    switch (m) {
        case Method::covers: return "covers";
        case Method::covers_gt: return "covers_gt";
        case Method::covers_cnn: return "covers_cnn";
        case Method::equi: return "equi";
        case Method::cnn: return "cnn";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::covers, Method::covers_gt, Method::covers_cnn, Method::equi, Method::cnn})
        if (name == method_name(m)) return m;
    if (name == "3rl" || name == "clear") throw std::runtime_error("method '" + name + "' is not implemented");
    throw std::invalid_argument("unknown method '" + name + "' (expected covers, covers_gt, covers_cnn, equi or cnn)");
}

bool uses_assignment(Method m) { return m == Method::covers || m == Method::covers_gt || m == Method::covers_cnn; }

void ControllerConfig::validate() const {
    if (!(d_eps > 0.0)) throw std::invalid_argument("ControllerConfig: d_eps must be positive");
    if (k_frames < 1) throw std::invalid_argument("ControllerConfig: k_frames must be >= 1");
    if (update_interval < 1) throw std::invalid_argument("ControllerConfig: update_interval must be >= 1");
    if (rollout_steps < 1) throw std::invalid_argument("ControllerConfig: rollout_steps must be >= 1");
    if (buffer_capacity < 1) throw std::invalid_argument("ControllerConfig: buffer_capacity must be >= 1");
}

std::size_t PolicyCollection::add(std::unique_ptr<PolicyBundle> bundle, FrameBuffer buffer, int episode) {
    PolicyEntry e;
    e.bundle = std::move(bundle);
    e.buffer = std::move(buffer);
    e.created_episode = episode;
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ stream) ^ index);
}

Controller::Controller(Method method, ControllerConfig cfg, PolicyConfig policy, PpoConfig ppo, EnvConfig env,
                       std::uint64_t seed)
    : method_(method),
      cfg_(cfg),
      policy_cfg_(policy),
      ppo_cfg_(ppo),
      env_cfg_(env),
      seed_(seed),
      rng_(derive_seed(seed, 4, 0)) {
    cfg_.validate();
    policy_cfg_.kind = (method == Method::covers_cnn || method == Method::cnn) ? ExtractorKind::cnn
                                                                             : ExtractorKind::equivariant;
    pi_.add(make_bundle(0), FrameBuffer(cfg_.buffer_capacity), 0);
}

std::unique_ptr<PolicyBundle> Controller::make_bundle(std::size_t index) const {
    return std::make_unique<PolicyBundle>(policy_cfg_, derive_seed(seed_, 3, index));
}

EpisodeSpec Controller::spec_for(const TaskInstance& task, int episode) const {
    EpisodeSpec s;
    s.task = task;
    s.reset_seed = derive_seed(seed_, 1, static_cast<std::uint64_t>(episode));
    s.noise_seed = derive_seed(seed_, 2, static_cast<std::uint64_t>(episode));
    return s;
}

const Eigen::MatrixXd& Controller::buffer_features(std::size_t i) {
    auto& c = cache_[i];
    const auto& e = pi_[i];
    if (c.version != e.bundle->version() || c.revision != e.buffer_revision) {
        c.features = feature_cloud(e.buffer, *e.bundle);
        c.version = e.bundle->version();
        c.revision = e.buffer_revision;
    }
    return c.features;
}

AssignmentDecision Controller::maybe_reassign(std::span<const EpisodeResult> rollout, int episode) {
    if (rollout.empty()) throw std::invalid_argument("maybe_reassign: empty rollout");
    const auto t0 = std::chrono::steady_clock::now();
    AssignmentDecision d;
    d.trigger = static_cast<int>(decisions_.size());
    d.episode = episode;
    d.previous = current_;
    d.rollout_episodes = static_cast<int>(rollout.size());
    std::array<int, kGroupCount> votes{};
    for (const auto& r : rollout) {
        d.rollout_steps += r.length;
        ++votes[static_cast<std::size_t>(r.task.group)];
    }
    d.majority_group = static_cast<TaskGroup>(std::max_element(votes.begin(), votes.end()) - votes.begin());

    std::size_t frames = 0;
    for (const auto& r : rollout) frames += r.first_frames.size();
    FrameBuffer o(std::max<std::size_t>(frames, 1));
    for (const auto& r : rollout)
        for (const auto& f : r.first_frames) o.add(f);

    auto store = [&](std::size_t j) {
        pi_[j].buffer.add_all(o);
        ++pi_[j].buffer_revision;
    };
    // the initial policy starts with an empty buffer and is taken over by the first spawn
    auto spawn = [&]() -> std::size_t {
        for (std::size_t i = 0; i < pi_.size(); ++i)
            if (pi_[i].buffer.empty() && !pi_[i].label) {
                pi_[i].created_episode = episode;
                return i;
            }
        return pi_.add(make_bundle(pi_.size()), FrameBuffer(cfg_.buffer_capacity), episode);
    };

    if (method_ == Method::covers_gt) {
        std::optional<std::size_t> hit;
        for (std::size_t i = 0; i < pi_.size(); ++i) {
            const bool match = pi_[i].label == d.majority_group;
            d.distances.push_back(match ? 0.0 : std::numeric_limits<double>::infinity());
            if (match && !hit) hit = i;
        }
        if (hit) {
            d.chosen = static_cast<int>(*hit);
        } else {
            const std::size_t j = spawn();
            pi_[j].label = d.majority_group;
            d.chosen = static_cast<int>(j);
            d.spawned = true;
        }
        store(static_cast<std::size_t>(d.chosen));
    } else if (uses_assignment(method_)) {
        for (std::size_t i = 0; i < pi_.size(); ++i) {
            if (pi_[i].buffer.empty()) {
                d.distances.push_back(std::numeric_limits<double>::infinity());
                continue;
            }
            const Eigen::MatrixXd x = feature_cloud(o, *pi_[i].bundle);
            d.distances.push_back(w1_distance(x, buffer_features(i)).cost);
        }
        const auto best = std::min_element(d.distances.begin(), d.distances.end()) - d.distances.begin();
        if (d.distances[static_cast<std::size_t>(best)] > cfg_.d_eps) {
            d.chosen = static_cast<int>(spawn());
            d.spawned = true;
        } else {
            d.chosen = static_cast<int>(best);
        }
        store(static_cast<std::size_t>(d.chosen));
    } else {
        d.chosen = 0;
        d.distances.push_back(0.0);
    }

    current_ = d.chosen;
    d.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace_.emplace_back(episode, d.chosen);
    decisions_.push_back(d);
    return d;
}

IntervalStats Controller::train_interval(std::span<const TaskInstance> tasks) {
    IntervalStats st;
    const int total = static_cast<int>(tasks.size());
    if (n_ >= total) return st;
    const int nu = cfg_.update_interval;
    const bool trigger = n_ % nu == 0;
    const int end = trigger ? std::min(total, n_ + nu) : std::min(total, (n_ / nu + 1) * nu);

    std::vector<EpisodeSpec> specs;
    for (int i = n_; i < end; ++i) specs.push_back(spec_for(tasks[static_cast<std::size_t>(i)], i));
    auto results = run_episodes(*pi_[static_cast<std::size_t>(current_)].bundle, specs, env_cfg_, cfg_.k_frames);
    if (trigger) {
        // whole episodes until N_s steps are gathered
        std::size_t used = 0;
        int steps = 0;
        while (used < results.size() && steps < cfg_.rollout_steps) steps += results[used++].length;
        results.resize(used);
    }
    const int collector = current_;
    for (std::size_t i = 0; i < results.size(); ++i) {
        auto& r = results[i];
        st.episodes.push_back({n_ + static_cast<int>(i), r.task, collector, r.total_reward, r.success, r.length,
                               static_cast<int>(pi_.size())});
        d_.append(std::move(r.transitions));
    }
    const int first = n_;
    n_ += static_cast<int>(results.size());
    if (!trigger) return st;

    st.decision = maybe_reassign(results, first);
    for (auto& rec : st.episodes) rec.collection_size = static_cast<int>(pi_.size());
    auto& bundle = *pi_[static_cast<std::size_t>(current_)].bundle;
    if (current_ != collector) d_.refresh(bundle);
    st.update = ppo_update(bundle, d_, ppo_cfg_, rng_);
    d_.clear();
    return st;
}

}  // namespace covers
