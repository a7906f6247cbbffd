#include "covers/rollout.hpp"

namespace covers {

std::vector<EpisodeResult> run_episodes(const PolicyBundle& bundle, std::span<const EpisodeSpec> specs,
                                        const EnvConfig& env_cfg, int k_frames, bool keep_transitions) {
    const std::size_t n = specs.size();
    std::vector<EpisodeResult> results(n);
    std::vector<Env> envs;
    std::vector<std::mt19937_64> rngs;
    std::vector<Observation> obs(n);
    envs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        envs.emplace_back(specs[i].task, env_cfg);
        rngs.emplace_back(specs[i].noise_seed);
        obs[i] = envs[i].reset(specs[i].reset_seed);
        results[i].task = specs[i].task;
    }
    const GroupSpec d2 = GroupSpec::d2();
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;
    std::vector<std::size_t> truncated;

    while (!active.empty()) {
        std::vector<const Observation*> ptrs;
        for (std::size_t i : active) ptrs.push_back(&obs[i]);
        const auto out = bundle.forward(make_batch(std::span<const Observation* const>(ptrs)));
        std::vector<std::size_t> still;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const std::size_t i = active[a];
            ActionDist dist;
            for (std::size_t c = 0; c < kActionDim; ++c) {
                dist.loc[c] = out.loc.value()[a * kActionDim + c];
                dist.mean[c] = std::tanh(dist.loc[c]);
                dist.std[c] = std::exp(out.log_std.value()[c]);
            }
            ActionVec xi{};
            if (!specs[i].deterministic) xi = transform_action(d2, specs[i].noise_transform, draw_noise(rngs[i]));
            const Sample s = sample_with_noise(dist, xi);
            auto& res = results[i];
            if (static_cast<int>(res.first_frames.size()) < k_frames) res.first_frames.push_back(obs[i]);
            const StepResult r = envs[i].step(s.action);
            res.total_reward += r.reward;
            ++res.length;
            if (keep_transitions) {
                Transition t;
                t.obs = std::move(obs[i]);
                t.raw = s.raw;
                t.reward = r.reward;
                t.log_prob_old = s.log_prob;
                t.value_old = out.value.value()[a];
                t.terminal = r.success;
                t.episode_end = r.done;
                t.t = res.length - 1;
                if (r.truncated) t.final_obs = r.obs;
                res.transitions.push_back(std::move(t));
            }
            obs[i] = r.obs;
            if (r.done) {
                res.success = r.success;
                if (r.truncated && keep_transitions) truncated.push_back(i);
            } else {
                still.push_back(i);
            }
        }
        active = std::move(still);
    }

    if (!truncated.empty()) {
        std::vector<const Observation*> finals;
        for (std::size_t i : truncated) finals.push_back(&*results[i].transitions.back().final_obs);
        const auto out = bundle.forward(make_batch(std::span<const Observation* const>(finals)));
        for (std::size_t k = 0; k < truncated.size(); ++k)
            results[truncated[k]].transitions.back().bootstrap_value = out.value.value()[k];
    }
    return results;
}

}  // namespace covers
