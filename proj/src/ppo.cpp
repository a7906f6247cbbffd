#include "covers/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace covers {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const double> next_values, std::span<const bool> terminals,
                      std::span<const bool> episode_ends, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || next_values.size() != n || terminals.size() != n || episode_ends.size() != n)
        throw std::invalid_argument("compute_gae: length mismatch");
    GaeResult r{std::vector<double>(n), std::vector<double>(n)};
    double running = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const double next = terminals[i] ? 0.0 : next_values[i];
        const double delta = rewards[i] + gamma * next - values[i];
        running = delta + (episode_ends[i] ? 0.0 : gamma * lambda * running);
        r.advantages[i] = running;
        r.returns[i] = running + values[i];
    }
    return r;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                      double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n + 1 || dones.size() != n)
        throw std::invalid_argument("compute_gae: need len(values) = len(rewards) + 1 = len(dones) + 1");
    return compute_gae(rewards, values.first(n), values.subspan(1), dones, dones, gamma, lambda);
}

void RolloutBuffer::add(Transition t) {
    if (!std::isfinite(t.reward) || !std::isfinite(t.log_prob_old))
        throw std::invalid_argument("RolloutBuffer: non-finite reward or log-prob");
    data_.push_back(std::move(t));
    finalized_ = false;
}

void RolloutBuffer::append(std::vector<Transition> episode) {
    for (auto& t : episode) add(std::move(t));
}

void RolloutBuffer::clear() {
    data_.clear();
    adv_.clear();
    ret_.clear();
    finalized_ = false;
}

namespace {

double gaussian_density(const ActionVec& raw, const ActionVec& loc, std::span<const double> log_std) {
    double lp = 0.0;
    for (std::size_t c = 0; c < kActionDim; ++c) {
        const double z = (raw[c] - loc[c]) / std::exp(log_std[c]);
        lp += -0.5 * z * z - log_std[c] - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return lp;
}

}  // namespace

void RolloutBuffer::refresh(const PolicyBundle& bundle) {
    constexpr std::size_t chunk = 256;
    for (std::size_t s = 0; s < data_.size(); s += chunk) {
        const std::size_t e = std::min(data_.size(), s + chunk);
        std::vector<const Observation*> obs;
        for (std::size_t i = s; i < e; ++i) obs.push_back(&data_[i].obs);
        const auto out = bundle.forward(make_batch(std::span<const Observation* const>(obs)));
        for (std::size_t i = s; i < e; ++i) {
            ActionVec loc{};
            for (std::size_t c = 0; c < kActionDim; ++c) loc[c] = out.loc.value()[(i - s) * kActionDim + c];
            auto& t = data_[i];
            t.log_prob_old = gaussian_density(t.raw, loc, out.log_std.value()) - tanh_log_jacobian(t.raw);
            t.value_old = out.value.value()[i - s];
        }
    }
    std::vector<std::size_t> trunc;
    std::vector<const Observation*> finals;
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (data_[i].final_obs) {
            trunc.push_back(i);
            finals.push_back(&*data_[i].final_obs);
        }
    if (!finals.empty()) {
        const auto out = bundle.forward(make_batch(std::span<const Observation* const>(finals)));
        for (std::size_t k = 0; k < trunc.size(); ++k) data_[trunc[k]].bootstrap_value = out.value.value()[k];
    }
    finalized_ = false;
}

void RolloutBuffer::finalize(const PpoConfig& cfg) {
    const std::size_t n = data_.size();
    if (n == 0) throw std::invalid_argument("RolloutBuffer::finalize: empty buffer");
    std::vector<double> rewards(n), values(n), next(n);
    std::unique_ptr<bool[]> term(new bool[n]), end(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = data_[i];
        rewards[i] = t.reward;
        values[i] = t.value_old;
        term[i] = t.terminal;
        // the stored sequence is a concatenation of whole episodes; a missing end flag on the
        // last entry still has to stop the recursion
        end[i] = t.episode_end || i + 1 == n;
        if (t.episode_end || i + 1 == n)
            next[i] = t.bootstrap_value;
        else
            next[i] = data_[i + 1].value_old;
    }
    auto g = compute_gae(rewards, values, next, std::span<const bool>(term.get(), n), std::span<const bool>(end.get(), n),
                         cfg.gamma, cfg.lambda);
    ret_ = std::move(g.returns);
    adv_ = std::move(g.advantages);
    if (cfg.normalize_advantages) {
        const double mean = std::accumulate(adv_.begin(), adv_.end(), 0.0) / static_cast<double>(n);
        double var = 0.0;
        for (double a : adv_) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (double& a : adv_) a = (a - mean) / (sd + 1e-8);
    }
    finalized_ = true;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
    return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

LossTerms clip_loss(const PolicyBundle& bundle, const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                    const PpoConfig& cfg) {
    if (!buffer.finalized()) throw std::logic_error("clip_loss: buffer not finalized");
    const int n = static_cast<int>(indices.size());
    if (n == 0) throw std::invalid_argument("clip_loss: empty minibatch");
    std::vector<const Observation*> obs;
    Array raw({n, kActionDim});
    Array offset({n});
    Array adv({n});
    Array ret({n});
    for (int i = 0; i < n; ++i) {
        const std::size_t k = indices[static_cast<std::size_t>(i)];
        const auto& t = buffer.transitions().at(k);
        obs.push_back(&t.obs);
        for (std::size_t c = 0; c < kActionDim; ++c) raw.data[static_cast<std::size_t>(i) * kActionDim + c] = t.raw[c];
        offset.data[static_cast<std::size_t>(i)] = -tanh_log_jacobian(t.raw) - t.log_prob_old;
        adv.data[static_cast<std::size_t>(i)] = buffer.advantages()[k];
        ret.data[static_cast<std::size_t>(i)] = buffer.returns()[k];
    }
    const auto out = bundle.forward(make_batch(std::span<const Observation* const>(obs)));
    const Var log_ratio = ops::add(ops::gaussian_logprob(out.loc, out.log_std, raw), constant(offset));
    const Var ratio = ops::exp(log_ratio);
    LossTerms lt;
    for (int i = 0; i < n; ++i) {
        const double r = ratio.value()[static_cast<std::size_t>(i)];
        if (!std::isfinite(r)) throw std::domain_error("clip_loss: non-finite importance ratio");
        lt.approx_kl += (r - 1.0) - log_ratio.value()[static_cast<std::size_t>(i)];
        if (std::abs(r - 1.0) > cfg.clip) lt.clip_fraction += 1.0;
    }
    lt.approx_kl /= n;
    lt.clip_fraction /= n;
    const Var a = constant(adv);
    const Var surr = ops::minimum(ops::mul(ratio, a), ops::mul(ops::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a));
    const Var policy_obj = ops::mean(surr);
    const Var vloss = ops::mean(ops::square(ops::sub(out.value, constant(ret))));
    const Var entropy = ops::add_scalar(ops::sum(out.log_std), 0.5 * kActionDim * std::log(2.0 * std::numbers::pi * std::numbers::e));
    lt.loss = ops::add(ops::sub(ops::scale(vloss, cfg.value_coef), policy_obj), ops::scale(entropy, -cfg.entropy_coef));
    lt.surrogate = policy_obj.item();
    lt.value_loss = vloss.item();
    lt.entropy = entropy.item();
    return lt;
}

UpdateStats ppo_update(PolicyBundle& bundle, RolloutBuffer& buffer, const PpoConfig& cfg, std::mt19937_64& rng) {
    if (buffer.empty()) throw std::invalid_argument("ppo_update: empty rollout buffer");
    if (!buffer.finalized()) buffer.finalize(cfg);
    const std::size_t n = buffer.size();
    UpdateStats st;
    st.samples = n;
    {
        double mean = 0.0;
        for (double r : buffer.returns()) mean += r;
        mean /= static_cast<double>(n);
        double var_r = 0.0, var_e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            var_r += (buffer.returns()[i] - mean) * (buffer.returns()[i] - mean);
            const double e = buffer.returns()[i] - buffer.transitions()[i].value_old;
            var_e += e * e;
        }
        st.explained_variance = var_r > 0 ? 1.0 - var_e / var_r : 0.0;
    }
    bundle.optimizer().set_lr(cfg.lr);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    double sum_pl = 0.0, sum_vl = 0.0, sum_ent = 0.0, sum_cf = 0.0;
    for (int epoch = 0; epoch < cfg.epochs && !st.early_stopped; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < n; s += bs) {
            const std::size_t e = std::min(n, s + bs);
            auto terms = clip_loss(bundle, buffer, std::span<const std::size_t>(order.data() + s, e - s), cfg);
            st.approx_kl = terms.approx_kl;
            if (terms.approx_kl > cfg.max_kl) {
                st.early_stopped = true;
                break;
            }
            bundle.params().zero_grad();
            backward(terms.loss);
            clip_grad_norm(bundle.params(), cfg.max_grad_norm);
            bundle.optimizer().step(bundle.params());
            ++st.minibatches;
            sum_pl += -terms.surrogate;
            sum_vl += terms.value_loss;
            sum_ent += terms.entropy;
            sum_cf += terms.clip_fraction;
        }
        if (!st.early_stopped) ++st.epochs;
    }
    if (st.minibatches > 0) {
        st.policy_loss = sum_pl / st.minibatches;
        st.value_loss = sum_vl / st.minibatches;
        st.entropy = sum_ent / st.minibatches;
        st.clip_fraction = sum_cf / st.minibatches;
        bundle.mark_updated();
    }
    return st;
}

}  // namespace covers
