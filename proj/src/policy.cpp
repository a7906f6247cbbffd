#include "covers/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covers {

PolicyBundle::PolicyBundle(const PolicyConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), group_(GroupSpec::d2()), store_(seed) {
    const auto reg = Representation::regular(group_);
    int inv_dim = 0;
    if (cfg.kind == ExtractorKind::equivariant) {
        auto ex = std::make_unique<EquivariantExtractor>(store_, group_, cfg.extractor);
        const auto feat = ex->feature_rep();
        inv_dim = ex->invariant_dim();
        extractor_ = std::move(ex);
        head1_ = std::make_unique<EquivariantLinear>(store_, "policy.l1", feat,
                                                     Representation::copies(reg, cfg.head_fields));
        head2_ = std::make_unique<EquivariantLinear>(store_, "policy.l2", Representation::copies(reg, cfg.head_fields),
                                                     action_rep(group_), true, 0.01);
    } else {
        const auto w = matched_cnn_widths(cfg.extractor);
        auto ex = std::make_unique<CnnExtractor>(store_, w.conv1, w.conv2, w.mlp, cfg.extractor);
        inv_dim = ex->invariant_dim();
        const int fd = ex->feature_dim();
        extractor_ = std::move(ex);
        const int width = cfg.head_fields * group_.size();
        dense_w1_ = store_.add_uniform("policy.l1.w", {width, fd}, fd);
        dense_b1_ = store_.add_constant("policy.l1.b", {width}, 0.0);
        dense_w2_ = store_.add_uniform("policy.l2.w", {kActionDim, width}, width, 0.01);
        dense_b2_ = store_.add_constant("policy.l2.b", {kActionDim}, 0.0);
    }
    value_w1_ = store_.add_uniform("value.l1.w", {cfg.value_width, inv_dim}, inv_dim);
    value_b1_ = store_.add_constant("value.l1.b", {cfg.value_width}, 0.0);
    value_w2_ = store_.add_uniform("value.l2.w", {1, cfg.value_width}, cfg.value_width);
    value_b2_ = store_.add_constant("value.l2.b", {1}, 0.0);
    log_std_ = store_.add_constant("log_std", {kActionDim}, cfg.log_std_init);
}

BundleOutput PolicyBundle::forward(const ObsBatch& batch) const {
    const int n = batch.size();
    Features f = extractor_->extract(batch);
    Var loc;
    if (head1_) {
        loc = head2_->forward(ops::relu(head1_->forward(f.equi)));
    } else {
        loc = ops::affine(ops::relu(ops::affine(f.equi, dense_w1_, dense_b1_)), dense_w2_, dense_b2_);
    }
    Var v = ops::affine(ops::relu(ops::affine(f.inv, value_w1_, value_b1_)), value_w2_, value_b2_);
    v = ops::reshape(v, {n});
    for (double x : loc.value())
        if (!std::isfinite(x)) throw std::domain_error("policy: non-finite action mean");
    return {loc, log_std_, v, f};
}

Array PolicyBundle::invariant_features(const ObsBatch& batch) const { return extractor_->extract(batch).inv.array(); }

std::vector<ActionDist> action_dist(const PolicyBundle& bundle, std::span<const Observation* const> obs) {
    const auto out = bundle.forward(make_batch(obs));
    std::vector<ActionDist> d(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i)
        for (int c = 0; c < kActionDim; ++c) {
            const double l = out.loc.value()[i * kActionDim + static_cast<std::size_t>(c)];
            d[i].loc[static_cast<std::size_t>(c)] = l;
            d[i].mean[static_cast<std::size_t>(c)] = std::tanh(l);
            d[i].std[static_cast<std::size_t>(c)] = std::exp(out.log_std.value()[static_cast<std::size_t>(c)]);
        }
    return d;
}

ActionDist action_dist(const PolicyBundle& bundle, const Observation& obs) {
    const Observation* p = &obs;
    return action_dist(bundle, std::span<const Observation* const>(&p, 1))[0];
}

double value(const PolicyBundle& bundle, const Observation& obs) {
    return bundle.forward(make_batch(std::span<const Observation>(&obs, 1))).value.item();
}

double tanh_log_jacobian(std::span<const double> u) {
    double s = 0.0;
    for (double x : u) {
        const double t = -2.0 * x;
        const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
        s += 2.0 * (std::numbers::ln2 - x - softplus);
    }
    return s;
}

Sample sample_with_noise(const ActionDist& dist, const ActionVec& xi) {
    Sample s;
    double lp = 0.0;
    for (std::size_t c = 0; c < kActionDim; ++c) {
        s.raw[c] = dist.loc[c] + dist.std[c] * xi[c];
        s.action[c] = std::tanh(s.raw[c]);
        lp += -0.5 * xi[c] * xi[c] - std::log(dist.std[c]) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    s.log_prob = lp - tanh_log_jacobian(s.raw);
    return s;
}

ActionVec draw_noise(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    ActionVec xi{};
    for (double& x : xi) x = n(rng);
    return xi;
}

Sample sample_action(const PolicyBundle& bundle, const Observation& obs, std::mt19937_64& rng) {
    return sample_with_noise(action_dist(bundle, obs), draw_noise(rng));
}

}  // namespace covers
