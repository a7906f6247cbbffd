#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/policy.hpp"

#include <cmath>
#include <numbers>

using namespace covers;

namespace {

const GroupSpec G = GroupSpec::d2();

Observation random_obs(std::mt19937_64& r) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Observation o;
    for (double& v : o.image.data) v = u(r) > 0.8 ? 1.0 : 0.0;
    for (double& v : o.initial.data) v = u(r) > 0.8 ? 1.0 : 0.0;
    for (double& v : o.state) v = u(r);
    for (double& v : o.aux) v = u(r);
    return o;
}

}  // namespace

TEST_CASE("action mean is equivariant and value invariant") {
    PolicyBundle bundle(PolicyConfig{}, 1);
    // push the final layer away from its small init so the check is not vacuous
    for (auto& [name, v] : bundle.params().entries())
        if (name.rfind("policy.l2", 0) == 0) {
            Var h = v;
            for (double& x : h.mutable_value()) x *= 50.0;
        }
    const SpatialAction act(G, kArenaSize, kArenaSize);
    std::mt19937_64 r(2);
    for (int t = 0; t < 5; ++t) {
        const Observation o = random_obs(r);
        const ActionDist d = action_dist(bundle, o);
        const double v = value(bundle, o);
        CHECK(std::isfinite(v));
        double spread = 0.0;
        for (double x : d.loc) spread = std::max(spread, std::abs(x));
        CHECK(spread > 1e-3);
        for (auto g : G.elements()) {
            const Observation go = transform_observation(act, g, o);
            const ActionDist dg = action_dist(bundle, go);
            const auto expect = transform_action(G, g, d.loc);
            for (std::size_t c = 0; c < kActionDim; ++c) {
                CHECK(std::abs(dg.loc[c] - expect[c]) < 1e-9);
                CHECK(dg.std[c] == d.std[c]);
            }
            CHECK(std::abs(value(bundle, go) - v) < 1e-9);
        }
    }
    // m_y negates dx only
    const Observation o = random_obs(r);
    const auto d = action_dist(bundle, o);
    const auto dm = action_dist(bundle, transform_observation(act, d2::m_y, o));
    CHECK(dm.loc[0] == doctest::Approx(-d.loc[0]).epsilon(1e-9));
    CHECK(dm.loc[1] == doctest::Approx(d.loc[1]).epsilon(1e-9));
    CHECK(dm.mean[0] == doctest::Approx(-d.mean[0]).epsilon(1e-9));
}

TEST_CASE("zero observation gives finite outputs") {
    PolicyBundle bundle(PolicyConfig{}, 0);
    const Observation o;
    CHECK(std::isfinite(value(bundle, o)));
    const auto d = action_dist(bundle, o);
    for (std::size_t c = 0; c < kActionDim; ++c) {
        CHECK(std::abs(d.mean[c]) <= 1.0);
        CHECK(d.std[c] == 1.0);
    }
}

TEST_CASE("sampling") {
    PolicyBundle bundle(PolicyConfig{}, 4);
    std::mt19937_64 r(5);
    const Observation o = random_obs(r);
    const ActionDist d = action_dist(bundle, o);

    const Sample zero = sample_with_noise(d, ActionVec{});
    for (std::size_t c = 0; c < kActionDim; ++c) CHECK(zero.action[c] == std::tanh(d.loc[c]));

    std::mt19937_64 r1(9), r2(9);
    const Sample a = sample_action(bundle, o, r1);
    const Sample b = sample_action(bundle, o, r2);
    CHECK(a.action == b.action);
    CHECK(a.log_prob == b.log_prob);
    CHECK(std::isfinite(a.log_prob));

    // independent recomputation: Gaussian density via the autodiff op, Jacobian directly
    Array raw({1, kActionDim});
    for (std::size_t c = 0; c < kActionDim; ++c) raw.data[c] = a.raw[c];
    Array loc({1, kActionDim});
    for (std::size_t c = 0; c < kActionDim; ++c) loc.data[c] = d.loc[c];
    const double gauss = ops::gaussian_logprob(constant(loc), constant(Array({kActionDim}, 0.0)), raw).item();
    double jac = 0.0;
    for (std::size_t c = 0; c < kActionDim; ++c) jac += std::log(1.0 - std::tanh(a.raw[c]) * std::tanh(a.raw[c]));
    CHECK(a.log_prob == doctest::Approx(gauss - jac).epsilon(1e-10));
}

TEST_CASE("tanh jacobian is stable for large inputs") {
    const std::vector<double> big{30.0, -30.0};
    const double j = tanh_log_jacobian(big);
    CHECK(std::isfinite(j));
    CHECK(j == doctest::Approx(2 * 2.0 * (std::numbers::ln2 - 30.0)).epsilon(1e-9));
}

TEST_CASE("paired noise gives transformed samples") {
    PolicyBundle bundle(PolicyConfig{}, 6);
    const SpatialAction act(G, kArenaSize, kArenaSize);
    std::mt19937_64 r(7);
    const Observation o = random_obs(r);
    const ActionVec xi = draw_noise(r);
    const Sample s = sample_with_noise(action_dist(bundle, o), xi);
    for (auto g : G.elements()) {
        const auto gxi = transform_action(G, g, xi);
        const Sample sg = sample_with_noise(action_dist(bundle, transform_observation(act, g, o)), gxi);
        const auto expect = transform_action(G, g, s.action);
        for (std::size_t c = 0; c < kActionDim; ++c) CHECK(std::abs(sg.action[c] - expect[c]) < 1e-9);
        CHECK(sg.log_prob == doctest::Approx(s.log_prob).epsilon(1e-9));
    }
}

TEST_CASE("cnn bundle builds and is not equivariant") {
    PolicyConfig cfg;
    cfg.kind = ExtractorKind::cnn;
    PolicyBundle bundle(cfg, 1);
    CHECK_FALSE(bundle.extractor().is_equivariant());
    std::mt19937_64 r(3);
    const Observation o = random_obs(r);
    const SpatialAction act(G, kArenaSize, kArenaSize);
    const double v = value(bundle, o);
    const double vg = value(bundle, transform_observation(act, d2::r180, o));
    CHECK(std::abs(v - vg) > 1e-9);
}
