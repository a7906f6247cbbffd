#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/ppo.hpp"
#include "covers/rollout.hpp"

#include <cmath>
#include <numeric>

using namespace covers;

namespace {

// Direct sum A_t = sum_l (gamma lambda)^l delta_{t+l}, cut at the first done.
std::vector<double> naive_gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& done,
                              double gamma, double lambda) {
    const std::size_t n = r.size();
    std::vector<double> a(n);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0, w = 1.0;
        for (std::size_t l = t; l < n; ++l) {
            acc += w * (r[l] + gamma * v[l + 1] * (done[l] ? 0.0 : 1.0) - v[l]);
            if (done[l]) break;
            w *= gamma * lambda;
        }
        a[t] = acc;
    }
    return a;
}

RolloutBuffer collect(const PolicyBundle& bundle, int episodes, std::uint64_t seed, int horizon = 12) {
    EnvConfig ec;
    ec.horizon = horizon;
    std::vector<EpisodeSpec> specs;
    for (int i = 0; i < episodes; ++i)
        specs.push_back({{TaskGroup::reach, GroupElement{i % 4}}, seed + static_cast<std::uint64_t>(i), seed * 31 + static_cast<std::uint64_t>(i)});
    RolloutBuffer buf;
    for (auto& r : run_episodes(bundle, specs, ec, 4)) buf.append(std::move(r.transitions));
    return buf;
}

std::vector<double> flat_grad(const ParamStore& store) {
    std::vector<double> g;
    for (const auto& [name, v] : store.entries()) {
        if (v.has_grad())
            g.insert(g.end(), v.grad().begin(), v.grad().end());
        else
            g.insert(g.end(), v.value().size(), 0.0);
    }
    return g;
}

}  // namespace

TEST_CASE("gae examples") {
    const std::vector<double> r{1, 1, 1}, v{0, 0, 0, 0};
    const bool d[3] = {false, false, true};
    auto g = compute_gae(r, v, std::span<const bool>(d, 3), 0.5, 0.5);
    CHECK(g.advantages[0] == doctest::Approx(1.3125));
    CHECK(g.advantages[1] == doctest::Approx(1.25));
    CHECK(g.advantages[2] == doctest::Approx(1.0));

    const std::vector<double> v2{0.5, -1, 2, 7};
    g = compute_gae(r, v2, std::span<const bool>(d, 3), 0.0, 0.9);
    for (int i = 0; i < 3; ++i) CHECK(g.advantages[i] == doctest::Approx(r[i] - v2[i]));
    for (int i = 0; i < 3; ++i) CHECK(g.returns[i] == doctest::Approx(g.advantages[i] + v2[i]));

    CHECK_THROWS_AS(compute_gae(r, r, std::span<const bool>(d, 3), 0.9, 0.9), std::invalid_argument);
}

TEST_CASE("gae matches the direct sum") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 30;
        std::vector<double> r(n), v(n + 1);
        std::vector<bool> done(n);
        std::unique_ptr<bool[]> d(new bool[n]);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = n01(rng);
            done[i] = d[i] = rng() % 5 == 0;
        }
        for (double& x : v) x = n01(rng);
        const auto g = compute_gae(r, v, std::span<const bool>(d.get(), n), 0.97, 0.9);
        const auto ref = naive_gae(r, v, done, 0.97, 0.9);
        for (std::size_t i = 0; i < n; ++i) CHECK(g.advantages[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("truncation bootstraps, success does not") {
    const std::vector<double> r{0, 0}, v{0, 0}, next{0, 5};
    const bool term[2] = {false, false}, end[2] = {false, true};
    auto g = compute_gae(r, v, next, std::span<const bool>(term, 2), std::span<const bool>(end, 2), 1.0, 1.0);
    CHECK(g.advantages[1] == doctest::Approx(5.0));
    CHECK(g.advantages[0] == doctest::Approx(5.0));
    const bool term2[2] = {false, true};
    g = compute_gae(r, v, next, std::span<const bool>(term2, 2), std::span<const bool>(end, 2), 1.0, 1.0);
    CHECK(g.advantages[1] == 0.0);
}

TEST_CASE("clipped surrogate examples") {
    CHECK(clipped_surrogate(1.0, 1.0, 0.2) == doctest::Approx(1.0));
    CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
    CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
    CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
    CHECK(clipped_surrogate(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
}

TEST_CASE("surrogate at the old parameters is the mean advantage") {
    PolicyBundle bundle(PolicyConfig{}, 3);
    auto buf = collect(bundle, 4, 10);
    PpoConfig cfg;
    buf.finalize(cfg);
    std::vector<std::size_t> idx(buf.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto lt = clip_loss(bundle, buf, idx, cfg);
    const double mean_adv = std::accumulate(buf.advantages().begin(), buf.advantages().end(), 0.0) / buf.size();
    CHECK(lt.surrogate == doctest::Approx(mean_adv).epsilon(1e-9));
    CHECK(std::abs(lt.approx_kl) < 1e-12);
    CHECK(lt.clip_fraction == 0.0);
}

TEST_CASE("wide clip gives the vanilla policy gradient") {
    PolicyBundle bundle(PolicyConfig{}, 4);
    auto buf = collect(bundle, 4, 20);
    PpoConfig cfg;
    cfg.clip = 1e6;
    cfg.value_coef = 0.0;
    cfg.entropy_coef = 0.0;
    buf.finalize(cfg);
    std::vector<std::size_t> idx(buf.size());
    std::iota(idx.begin(), idx.end(), 0);

    bundle.params().zero_grad();
    backward(clip_loss(bundle, buf, idx, cfg).loss);
    const auto g_clip = flat_grad(bundle.params());

    // -mean(A log pi), built here without the ratio
    std::vector<const Observation*> obs;
    const int n = static_cast<int>(buf.size());
    Array raw({n, kActionDim}), adv({n});
    for (int i = 0; i < n; ++i) {
        obs.push_back(&buf.transitions()[i].obs);
        for (std::size_t c = 0; c < kActionDim; ++c) raw.data[i * kActionDim + c] = buf.transitions()[i].raw[c];
        adv.data[i] = buf.advantages()[i];
    }
    bundle.params().zero_grad();
    const auto out = bundle.forward(make_batch(std::span<const Observation* const>(obs)));
    backward(ops::scale(ops::mean(ops::mul(ops::gaussian_logprob(out.loc, out.log_std, raw), constant(adv))), -1.0));
    const auto g_pg = flat_grad(bundle.params());

    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < g_pg.size(); ++i) {
        dot += g_clip[i] * g_pg[i];
        na += g_clip[i] * g_clip[i];
        nb += g_pg[i] * g_pg[i];
    }
    CHECK(nb > 0.0);
    CHECK(dot / std::sqrt(na * nb) > 0.999);
}

TEST_CASE("an update raises the likelihood of advantaged actions") {
    PolicyBundle bundle(PolicyConfig{}, 5);
    auto buf = collect(bundle, 6, 30);
    PpoConfig cfg;
    cfg.epochs = 4;
    cfg.lr = 1e-3;
    buf.finalize(cfg);
    const auto before = buf.transitions();
    const auto adv = buf.advantages();
    std::mt19937_64 rng(1);
    const double v_before = value(bundle, before[0].obs);
    const auto st = ppo_update(bundle, buf, cfg, rng);
    CHECK(st.minibatches > 0);
    CHECK(bundle.version() == 1);
    double score = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const auto d = action_dist(bundle, before[i].obs);
        double lp = -tanh_log_jacobian(before[i].raw);
        for (std::size_t c = 0; c < kActionDim; ++c) {
            const double z = (before[i].raw[c] - d.loc[c]) / d.std[c];
            lp += -0.5 * z * z - std::log(d.std[c]) - 0.5 * std::log(2 * std::numbers::pi);
        }
        score += adv[i] * (lp - before[i].log_prob_old);
    }
    CHECK(score > 0.0);
    CHECK(value(bundle, before[0].obs) != v_before);
}

TEST_CASE("kl early stop") {
    PolicyBundle bundle(PolicyConfig{}, 6);
    auto buf = collect(bundle, 6, 40);
    PpoConfig cfg;
    cfg.lr = 3e-2;
    cfg.epochs = 20;
    std::mt19937_64 rng(2);
    const auto st = ppo_update(bundle, buf, cfg, rng);
    CHECK(st.early_stopped);
    CHECK(st.approx_kl > cfg.max_kl);
    CHECK(st.epochs < cfg.epochs);
}

TEST_CASE("refresh recomputes under another bundle") {
    PolicyBundle a(PolicyConfig{}, 7), b(PolicyConfig{}, 8);
    auto buf = collect(a, 3, 50);
    auto twin = collect(a, 3, 50);
    buf.refresh(b);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const auto d = action_dist(b, buf.transitions()[i].obs);
        double lp = -tanh_log_jacobian(buf.transitions()[i].raw);
        for (std::size_t c = 0; c < kActionDim; ++c) {
            const double z = (buf.transitions()[i].raw[c] - d.loc[c]) / d.std[c];
            lp += -0.5 * z * z - std::log(d.std[c]) - 0.5 * std::log(2 * std::numbers::pi);
        }
        CHECK(buf.transitions()[i].log_prob_old == doctest::Approx(lp).epsilon(1e-10));
        CHECK(buf.transitions()[i].value_old == doctest::Approx(value(b, buf.transitions()[i].obs)).epsilon(1e-10));
    }
    twin.refresh(a);
    for (std::size_t i = 0; i < twin.size(); ++i)
        CHECK(twin.transitions()[i].log_prob_old == doctest::Approx(collect(a, 3, 50).transitions()[i].log_prob_old).epsilon(1e-9));
}

TEST_CASE("updates are deterministic") {
    PolicyBundle a(PolicyConfig{}, 9), b(PolicyConfig{}, 9);
    auto ba = collect(a, 4, 60), bb = collect(b, 4, 60);
    PpoConfig cfg;
    std::mt19937_64 ra(3), rb(3);
    ppo_update(a, ba, cfg, ra);
    ppo_update(b, bb, cfg, rb);
    CHECK(a.params().bitwise_equal(b.params()));
}

TEST_CASE("bad input") {
    PolicyBundle bundle(PolicyConfig{}, 10);
    RolloutBuffer empty;
    PpoConfig cfg;
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(ppo_update(bundle, empty, cfg, rng), std::invalid_argument);
    Transition t;
    t.reward = std::nan("");
    CHECK_THROWS_AS(empty.add(t), std::invalid_argument);
    auto buf = collect(bundle, 1, 0);
    const std::size_t i0 = 0;
    CHECK_THROWS_AS(clip_loss(bundle, buf, std::span<const std::size_t>(&i0, 1), cfg), std::logic_error);
}
