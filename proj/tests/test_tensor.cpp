#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/kernels.hpp"
#include "covers/tensor.hpp"
#include "support/gradcheck.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace covers;
using covers::testing::random_array;

TEST_CASE("affine examples") {
    std::mt19937_64 r(1);
    const Array x = random_array({1, 3}, r);
    Array eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.data[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    const auto y = ops::affine(constant(x), constant(eye), constant(Array({3})));
    CHECK(y.array().data == x.data);

    const Array b = random_array({3}, r);
    const auto y0 = ops::affine(constant(Array({1, 3})), constant(random_array({3, 3}, r)), constant(b));
    CHECK(y0.array().data == b.data);

    CHECK_THROWS_AS(ops::affine(constant(Array({1, 2})), constant(eye), Var{}), std::invalid_argument);
}

TEST_CASE("conv2d examples") {
    std::mt19937_64 r(2);
    const Array x = random_array({1, 1, 4, 5}, r);
    const auto y = ops::conv2d(constant(x), constant(Array({1, 1, 1, 1}, 1.0)), 1, 0);
    CHECK(y.array().data == x.data);

    const auto s = ops::conv2d(constant(Array({1, 1, 2, 2}, 1.0)), constant(Array({1, 1, 2, 2}, 1.0)), 1, 0);
    CHECK(s.shape() == Shape{1, 1, 1, 1});
    CHECK(s.item() == 4.0);

    CHECK_THROWS_AS(ops::conv2d(constant(Array({1, 1, 2, 2})), constant(Array({1, 1, 3, 3})), 1, 0),
                    std::invalid_argument);
    // output size floor((H + 2 pad - k) / stride) + 1
    const auto o = ops::conv2d(constant(Array({2, 3, 16, 16})), constant(Array({5, 3, 4, 4})), 2, 1);
    CHECK(o.shape() == Shape{2, 5, 8, 8});
}

TEST_CASE("conv kernels agree with the reference loops") {
    std::mt19937_64 r(3);
    for (int trial = 0; trial < 20; ++trial) {
        kernels::ConvGeometry g{1 + trial % 3, 1 + trial % 4, 5 + trial % 4, 6 - trial % 3, 2 + trial % 3,
                                1 + trial % 4, 2 + trial % 2, 1 + trial % 2, trial % 2};
        if (!g.valid()) continue;
        const Array x = random_array({g.batch, g.in_channels, g.height, g.width}, r);
        const Array k = random_array({g.out_channels, g.in_channels, g.kernel_h, g.kernel_w}, r);
        std::vector<double> y1(static_cast<std::size_t>(g.batch * g.out_channels * g.out_height() * g.out_width()));
        auto y2 = y1;
        kernels::conv2d_forward_reference(g, x.data, k.data, y1);
        kernels::conv2d_forward(g, x.data, k.data, y2);
        for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-12));

        const Array dy = random_array({g.batch, g.out_channels, g.out_height(), g.out_width()}, r);
        std::vector<double> dx1(x.size()), dx2(x.size()), dk1(k.size()), dk2(k.size());
        kernels::conv2d_backward_reference(g, x.data, k.data, dy.data, dx1, dk1);
        kernels::conv2d_backward(g, x.data, k.data, dy.data, dx2, dk2);
        for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(dx2[i] == doctest::Approx(dx1[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < dk1.size(); ++i) CHECK(dk2[i] == doctest::Approx(dk1[i]).epsilon(1e-12));
    }
}

TEST_CASE("elementwise and reduction examples") {
    const auto r = ops::relu(constant({2}, {-1.0, 2.0}));
    CHECK(r.array().data == std::vector<double>{0.0, 2.0});

    auto x = parameter(Array({3}, std::vector<double>{3.0, 1.0, 3.0}));
    const auto m = ops::max_over_axis(x, 0);
    CHECK(m.item() == 3.0);
    backward(m);
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1.0, 0.0, 0.0});

    std::mt19937_64 rng(5);
    const Array a = random_array({2, 3}, rng);
    const Array b = random_array({2, 2}, rng);
    const auto c = ops::concat({constant(a), constant(b)}, 1);
    CHECK(ops::slice(c, 1, 0, 3).array() == a);
    CHECK(ops::slice(c, 1, 3, 5).array() == b);

    CHECK_THROWS_AS(ops::max_over_axis(constant(Array({2, 0})), 1), std::invalid_argument);
    CHECK_THROWS_AS(ops::mean(constant(Array({0}))), std::invalid_argument);
}

TEST_CASE("gaussian_logprob examples") {
    const auto lp = ops::gaussian_logprob(constant({1, 1}, {0.7}), constant({1}, {0.0}), Array({1, 1}, {0.7}));
    CHECK(lp.item() == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    CHECK(lp.item() == doctest::Approx(-0.9189).epsilon(1e-4));

    const auto a = ops::gaussian_logprob(constant({1, 2}, {0.1, -0.3}), constant({2}, {0.2, -0.4}), Array({1, 2}, {0.5, 0.5}));
    const auto b = ops::gaussian_logprob(constant({1, 2}, {2.1, 1.7}), constant({2}, {0.2, -0.4}), Array({1, 2}, {2.5, 2.5}));
    CHECK(a.item() == doctest::Approx(b.item()).epsilon(1e-12));

    CHECK_THROWS_AS(ops::gaussian_logprob(constant({1, 1}, {NAN}), constant({1}, {0.0}), Array({1, 1}, {0.0})),
                    std::domain_error);
}

TEST_CASE("finite-difference gradient suite") {
    for (const auto& check : covers::testing::all_op_checks()) {
        double worst = 0.0;
        std::string where;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto res = check.run(seed);
            if (res.max_rel_error > worst) {
                worst = res.max_rel_error;
                where = res.worst;
            }
        }
        CAPTURE(check.name);
        CAPTURE(where);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("ops do not mutate inputs and graphs are deterministic") {
    std::mt19937_64 r(9);
    const Array xa = random_array({4, 3}, r);
    const Array wa = random_array({2, 3}, r);
    auto run = [&] {
        auto x = parameter(xa);
        auto w = parameter(wa);
        auto y = ops::sum(ops::tanh(ops::affine(x, w, Var{})));
        backward(y);
        CHECK(x.array() == xa);
        CHECK(w.array() == wa);
        return std::pair{y.item(), std::vector<double>(w.grad().begin(), w.grad().end())};
    };
    CHECK(run() == run());
}

TEST_CASE("param store seeding and adam") {
    ParamStore a(42), b(42), c(43);
    for (auto* s : {&a, &b, &c}) {
        s->add_uniform("w", {3, 4}, 4);
        s->add_constant("b", {3}, 0.0);
    }
    CHECK(a.bitwise_equal(b));
    CHECK_FALSE(a.bitwise_equal(c));
    CHECK(a.count() == 15);

    SUBCASE("missing grads is an error") {
        Adam opt;
        CHECK_THROWS_AS(opt.step(a), std::logic_error);
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        const ParamStore before = a.clone();
        Adam opt;
        for (auto& [n, v] : a.entries()) {
            Var h = v;
            h.mutable_grad();
        }
        opt.step(a);
        CHECK(a.bitwise_equal(before));
    }
    SUBCASE("constant gradient: step magnitude approaches lr") {
        // With a constant gradient g the bias-corrected moments are exactly g and g^2,
        // so every step moves by lr * |g| / (|g| + eps) ~= lr.
        ParamStore s(1);
        Var p = s.add_constant("p", {1}, 0.0);
        Adam opt(AdamConfig{0.01, 0.9, 0.999, 1e-8});
        double prev = 0.0;
        for (int i = 0; i < 200; ++i) {
            s.zero_grad();
            p.mutable_grad()[0] = 0.5;
            opt.step(s);
            const double step = prev - p.value()[0];
            CHECK(step == doctest::Approx(0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-9));
            prev = p.value()[0];
        }
    }
    SUBCASE("identical stores and grads give identical updates") {
        Adam oa, ob;
        for (int i = 0; i < 3; ++i) {
            for (auto* s : {&a, &b}) {
                s->zero_grad();
                for (auto& [n, v] : s->entries()) {
                    Var h = v;
                    auto& g = h.mutable_grad();
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] = std::sin(static_cast<double>(j + i));
                }
            }
            oa.step(a);
            ob.step(b);
        }
        CHECK(a.bitwise_equal(b));
    }
}

TEST_CASE("checkpoint round trip") {
    ParamStore a(7);
    a.add_uniform("conv.k", {2, 3, 4}, 12);
    a.add_uniform("head.b", {5}, 5);
    const auto dir = std::filesystem::temp_directory_path() / "covers_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(a, dir, {{"bundle_id", "3"}});
    ParamStore b(7);
    b.add_constant("conv.k", {2, 3, 4}, 0.0);
    b.add_constant("head.b", {5}, 0.0);
    load_checkpoint(b, dir);
    CHECK(a.bitwise_equal(b));
    CHECK(std::filesystem::file_size(dir / "params.bin") == 29 * sizeof(double));

    ParamStore wrong(7);
    wrong.add_constant("conv.k", {2, 12}, 0.0);
    wrong.add_constant("head.b", {5}, 0.0);
    CHECK_THROWS(load_checkpoint(wrong, dir));
    std::filesystem::remove_all(dir);
}
