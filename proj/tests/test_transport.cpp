#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/policy.hpp"
#include "covers/transport.hpp"
#include "support/lp_oracle.hpp"

#include <random>

using namespace covers;

namespace {

Eigen::MatrixXd cloud(std::mt19937_64& r, int n, int d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = g(r);
    return x;
}

Eigen::MatrixXd pts(std::initializer_list<double> v) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(v.size()), 1);
    int i = 0;
    for (double a : v) x(i++, 0) = a;
    return x;
}

}  // namespace

TEST_CASE("cost matrix examples") {
    CHECK(cost_matrix(Eigen::MatrixXd::Zero(1, 3), Eigen::MatrixXd::Zero(1, 3))(0, 0) == 0.0);
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0, 0;
    b << 3, 4;
    CHECK(cost_matrix(a, b)(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(cost_matrix(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 3)), std::invalid_argument);
    std::mt19937_64 r(1);
    const auto x = cloud(r, 5, 3), y = cloud(r, 4, 3);
    CHECK((cost_matrix(x, y) - cost_matrix(y, x).transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cost_matrix(x, y).minCoeff() > 0.0);
}

TEST_CASE("w1 examples") {
    std::mt19937_64 r(2);
    const auto x = cloud(r, 7, 3);
    CHECK(w1_distance(x, x).cost == doctest::Approx(0.0));
    CHECK(w1_distance(pts({0}), pts({-2.5})).cost == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(w1_distance(pts({0, 2}), pts({1, 1})).cost == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w1_distance(pts({0}), pts({0, 2})).cost == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(w1_distance(Eigen::MatrixXd(0, 1), pts({1})), std::invalid_argument);
    CHECK_THROWS_AS(w1_distance(pts({NAN}), pts({1})), std::domain_error);
}

TEST_CASE("plan marginals and cost identity") {
    std::mt19937_64 r(3);
    for (int t = 0; t < 20; ++t) {
        const int n = 1 + t % 9, m = 1 + (t * 7) % 11;
        const auto x = cloud(r, n, 4), y = cloud(r, m, 4);
        const auto p = w1_distance(x, y);
        CHECK((p.plan.rowwise().sum().array() - 1.0 / n).abs().maxCoeff() < 1e-12);
        CHECK((p.plan.colwise().sum().array() - 1.0 / m).abs().maxCoeff() < 1e-12);
        CHECK(p.plan.minCoeff() >= 0.0);
        CHECK(p.cost == doctest::Approx(p.plan.cwiseProduct(cost_matrix(x, y)).sum()).epsilon(1e-12));
    }
}

TEST_CASE("exact solver matches LP vertex enumeration") {
    std::mt19937_64 r(4);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + static_cast<int>(r() % 4), m = 1 + static_cast<int>(r() % 4);
        const auto x = cloud(r, n, 2), y = cloud(r, m, 2);
        const double exact = w1_distance(x, y).cost;
        CHECK(std::abs(exact - testing::lp_vertex_min(cost_matrix(x, y))) < 1e-9);
    }
}

TEST_CASE("degenerate and tied costs terminate") {
    // integer grid points produce many equal costs and degenerate bases
    std::mt19937_64 r(5);
    for (int t = 0; t < 30; ++t) {
        const int n = 20 + t, m = 10 + 2 * t;
        Eigen::MatrixXd x(n, 1), y(m, 1);
        for (int i = 0; i < n; ++i) x(i, 0) = static_cast<double>(r() % 3);
        for (int i = 0; i < m; ++i) y(i, 0) = static_cast<double>(r() % 3);
        // 1-d W1 equals the L1 distance between quantile functions
        std::vector<double> xs(x.data(), x.data() + n), ys(y.data(), y.data() + m);
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        double q = 0.0;
        const int steps = n * m;
        for (int k = 0; k < steps; ++k) q += std::abs(xs[static_cast<std::size_t>(k / m)] - ys[static_cast<std::size_t>(k / n)]);
        CHECK(w1_distance(x, y).cost == doctest::Approx(q / steps).epsilon(1e-12));
    }
}

TEST_CASE("metric axioms and scaling") {
    std::mt19937_64 r(6);
    for (int t = 0; t < 100; ++t) {
        const auto a = cloud(r, 1 + t % 6, 3), b = cloud(r, 2 + t % 5, 3), c = cloud(r, 1 + t % 7, 3);
        const double ab = w1_distance(a, b).cost, ba = w1_distance(b, a).cost;
        const double bc = w1_distance(b, c).cost, ac = w1_distance(a, c).cost;
        CHECK(ab >= 0.0);
        CHECK(std::abs(ab - ba) < 1e-9);
        CHECK(ac <= ab + bc + 1e-9);
        CHECK(w1_distance(2.5 * a, 2.5 * b).cost == doctest::Approx(2.5 * ab).epsilon(1e-12));
    }
}

TEST_CASE("buffer distance through invariant features") {
    PolicyBundle bundle(PolicyConfig{}, 3);
    const SpatialAction act(GroupSpec::d2(), kArenaSize, kArenaSize);
    std::mt19937_64 r(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FrameBuffer a, b;
    for (int i = 0; i < 12; ++i) {
        Observation o;
        for (double& v : o.image.data) v = u(r) < 0.05 ? 1.0 : 0.0;
        o.initial = o.image;
        o.state = {u(r), u(r), 0.0, 1.0};
        a.add(o);
        b.add(transform_observation(act, GroupElement{static_cast<int>(i % 4)}, o));
    }
    CHECK(buffer_distance(a, a, bundle) == 0.0);
    CHECK(buffer_distance(a, b, bundle) < 1e-6);
    FrameBuffer c;
    c.add(Observation{});
    CHECK(buffer_distance(a, c, bundle) == doctest::Approx(buffer_distance(c, a, bundle)).epsilon(1e-12));
    CHECK_THROWS_AS(buffer_distance(a, FrameBuffer{}, bundle), std::invalid_argument);
}

TEST_CASE("frame buffer evicts oldest first") {
    FrameBuffer f(3);
    for (int i = 0; i < 5; ++i) {
        Observation o;
        o.state[0] = i;
        f.add(o);
    }
    CHECK(f.size() == 3);
    CHECK(f.frames().front().state[0] == 2.0);
    CHECK(f.frames().back().state[0] == 4.0);
}
