#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/env.hpp"

#include <filesystem>
#include <set>

using namespace covers;

namespace {

const GroupSpec G = GroupSpec::d2();
const SpatialAction& arena() {
    static const SpatialAction a(G, kArenaSize, kArenaSize);
    return a;
}

std::vector<TaskGroup> all_groups() { return {TaskGroup::reach, TaskGroup::press, TaskGroup::close, TaskGroup::slide}; }

}  // namespace

TEST_CASE("cell coordinates follow the plane action") {
    const Cell c{3, 5};
    for (auto g : G.elements()) {
        const auto [r, col] = arena().map_cell(g, c.row, c.col);
        const auto m = G.plane_matrix(g);
        CHECK(cell_x({r, col}) == doctest::Approx(m(0, 0) * cell_x(c) + m(0, 1) * cell_y(c)));
        CHECK(cell_y({r, col}) == doctest::Approx(m(1, 0) * cell_x(c) + m(1, 1) * cell_y(c)));
    }
}

TEST_CASE("reset") {
    for (auto grp : all_groups()) {
        Env a({grp, d2::e}), b({grp, d2::e});
        CHECK(a.reset(17) == b.reset(17));
        const auto o = a.reset(3);
        CHECK(o.image == o.initial);
        if (grp == TaskGroup::reach) {
            CHECK((o.aux[0] != 0.0 || o.aux[1] != 0.0));
        } else {
            CHECK(o.aux == std::array<double, kAuxDim>{});
        }
        for (auto g : G.elements())
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                Env base({grp, d2::e}), twin(transform_task({grp, d2::e}, g));
                const auto ob = base.reset(seed);
                CHECK(twin.reset(seed) == transform_observation(arena(), g, ob));
                CHECK(twin.state() == transform_state(base.state(), g));
            }
    }
}

TEST_CASE("reach goal is hidden, slide goal is drawn") {
    Env reach({TaskGroup::reach, d2::e});
    const auto o = reach.reset(0);
    double goal_plane = 0.0;
    for (int i = 0; i < kArenaSize; ++i)
        for (int j = 0; j < kArenaSize; ++j) goal_plane += o.image.at(2, i, j);
    CHECK(goal_plane == 0.0);
    Env slide({TaskGroup::slide, d2::e});
    const auto s = slide.reset(0);
    CHECK(s.image.at(2, slide.layout().goal.row, slide.layout().goal.col) == 1.0);
}

TEST_CASE("step examples") {
    Env env({TaskGroup::reach, d2::e});
    env.reset(0);
    auto st = env.state();
    st.agent = {env.layout().goal.row, env.layout().goal.col + 1};
    env.set_state(st);
    const std::vector<double> left{-1.0, 0.0, 0.0, 0.0};
    const auto r = env.step(left);
    CHECK(r.success);
    CHECK(r.done);
    CHECK(r.reward == doctest::Approx(10.0));
    CHECK_THROWS_AS(env.step(left), std::logic_error);

    Env slide({TaskGroup::slide, d2::r180});
    slide.reset(4);
    const double d0 = slide.relevant_distance();
    const std::vector<double> zero(4, 0.0);
    const auto z = slide.step(zero);
    CHECK(slide.relevant_distance() == d0);
    CHECK(z.reward == doctest::Approx(-0.1 * d0));
    CHECK_THROWS_AS(slide.step(std::vector<double>{0.0}), std::invalid_argument);
}

TEST_CASE("out-of-range actions are clipped") {
    Env a({TaskGroup::press, d2::e}), b({TaskGroup::press, d2::e});
    a.reset(1);
    b.reset(1);
    a.step(std::vector<double>{7.0, -3.0, 9.0, -5.0});
    b.step(std::vector<double>{1.0, -1.0, 1.0, -1.0});
    CHECK(a.state() == b.state());
}

TEST_CASE("drawer only slides along its rail") {
    Env env({TaskGroup::close, d2::e});
    env.reset(0);
    auto st = env.state();
    st.object = {6, 7};
    st.agent = {6, 8};
    env.set_state(st);
    env.step(std::vector<double>{-1.0, 0.0, 0.0, 0.0});
    CHECK(env.state().object == Cell{6, 6});
    CHECK(env.state().agent == Cell{6, 7});
    st = env.state();
    st.agent = {5, 7};
    env.set_state(st);
    env.step(std::vector<double>{-1.0, 1.0, 0.0, 0.0});  // diagonal push: only the horizontal part moves it
    CHECK(env.state().object == Cell{6, 5});
    CHECK(env.state().agent == Cell{6, 6});
    st = env.state();
    st.object = {6, 7};
    st.agent = {5, 7};
    env.set_state(st);
    env.step(std::vector<double>{0.0, 1.0, 0.0, 0.0});  // vertical push: blocked
    CHECK(env.state().object == Cell{6, 7});
    CHECK(env.state().agent == Cell{5, 7});
}

TEST_CASE("exact MDP symmetry on random states and actions") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (auto grp : all_groups()) {
        int checked = 0;
        for (int k = 0; k < 1000; ++k) {
            const GroupElement base_g{static_cast<int>(rng() % 4)};
            const GroupElement g{static_cast<int>(rng() % 4)};
            Env env({grp, base_g});
            env.reset(0);
            env.set_state(random_state(env, rng));
            Env twin(transform_task(env.task(), g));
            twin.reset(0);
            twin.set_state(transform_state(env.state(), g));
            CHECK(twin.observe() == transform_observation(arena(), g, env.observe()));
            std::vector<double> a(4);
            for (double& x : a) x = u(rng);
            const auto ka = transform_action(G, g, a);
            const auto r1 = env.step(a);
            const auto r2 = twin.step(ka);
            CHECK(r1.reward == r2.reward);
            CHECK(r1.done == r2.done);
            CHECK(twin.state() == transform_state(env.state(), g));
            CHECK(r2.obs == transform_observation(arena(), g, r1.obs));
            ++checked;
        }
        CHECK(checked == 1000);
    }
}

TEST_CASE("transform_task") {
    for (auto grp : all_groups()) {
        const TaskInstance t{grp, d2::e};
        CHECK(transform_task(t, d2::e) == t);
        CHECK(transform_task(transform_task(t, d2::m_x), d2::m_x) == t);
        std::set<std::pair<Cell, Cell>> placements;
        for (auto g : G.elements()) {
            const auto tg = transform_task(t, g);
            CHECK(transform_task(tg, G.inverse(g)) == t);
            Env e(tg);
            e.reset(0);
            placements.insert({task_layout(tg).goal, e.state().agent});
        }
        CHECK(placements.size() == 4);
    }
}

TEST_CASE("scripted expert solves every variant") {
    for (auto grp : all_groups())
        for (auto g : G.elements())
            for (std::uint64_t seed = 0; seed < 30; ++seed) {
                Env env({grp, g});
                env.reset(seed);
                bool success = false;
                double ret = 0.0;
                for (int t = 0; t < env.config().horizon && !success; ++t) {
                    const auto r = env.step(scripted_action(env));
                    success = r.success;
                    ret += r.reward;
                }
                CAPTURE(group_name(grp));
                CAPTURE(g.index);
                CAPTURE(seed);
                CHECK(success);
                CHECK(env.state().t <= 30);
            }
}

TEST_CASE("schedules") {
    const auto d = default_schedule();
    CHECK(d.size() == 8);
    CHECK(schedule_episodes(d) == 1600);
    CHECK(parse_schedule(schedule_to_json(d)).size() == 8);
    const auto s = parse_schedule(R"([{"group":"press","orbit":"m_y","episodes":5},{"group":"slide","orbit":3,"episodes":0}])");
    CHECK(s[0].group == TaskGroup::press);
    CHECK(s[0].orbit == d2::m_y);
    CHECK(s[1].orbit == d2::r180);
    CHECK(parse_schedule("[]").empty());
    CHECK_THROWS_AS(parse_schedule(R"([{"group":"fly","episodes":1}])"), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule(R"([{"group":"reach"}])"), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule("{"), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule(R"([{"group":"reach","orbit":"r90","episodes":1}])"), std::invalid_argument);
}

TEST_CASE("pgm snapshot") {
    Env env({TaskGroup::close, d2::m_y});
    const auto path = std::filesystem::temp_directory_path() / "covers_env_test.pgm";
    write_pgm(env.reset(0), path, 4);
    CHECK(std::filesystem::file_size(path) == std::string("P5\n64 64\n255\n").size() + 64 * 64);
    std::filesystem::remove(path);
}
