#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covers/harness.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

using namespace covers;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("covers_harness_" + name);
    fs::remove_all(d);
    return d;
}

RunConfig tiny(Method m, Schedule s) {
    RunConfig c;
    c.method = m;
    c.schedule = std::move(s);
    c.seeds = {3};
    c.controller.update_interval = 4;
    c.env.horizon = 8;
    c.ppo.epochs = 1;
    return c;
}

}  // namespace

TEST_CASE("schedule expansion") {
    const auto s = parse_schedule(R"([{"group":"press","orbit":"m_y","episodes":3},{"group":"slide","episodes":40}])");
    const auto t = schedule_tasks(s, 1);
    REQUIRE(t.size() == 43);
    for (int i = 0; i < 3; ++i) CHECK(t[i] == TaskInstance{TaskGroup::press, d2::m_y});
    std::set<int> orbits;
    for (int i = 3; i < 43; ++i) {
        CHECK(t[i].group == TaskGroup::slide);
        orbits.insert(t[i].g.index);
    }
    CHECK(orbits.size() == 4);
    CHECK(schedule_tasks(s, 1) == t);
    CHECK(schedule_tasks(s, 2) != t);
    const auto ph = schedule_phases(s);
    CHECK(ph[2] == 0);
    CHECK(ph[3] == 1);
    CHECK(first_cycle_end(default_schedule()) == 800);
    CHECK(first_cycle_end(s) == 43);
}

TEST_CASE("run config parsing") {
    const auto c = parse_run_config(R"({"method":"covers_cnn","seeds":[4,5],"controller":{"d_eps":2.5},
        "ppo":{"lr":0.001},"policy":{"conv1_fields":2},"env":{"horizon":50},
        "schedule":[{"group":"close","orbit":"r180","episodes":7}]})");
    CHECK(c.method == Method::covers_cnn);
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(c.controller.d_eps == 2.5);
    CHECK(c.ppo.lr == 0.001);
    CHECK(c.policy.extractor.conv1_fields == 2);
    CHECK(c.env.horizon == 50);
    CHECK(schedule_episodes(c.schedule) == 7);
    const auto round = parse_run_config(run_config_to_json(c));
    CHECK(run_config_to_json(round) == run_config_to_json(c));
    CHECK_THROWS_AS(parse_run_config(R"({"mthod":"covers"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(R"({"seeds":[]})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(R"({"controller":{"d_eps":-1}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(R"({"schedule":[{"group":"fly","episodes":1}]})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(R"({"method":"clear"})"), std::runtime_error);
}

TEST_CASE("statistics") {
    const std::vector<double> two{0.2, 0.6};
    const auto s = mean_se(two);
    CHECK(s.mean == doctest::Approx(0.4));
    CHECK(s.se == doctest::Approx(std::sqrt(0.08) / std::sqrt(2.0)));
    const std::vector<double> one{1.0};
    CHECK(mean_se(one).se == 0.0);

    using P = std::pair<TaskGroup, int>;
    const std::vector<P> exact{{TaskGroup::reach, 0}, {TaskGroup::press, 1}, {TaskGroup::reach, 0}};
    CHECK(assignment_accuracy(exact) == 1.0);
    const std::vector<P> renamed{{TaskGroup::reach, 3}, {TaskGroup::press, 0}, {TaskGroup::close, 1}};
    CHECK(assignment_accuracy(renamed) == 1.0);
    const std::vector<P> merged{{TaskGroup::reach, 0}, {TaskGroup::press, 0}, {TaskGroup::reach, 0}, {TaskGroup::slide, 1}};
    CHECK(assignment_accuracy(merged) == doctest::Approx(0.75));
    CHECK(std::isnan(assignment_accuracy(std::vector<P>{})));
}

TEST_CASE("scoring synthetic metrics") {
    const auto dir = fresh_dir("synthetic");
    RunConfig c = tiny(Method::equi, parse_schedule(R"([{"group":"reach","episodes":10},{"group":"press","episodes":5}])"));
    c.seeds = {0, 1};
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << run_config_to_json(c);
    for (int seed = 0; seed < 2; ++seed) {
        fs::create_directories(dir / ("seed_" + std::to_string(seed)));
        std::ofstream m(dir / ("seed_" + std::to_string(seed)) / "metrics.csv");
        m << "episode,phase,group,orbit,policy,reward,success,length,policies\n";
        for (int e = 0; e < 15; ++e)
            m << e << ',' << (e < 10 ? 0 : 1) << ',' << (e < 10 ? "reach" : "press") << ",e,0," << (seed + e) << ",1,5,1\n";
    }
    const auto s = score(dir);
    CHECK(s.success[0].mean == 1.0);
    CHECK(s.success[0].se == 0.0);
    CHECK(s.avg_success.mean == 1.0);
    // reach window is episodes 8..9, press window episode 14
    CHECK(s.reward[0].mean == doctest::Approx(9.0));
    CHECK(s.reward[1].mean == doctest::Approx(14.5));
    CHECK(s.reward[1].se == doctest::Approx(0.5));
    CHECK_FALSE(s.present[2]);
    CHECK(format_summary(s).find("reach") != std::string::npos);
    CHECK_THROWS(score(fresh_dir("missing")));
}

TEST_CASE("zero-episode schedule writes headers only") {
    const auto dir = fresh_dir("empty");
    run(tiny(Method::covers, {}), dir);
    const auto m = slurp(dir / "seed_3" / "metrics.csv");
    CHECK(m == "episode,phase,group,orbit,policy,reward,success,length,policies\n");
    plot(std::vector<fs::path>{dir}, dir);
    CHECK(fs::exists(dir / "rewards.svg"));
}

TEST_CASE("runs are reproducible and covers_gt recovers the groups") {
    const auto sched = parse_schedule(R"([{"group":"reach","episodes":4},{"group":"press","episodes":4},
        {"group":"close","episodes":4},{"group":"slide","episodes":4},{"group":"reach","episodes":4},
        {"group":"press","episodes":4},{"group":"close","episodes":4},{"group":"slide","episodes":4}])");
    const auto a = fresh_dir("gt_a"), b = fresh_dir("gt_b");
    auto cfg = tiny(Method::covers_gt, sched);
    run(cfg, a);
    run(cfg, b);
    for (const char* f : {"metrics.csv", "updates.csv"})
        CHECK(slurp(a / "seed_3" / f) == slurp(b / "seed_3" / f));
    const auto rows = read_metrics(a / "seed_3" / "metrics.csv");
    CHECK(rows.size() == 32);
    const auto s = score(a);
    CHECK(s.policies.mean == 4.0);
    CHECK(s.accuracy.mean == 1.0);
    CHECK(s.seeds[0].spawns == 4);
    CHECK(fs::exists(a / "seed_3" / "checkpoints" / "policy_3" / "params.bin"));

    plot(std::vector<fs::path>{a}, a);
    const auto svg = slurp(a / "rewards.svg");
    const std::regex pts("class='curve'[^>]*points='([^']*)'");
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, pts));
    std::istringstream ss(m[1].str());
    int points = 0;
    for (std::string tok; ss >> tok;) ++points;
    CHECK(points == 32);
    // one band per phase, each starting where its phase starts
    const std::regex band("class='band' x='([0-9.]+)' y='[0-9.]+' width='([0-9.]+)'");
    int k = 0;
    double expect_x = 60.0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), band); it != std::sregex_iterator(); ++it, ++k) {
        CHECK(std::stod((*it)[1].str()) == doctest::Approx(expect_x).epsilon(1e-3));
        expect_x += std::stod((*it)[2].str());
    }
    CHECK(k == 8);
    CHECK(fs::exists(a / "assignment_covers_gt_seed_3.svg"));
}
