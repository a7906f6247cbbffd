#include "covers/harness.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace covers;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        const auto v = std::stoull(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("bad seed '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("--seeds: empty list");
    return out;
}

void apply_workers() {
    if (const char* w = std::getenv("COVERS_WORKERS")) {
        const int n = std::atoi(w);
        if (n < 1) throw std::invalid_argument("COVERS_WORKERS must be a positive integer");
        omp_set_num_threads(n);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual RL with group symmetries: run, score and plot experiments"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "train one method over a task schedule");
    std::string config_path, out_dir, seeds_arg, method_arg, schedule_path;
    int episodes_override = -1;
    bool quiet = false;
    run_cmd->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    run_cmd->add_option("--seeds", seeds_arg, "comma separated seeds, overrides the config");
    run_cmd->add_option("--method", method_arg, "covers, covers_gt, covers_cnn, equi or cnn; overrides the config");
    run_cmd->add_option("--schedule", schedule_path, "schedule JSON, overrides the config")->check(CLI::ExistingFile);
    run_cmd->add_option("--episodes-per-phase", episodes_override, "default schedule with this many episodes per phase");
    run_cmd->add_flag("--quiet", quiet, "no progress output");

    auto* score_cmd = app.add_subcommand("score", "summary table of a finished run");
    std::string score_dir;
    bool as_json = false;
    score_cmd->add_option("dir", score_dir, "run directory")->required();
    score_cmd->add_flag("--json", as_json, "print JSON instead of a table");

    auto* plot_cmd = app.add_subcommand("plot", "SVG reward curves and assignment traces");
    std::vector<std::string> plot_dirs;
    std::string plot_out;
    plot_cmd->add_option("dirs", plot_dirs, "run directories (methods are overlaid)")->required();
    plot_cmd->add_option("--out", plot_out, "output directory (default: the first run directory)");

    auto* render_cmd = app.add_subcommand("render", "write the initial frame of a task as PGM");
    std::string group_arg = "reach", orbit_arg = "e", pgm_path;
    std::uint64_t render_seed = 0;
    int scale = 8;
    render_cmd->add_option("--group", group_arg, "reach, press, close or slide");
    render_cmd->add_option("--orbit", orbit_arg, "e, m_x, m_y or r180");
    render_cmd->add_option("--seed", render_seed, "reset seed");
    render_cmd->add_option("--scale", scale, "pixels per cell")->check(CLI::PositiveNumber);
    render_cmd->add_option("--out", pgm_path, "output .pgm")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        apply_workers();
        if (*run_cmd) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
            if (!method_arg.empty()) cfg.method = parse_method(method_arg);
            if (!seeds_arg.empty()) cfg.seeds = parse_seeds(seeds_arg);
            if (episodes_override >= 0) cfg.schedule = default_schedule(episodes_override);
            if (!schedule_path.empty()) cfg.schedule = load_schedule(schedule_path);
            cfg.validate();
            ProgressFn progress;
            if (!quiet)
                progress = [](const Progress& p) {
                    if (!p.interval || !p.interval->update) return;
                    double succ = 0.0;
                    for (const auto& e : p.interval->episodes) succ += e.success ? 1.0 : 0.0;
                    std::fprintf(stderr, "seed %llu  episode %d/%d  policies %d  success %.2f\n",
                                 static_cast<unsigned long long>(p.seed), p.episodes_done, p.episodes_total,
                                 p.policies, succ / std::max<std::size_t>(1, p.interval->episodes.size()));
                };
            run(cfg, out_dir, progress);
            std::cout << format_summary(score(out_dir));
        } else if (*score_cmd) {
            const auto s = score(score_dir);
            std::cout << (as_json ? summary_to_json(s) + "\n" : format_summary(s));
        } else if (*plot_cmd) {
            std::vector<fs::path> dirs(plot_dirs.begin(), plot_dirs.end());
            const fs::path out = plot_out.empty() ? dirs.front() : fs::path(plot_out);
            plot(dirs, out);
            std::cout << "wrote " << (out / "rewards.svg").string() << "\n";
        } else if (*render_cmd) {
            const auto d2 = GroupSpec::d2();
            GroupElement g{-1};
            for (auto e : d2.elements())
                if (orbit_arg == orbit_name(e)) g = e;
            if (g.index < 0) throw std::invalid_argument("unknown orbit element '" + orbit_arg + "'");
            Env env({parse_group(group_arg), g});
            write_pgm(env.reset(render_seed), pgm_path, scale);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
