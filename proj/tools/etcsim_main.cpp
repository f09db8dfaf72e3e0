// Command-line front end: scenario runs, built-in example regimes,
// dwell-time and small-gain checking, and parameter sweeps.
//
// Exit codes: 0 success, 1 runtime error, 2 configuration error. Failures
// emit one machine-readable JSON line on stderr.

#include "etcsim/analysis.hpp"
#include "etcsim/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace etcsim;

void print_error_line(const std::string& kind, const std::string& message, int line = 0,
                      const std::string& field = "") {
    nlohmann::json j;
    j["error"] = kind;
    j["message"] = message;
    if (line > 0) j["line"] = line;
    if (!field.empty()) j["field"] = field;
    std::cerr << j.dump() << "\n";
}

struct CommonFlags {
    double t_end = -1.0;
    double step = -1.0;
    std::string out_dir;
    long seed = -1;
    std::string format = "json";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--t-end", flags.t_end, "Simulation horizon in seconds");
    cmd->add_option("--step", flags.step, "Integrator max step in seconds");
    cmd->add_option("--out-dir", flags.out_dir, "Output directory");
    cmd->add_option("--seed", flags.seed, "Seed for randomized checks");
    cmd->add_option("--format", flags.format, "Report format: csv | json")
        ->check(CLI::IsMember({"csv", "json"}));
}

void apply_overrides(ScenarioConfig& cfg, const CommonFlags& flags) {
    if (flags.t_end > 0.0) cfg.solver.t_end = flags.t_end;
    if (flags.step > 0.0) {
        cfg.solver.max_step = flags.step;
        cfg.solver.record_stride = std::min(cfg.solver.record_stride, flags.step);
    }
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (flags.seed >= 0) cfg.seed = static_cast<unsigned>(flags.seed);
}

int do_run(ScenarioConfig cfg, const CommonFlags& flags, const std::string& default_dir) {
    apply_overrides(cfg, flags);
    if (cfg.out_dir.empty()) cfg.out_dir = default_dir;
    auto out = run_scenario(cfg);
    std::cout << to_json(out.summary) << "\n";
    std::fprintf(stderr, "wrote %s/{trajectory.csv,events.csv,summary.json,dwell.json,storage.csv,arc.json}\n",
                 cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"etcsim: asynchronous event-triggered control simulation and analysis"};
    app.require_subcommand(1);

    CommonFlags flags;

    std::string config_path, example_name, arc_path;
    std::string sweep_param, sweep_values;
    bool serial = false;

    auto* cmd_run = app.add_subcommand("run", "Simulate a scenario config file");
    cmd_run->add_option("config", config_path, "Scenario config (INI-style or JSON)")->required();
    add_common(cmd_run, flags);

    auto* cmd_example = app.add_subcommand("example", "Run a built-in regime: fig2 | fig34 | fig56");
    cmd_example->add_option("name", example_name, "Regime name")->required();
    add_common(cmd_example, flags);

    auto* cmd_dwell = app.add_subcommand("check-dwell", "Dwell-time report for a recorded arc");
    cmd_dwell->add_option("arc", arc_path, "arc.json produced by run/example")->required();
    add_common(cmd_dwell, flags);

    auto* cmd_gain = app.add_subcommand("check-small-gain",
                                        "Grid check of the small-gain conditions");
    cmd_gain->add_option("config", config_path, "Scenario config with a [small_gain] section")
        ->required();
    cmd_gain->add_flag("--serial", serial, "Use the serial reference path");
    add_common(cmd_gain, flags);

    auto* cmd_sweep = app.add_subcommand("sweep", "Run a scenario once per parameter value");
    cmd_sweep->add_option("config", config_path, "Scenario config")->required();
    cmd_sweep->add_option("--param", sweep_param, "k_p | tau_p | tau_c | t_end | max_step")
        ->required();
    cmd_sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
    add_common(cmd_sweep, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error_line("config", e.what());
        return 2;
    }

    try {
        if (cmd_run->parsed()) {
            auto cfg = scenario_from_config(parse_config_file(config_path));
            return do_run(std::move(cfg), flags, "out/" + std::filesystem::path(config_path).stem().string());
        }

        if (cmd_example->parsed()) {
            return do_run(builtin_example(example_name), flags, "out/" + example_name);
        }

        if (cmd_dwell->parsed()) {
            auto loaded = arc_from_json(read_file(arc_path));
            auto report = verify_dwell(loaded.arc, loaded.dwell);
            const std::string body =
                flags.format == "csv" ? violations_csv(report) : to_json(report);
            if (!flags.out_dir.empty()) {
                std::filesystem::create_directories(flags.out_dir);
                write_file(flags.out_dir + "/dwell." + flags.format, body);
            }
            std::cout << body << "\n";
            std::fprintf(stderr, "dwell: %zu violation(s), plant jumps %d, controller jumps %d\n",
                         report.violations.size(), report.plant_jumps, report.controller_jumps);
            return 0;
        }

        if (cmd_gain->parsed()) {
            auto map = parse_config_file(config_path);
            auto scenario = scenario_from_config(map);
            if (flags.seed >= 0) scenario.seed = static_cast<unsigned>(flags.seed);
            auto [problem, grid] = small_gain_from_config(map, scenario);
            auto report =
                check_small_gain(problem, grid, serial ? RunPolicy::Serial : RunPolicy::Parallel);
            const std::string body =
                flags.format == "csv" ? violations_csv(report) : to_json(report);
            if (!flags.out_dir.empty()) {
                std::filesystem::create_directories(flags.out_dir);
                write_file(flags.out_dir + "/small_gain." + flags.format, body);
            }
            std::cout << body << "\n";
            std::fprintf(stderr, "small-gain: %zu violation(s) over %ld grid points\n",
                         report.violations.size(), report.points_checked);
            return 0;
        }

        if (cmd_sweep->parsed()) {
            auto cfg = scenario_from_config(parse_config_file(config_path));
            apply_overrides(cfg, flags);
            if (cfg.out_dir.empty())
                cfg.out_dir = "out/sweep-" + std::filesystem::path(config_path).stem().string();
            ConfigMap values_map;
            values_map.set("values", sweep_values);
            auto results = sweep_scenario(cfg, sweep_param, values_map.get_doubles("values"));
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : results)
                j.push_back({{"value", r.value},
                             {"dir", r.dir},
                             {"summary", nlohmann::json::parse(to_json(r.summary))}});
            std::cout << j.dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        print_error_line("config", e.what(), e.line(), e.field());
        return 2;
    } catch (const std::exception& e) {
        print_error_line("runtime", e.what());
        return 1;
    }
    return 0;
}
