#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dsmc/harness.hpp"

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot open output file: " + (dir / name).string());
    return os;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive second order discrete sliding mode control toolkit"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    std::string format = "table";
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed_override, "override scenario seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--format", format, "report format")
        ->check(CLI::IsMember({"csv", "table"}))
        ->capture_default_str();

    std::string cfg_path, cfg_a, cfg_b, axis_name;
    auto* run_cmd = app.add_subcommand("run", "run one scenario, write time series + report");
    run_cmd->add_option("config", cfg_path, "scenario config (json)")->required();

    auto* cmp_cmd = app.add_subcommand("compare", "run two scenarios, print improvement table");
    cmp_cmd->add_option("config_a", cfg_a)->required();
    cmp_cmd->add_option("config_b", cfg_b)->required();

    std::vector<double> sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "sweep one axis over a base scenario");
    sweep_cmd->add_option("axis", axis_name, "axis: T | bits | uncertainty")->required();
    sweep_cmd->add_option("config", cfg_path, "base scenario config (json)")->required();
    sweep_cmd->add_option("--values", sweep_values, "axis values")->required();

    auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in oracle suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            auto cfg = dsmc::ScenarioConfig::from_json_file(cfg_path);
            if (seed_set) cfg.seed = seed_override;
            auto result = dsmc::run_scenario(cfg);
            auto series_os = open_out(out_dir, cfg.name + "_series.csv");
            dsmc::write_series_csv(series_os, cfg, result.series);
            auto mu_os = open_out(out_dir, cfg.name + "_mu.csv");
            dsmc::write_mu_csv(mu_os, result.series);
            dsmc::write_report(std::cout, result.report, format == "csv");
            return result.report.diverged ? 1 : 0;
        }
        if (*cmp_cmd) {
            auto a = dsmc::ScenarioConfig::from_json_file(cfg_a);
            auto b = dsmc::ScenarioConfig::from_json_file(cfg_b);
            auto table = dsmc::compare(a, b);
            dsmc::write_improvement_table(std::cout, table);
            return 0;
        }
        if (*sweep_cmd) {
            auto cfg = dsmc::ScenarioConfig::from_json_file(cfg_path);
            dsmc::SweepAxis axis;
            if (axis_name == "T")
                axis = dsmc::SweepAxis::Period;
            else if (axis_name == "bits")
                axis = dsmc::SweepAxis::Bits;
            else if (axis_name == "uncertainty")
                axis = dsmc::SweepAxis::Uncertainty;
            else
                throw dsmc::ConfigError("unknown sweep axis: " + axis_name);
            auto result = dsmc::sweep(axis, sweep_values, cfg);
            auto os = open_out(out_dir, cfg.name + "_sweep.csv");
            dsmc::write_sweep_csv(os, result);
            dsmc::write_sweep_csv(std::cout, result);
            return 0;
        }
        if (*selftest_cmd) {
            return dsmc::selftest(std::cout) == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
