// Command-line front end for the experiment harness.
#include "sicbench/config.hpp"
#include "sicbench/pipeline.hpp"
#include "sicbench/scenarios.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace sicbench;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("", "cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Comma-separated list; each token is JSON if it parses, otherwise a string.
std::vector<nlohmann::json> parse_values(const std::string& list) {
    std::vector<nlohmann::json> out;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto b = tok.find_first_not_of(" \t"), e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        tok = tok.substr(b, e - b + 1);
        auto j = nlohmann::json::parse(tok, nullptr, false);
        out.push_back(j.is_discarded() ? nlohmann::json(tok) : j);
    }
    return out;
}

void print_summary(const ExperimentReport& rep) {
    summarize(rep).write(std::cout);
    std::cout << "wall_seconds = " << format_double(rep.wall_seconds) << "\n";
}

void show_scenario(const std::string& name) {
    const auto spec = scenario_spec(name);
    std::cout << "scenario " << spec.name << "\n";
    for (std::size_t j = 0; j < spec.antennas.size(); ++j) {
        const auto& a = spec.antennas[j];
        std::cout << "antenna " << j + 1 << "\n  delays_ns:";
        for (double d : a.delays_ns) std::cout << ' ' << format_double(d);
        std::cout << "\n  gains_db: ";
        for (double g : a.gains_db) std::cout << ' ' << format_double(g);
        std::cout << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multipath self-interference cancellation simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, param, values;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "run one closed-loop experiment");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", out_dir, "output directory (overrides output_dir)");

    auto* sweep = app.add_subcommand("sweep", "run one experiment per parameter value");
    sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* param_opt = sweep->add_option("--param", param, "dotted parameter name, e.g. si.baud_gbaud");
    auto* values_opt = sweep->add_option("--values", values, "comma-separated values (JSON tokens or strings)");
    param_opt->needs(values_opt);
    values_opt->needs(param_opt);
    sweep->add_option("--out", out_dir, "output directory (overrides output_dir)");
    std::optional<int> workers;
    sweep->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);

    auto* scen = app.add_subcommand("scenarios", "list or show the named SI scenarios");
    scen->require_subcommand(1);
    scen->add_subcommand("list", "list scenario names");
    auto* show = scen->add_subcommand("show", "print one scenario's taps");
    std::string show_name;
    bool show_json = false;
    show->add_option("name", show_name)->required();
    show->add_flag("--json", show_json, "print the scenario as a config fixture");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*scen) {
            if (scen->got_subcommand("list")) {
                for (const auto& s : scenario_library()) std::cout << s.name << '\n';
            } else if (show_json) {
                ExperimentConfig cfg;
                cfg.scenario = scenario_spec(show_name);
                std::cout << serialize_config(cfg)["scenario"].dump(2) << '\n';
            } else {
                show_scenario(show_name);
            }
            return 0;
        }

        const std::string text = read_file(config_path);
        ExperimentConfig cfg = parse_config_text(text);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (*run) {
            // The echo stays byte-identical to the file; overrides show in the summary.
            const auto rep = run_single(cfg, text);
            if (!cfg.output_dir.empty()) write_run(rep, cfg.output_dir);
            print_summary(rep);
            return 0;
        }

        // --param/--values replace the config's sweep block; without them it is used as is.
        if (!param.empty()) cfg.sweep = SweepSpec{param, parse_values(values), cfg.sweep ? cfg.sweep->workers : 1};
        if (!cfg.sweep) throw ConfigError("sweep", "no sweep block in the config and no --param/--values");
        if (workers) cfg.sweep->workers = *workers;
        validate_config(cfg);
        const auto points = run_sweep(cfg);
        if (!cfg.output_dir.empty()) write_sweep(points, cfg.output_dir);
        int failed = 0;
        for (const auto& p : points) {
            std::cout << cfg.sweep->param << " = " << p.value.dump() << ": ";
            if (p.report) {
                std::cout << "depth_db = " << (p.report->sic ? format_double(p.report->sic->depth_db) : "skipped")
                          << ", order = " << p.report->order << '\n';
            } else {
                std::cout << "failed (" << p.error << ")\n";
                ++failed;
            }
        }
        return failed == 0 ? 0 : 3;
    } catch (const StageError& e) {
        // what() already leads with the stage name.
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
