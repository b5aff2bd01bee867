// Command-line driver: run | sweep | validate over JSON experiment configs.
// Exit codes: 0 success, 1 runtime failure, 2 config or usage error.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "kmft/errors.hpp"
#include "kmft/experiments.hpp"

namespace {

using nlohmann::json;

json load_raw_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw kmft::ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw kmft::ConfigError("config is not valid JSON (" + path + "): " + e.what());
    }
    if (!j.is_object()) throw kmft::ConfigError("config root must be a JSON object: " + path);
    return j;
}

json prepare_config(const std::string& path, const std::vector<std::string>& sets,
                    const std::string& out_dir) {
    json j = load_raw_config(path);
    for (const std::string& s : sets) kmft::apply_config_override(j, s);
    if (!out_dir.empty()) j["output_dir"] = out_dir;
    return j;
}

// Comma-separated and/or repeated tokens; each parsed as JSON when possible
// (numbers, booleans), otherwise kept as a string.
std::vector<json> parse_values(const std::vector<std::string>& args) {
    std::vector<json> values;
    for (const std::string& arg : args) {
        std::size_t start = 0;
        while (start <= arg.size()) {
            const std::size_t comma = arg.find(',', start);
            const std::string tok =
                arg.substr(start, comma == std::string::npos ? comma : comma - start);
            if (!tok.empty()) {
                try {
                    values.push_back(json::parse(tok));
                } catch (const json::exception&) {
                    values.push_back(tok);
                }
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel mean-field theory of trained recurrent and deep networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::string axis;
    std::vector<std::string> value_args;
    int parallel = 1;

    CLI::App* run = app.add_subcommand("run", "execute one experiment config");
    run->add_option("config", config_path, "JSON config file")->required();
    run->add_option("--set", sets, "dotted-path override, e.g. hyper.N=2048");
    run->add_option("--out", out_dir, "output directory (overrides output_dir)");

    CLI::App* sweep = app.add_subcommand("sweep", "run the config once per axis value");
    sweep->add_option("config", config_path, "JSON config file")->required();
    sweep->add_option("--axis", axis, "dotted config key to vary")->required();
    sweep->add_option("--values", value_args, "comma-separated values")->required();
    sweep->add_option("--parallel", parallel, "max concurrent runs")->check(CLI::PositiveNumber);
    sweep->add_option("--set", sets, "dotted-path override applied before the axis");
    sweep->add_option("--out", out_dir, "base output directory");

    CLI::App* validate = app.add_subcommand("validate", "parse, validate and echo the config");
    validate->add_option("config", config_path, "JSON config file")->required();
    validate->add_option("--set", sets, "dotted-path override, e.g. hyper.N=2048");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            const kmft::ExperimentConfig cfg =
                kmft::config_from_json(prepare_config(config_path, sets, out_dir));
            const kmft::RunOutcome outcome = kmft::run_experiment(cfg);
            if (!outcome.ok) {
                std::cerr << "run failed: " << outcome.error << "\n";
                std::cerr << "partial outputs: " << outcome.dir << "\n";
                return 1;
            }
            std::cout << "ok: " << outcome.dir << "\n";
            return 0;
        }
        if (*sweep) {
            const json base = prepare_config(config_path, sets, out_dir);
            const std::vector<json> values = parse_values(value_args);
            const kmft::SweepOutcome outcome = kmft::run_sweep(base, axis, values, parallel);
            for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
                const auto& r = outcome.runs[i];
                if (r.ok) std::cout << "ok: " << r.dir << "\n";
                else std::cerr << "failed: " << r.dir << ": " << r.error << "\n";
            }
            std::cout << "merged: " << outcome.merged_csv << "\n";
            return outcome.all_ok ? 0 : 1;
        }
        if (*validate) {
            const kmft::ExperimentConfig cfg =
                kmft::config_from_json(prepare_config(config_path, sets, out_dir));
            std::cout << kmft::config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
    } catch (const kmft::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
