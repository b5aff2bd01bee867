#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "kmft/experiments.hpp"

using namespace kmft;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(KMFT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("defaults round-trip through parse and serialize") {
    const json defaults = experiment_config_defaults();
    const ExperimentConfig cfg = config_from_json(defaults);
    CHECK(config_to_json(cfg) == defaults);
    const ExperimentConfig empty_cfg = config_from_json(json::object());
    CHECK(config_to_json(empty_cfg) == defaults);
}

TEST_CASE("unknown keys are rejected at any depth") {
    CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"task", {{"bogus", 1}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"sgld", {{"steps", 10}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"experiment", "not_an_experiment"}}), ConfigError);
}

TEST_CASE("dotted overrides reach nested keys") {
    json j = json::object();
    apply_config_override(j, "hyper.N=2048");
    apply_config_override(j, "task.T=6");
    apply_config_override(j, "arch=dnn");
    CHECK(j["hyper"]["N"] == 2048);
    CHECK(j["task"]["T"] == 6);
    CHECK(j["arch"] == "dnn");
    CHECK_THROWS_AS(apply_config_override(j, "no_equals_sign"), ConfigError);
    const ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.hyper.N == 2048);
    CHECK(cfg.task.T == 6);
    CHECK(cfg.arch == ArchMask::DNN);
}

TEST_CASE("supervised spreading always covers the final time") {
    for (int T : {4, 5, 7}) {
        for (int k = 1; k <= T - 1; ++k) {
            const std::vector<int> s = spread_supervised(T, k);
            REQUIRE(static_cast<int>(s.size()) == k);
            CHECK(s.back() == T);
            for (std::size_t i = 0; i < s.size(); ++i) {
                CHECK(s[i] >= 2);
                CHECK(s[i] <= T);
                if (i) CHECK(s[i] > s[i - 1]);
            }
        }
    }
    CHECK(spread_supervised(5, 4) == std::vector<int>{2, 3, 4, 5});
}

TEST_CASE("a run emits manifest, metrics and kernels") {
    const fs::path dir = fresh_dir("kmft_unit_run");
    json j;
    j["experiment"] = "nngp_check";
    j["task"] = {{"T", 4}};
    j["output_dir"] = dir.string();
    const RunOutcome out = run_experiment(config_from_json(j));
    CHECK(out.ok);
    CHECK(out.error.empty());
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "metrics.csv"));
    bool any_kernel = false;
    for (const auto& e : fs::directory_iterator(dir / "kernels"))
        any_kernel |= e.path().extension() == ".csv";
    CHECK(any_kernel);
    const json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.contains("config"));
    CHECK(manifest.contains("wall_seconds"));
    CHECK(manifest["ok"] == true);
    // reproducibility: identical config gives byte-identical metrics
    const std::string first = slurp(dir / "metrics.csv");
    const fs::path dir2 = fresh_dir("kmft_unit_run_repeat");
    json j2 = j;
    j2["output_dir"] = dir2.string();
    const RunOutcome out2 = run_experiment(config_from_json(j2));
    REQUIRE(out2.ok);
    CHECK(slurp(dir2 / "metrics.csv") == first);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("a failing run writes a structured error report") {
    const fs::path dir = fresh_dir("kmft_unit_fail");
    json j;
    j["experiment"] = "nngp_check";
    j["task"] = {{"T", 6}};
    j["hyper"] = {{"w", 1e8}};  // prior diverges: runtime failure, not config error
    j["output_dir"] = dir.string();
    const RunOutcome out = run_experiment(config_from_json(j));
    CHECK(!out.ok);
    CHECK(!out.error.empty());
    CHECK(fs::exists(dir / "error.json"));
    const json err = json::parse(slurp(dir / "error.json"));
    CHECK(err.contains("error"));
    fs::remove_all(dir);
}

TEST_CASE("sweeps merge per-run metrics and survive failures") {
    const fs::path dir = fresh_dir("kmft_unit_sweep");
    json base;
    base["experiment"] = "nngp_check";
    base["task"] = {{"T", 4}};
    base["output_dir"] = dir.string();
    const SweepOutcome ok_sweep =
        run_sweep(base, "hyper.w", {json(0.5), json(1.0)}, 2);
    CHECK(ok_sweep.all_ok);
    REQUIRE(ok_sweep.runs.size() == 2);
    CHECK(fs::exists(ok_sweep.merged_csv));
    // one diverging value: that run fails, the other still lands
    const SweepOutcome mixed =
        run_sweep(base, "hyper.w", {json(1.0), json(1e8)}, 1);
    CHECK(!mixed.all_ok);
    REQUIRE(mixed.runs.size() == 2);
    CHECK(mixed.runs[0].ok);
    CHECK(!mixed.runs[1].ok);
    CHECK_THROWS_AS(run_sweep(base, "hyper.w", {}, 1), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("cli exit codes: 0 ok, 1 run failure, 2 config error") {
    const fs::path dir = fresh_dir("kmft_unit_cli");
    const fs::path good = dir / "good.json";
    const fs::path bad_key = dir / "bad_key.json";
    const fs::path divergent = dir / "divergent.json";
    std::ofstream(good) << R"({"experiment": "nngp_check", "task": {"T": 4}})";
    std::ofstream(bad_key) << R"({"experiment": "nngp_check", "wobble": 3})";
    std::ofstream(divergent)
        << R"({"experiment": "nngp_check", "task": {"T": 6}, "hyper": {"w": 1e8}})";
    CHECK(run_cli("validate " + good.string()) == 0);
    CHECK(run_cli("validate " + bad_key.string()) == 2);
    CHECK(run_cli("run " + good.string() + " --out " + (dir / "out").string()) == 0);
    CHECK(run_cli("run " + divergent.string() + " --out " + (dir / "out2").string()) == 1);
    CHECK(run_cli("frobnicate") == 2);
    fs::remove_all(dir);
}

TEST_CASE("environment seed overrides the manifest master seed") {
    const fs::path dir = fresh_dir("kmft_unit_env_seed");
    const fs::path cfg = dir / "cfg.json";
    std::ofstream(cfg) << R"({"experiment": "nngp_check", "task": {"T": 4}})";
    const std::string cmd = "KMFT_SEED=777 " + std::string(KMFT_CLI_PATH) + " run " +
                            cfg.string() + " --out " + (dir / "out").string() +
                            " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest["config"]["master_seed"] == 777);
    fs::remove_all(dir);
}
