#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmft/kernelspace.hpp"
#include "kmft/linear_mft.hpp"
#include "kmft/nngp.hpp"
#include "kmft/nonlinear_mft.hpp"
#include "kmft/sgld.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Experiment orchestration: a single JSON config (every field defaulted,
// unknown keys rejected) drives reproducible runs that emit manifest.json,
// kernels/*.csv, metrics.csv and per-experiment plot tables.

struct TaskConfig {
    std::string name = "sinusoid";  // sinusoid | endpoint_regression |
                                    // endpoint_classification | teacher_rotation
    int T = 5;
    int P = 2;           // endpoint_classification
    int D = 2;           // endpoint_classification
    double y_final = 1.0;
    double x_scale = 1.0;
    double dphi = 0.7;  // non-degenerate: no teacher label or adjacent product vanishes
    double phi0 = 0.0;
    int supervised_count = -1;  // teacher_rotation: -1 keeps all output times
};

struct ExperimentConfig {
    std::string experiment = "nngp_check";
    TaskConfig task;
    HyperParams hyper;  // hyper.D is always overwritten from the task
    ArchMask arch = ArchMask::RNN;
    Activation act = Activation::Linear;
    SolverOptions solver;
    SamplerConfig sampler;
    SaddleOptions saddle;
    SGLDConfig sgld;
    bool sgld_enabled = false;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    std::vector<double> lambda_values = {0, 2, 4, 6, 7, 7.5, 8, 8.5, 9, 10, 12, 14, 16};
    std::vector<double> scales = {0.1, 0.05, 0.025, 0.0125};
};

// Fully defaulted config as JSON (single source of truth for validation).
nlohmann::json experiment_config_defaults();

// Serialize a resolved config.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Validate (unknown keys rejected, enums checked) and parse; missing keys
// take defaults.  Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_experiment_config(const std::string& path);

// Apply a dotted-path override "hyper.N=2048" onto raw JSON.
void apply_config_override(nlohmann::json& j, const std::string& assignment);

Task build_task(const ExperimentConfig& cfg);

// Evenly spread k supervised output times across 2..T (always includes T).
std::vector<int> spread_supervised(int T, int k);

struct RunOutcome {
    bool ok = false;
    std::string error;
    std::string dir;
};

// Executes the configured experiment; on failure writes error.json and
// preserves partial results.  Never throws for run failures (only for
// config-level misuse before any work starts).
RunOutcome run_experiment(const ExperimentConfig& cfg);

struct SweepOutcome {
    bool all_ok = false;
    std::string merged_csv;
    std::vector<RunOutcome> runs;
};

// One run per value of the dotted config key `axis`, at most `parallel`
// concurrent; merged metrics at <output_dir>/sweep.csv.
SweepOutcome run_sweep(const nlohmann::json& base_config, const std::string& axis,
                       const std::vector<nlohmann::json>& values, int parallel);

}  // namespace kmft
