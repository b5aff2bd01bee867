#include "kmft/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "kmft/errors.hpp"
#include "kmft/inference.hpp"
#include "kmft/landau.hpp"
#include "kmft/perturbation.hpp"
#include "kmft/rng.hpp"

namespace kmft {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw Error("cannot open for writing: " + tmp);
        os << text;
        if (!os.good()) throw Error("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

// Flat key/value metrics table; one row per scalar result.
struct Metrics {
    std::vector<std::pair<std::string, double>> rows;

    void add(const std::string& key, double value) { rows.emplace_back(key, value); }

    void write(const std::string& path) const {
        std::ostringstream os;
        os << "key,value\n";
        for (const auto& [k, v] : rows) os << k << "," << fmt_double(v) << "\n";
        write_text_atomic(path, os.str());
    }
};

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "fig2_sinusoid", "fig3_endpoint",      "fig4_sequence",
        "landau_sweep",  "perturbation_check", "nngp_check"};
    return names;
}

std::string default_task_for(const std::string& experiment) {
    if (experiment == "fig3_endpoint") return "endpoint_classification";
    if (experiment == "fig4_sequence" || experiment == "perturbation_check")
        return "teacher_rotation";
    if (experiment == "landau_sweep") return "endpoint_regression";
    return "sinusoid";
}

// Every key the user writes must exist in the defaults; objects recurse,
// arrays and scalars are leaves.
void validate_keys(const json& j, const json& ref, const std::string& prefix) {
    if (!j.is_object())
        throw ConfigError("expected an object at '" + (prefix.empty() ? "<root>" : prefix) + "'");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!ref.contains(it.key())) throw ConfigError("unknown config key: " + path);
        if (it.value().is_null()) throw ConfigError("null is not a valid value at: " + path);
        if (ref.at(it.key()).is_object()) validate_keys(it.value(), ref.at(it.key()), path);
    }
}

void set_dotted(json& j, const std::string& dotted, const json& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("empty segment in config path: " + dotted);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key)) (*node)[key] = json::object();
        node = &(*node)[key];
        if (!node->is_object()) throw ConfigError("config path crosses a non-object: " + dotted);
        start = dot + 1;
    }
}

std::string sanitize_label(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_')
            c = '_';
    return out;
}

std::string value_label(const json& v) {
    if (v.is_string()) return sanitize_label(v.get<std::string>());
    return sanitize_label(v.dump());
}

double mean_squared_gap(const Vector& a, const Vector& b) {
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Per-experiment runners.  Each writes its plot tables under `dir` and
// appends scalar results to `metrics`.

HyperParams resolved_hyper(const ExperimentConfig& cfg, const Task& task) {
    HyperParams hyper = cfg.hyper;
    hyper.D = task.D;
    hyper.validate();
    return hyper;
}

SolveReport solve_linear(const Task& task, const HyperParams& hyper, ArchMask arch,
                         const SolverOptions& opts) {
    const LinearObjective obj = make_linear_objective(task, hyper, arch);
    const NngpResult prior = nngp_kernel(task, hyper, Activation::Linear, arch);
    const Kernel init = symmetry_breaking_init(prior.H0, opts.sym_break_eps);
    return solve_map(obj, init, opts);
}

void run_nngp_check(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    const Task task = build_task(cfg);
    const HyperParams hyper = resolved_hyper(cfg, task);
    const NngpResult res = nngp_kernel(task, hyper, cfg.act, cfg.arch);
    write_kernel_csv((dir / "kernels" / "H0.csv").string(), res.H0, "prior hidden kernel");
    write_kernel_csv((dir / "kernels" / "C0.csv").string(), res.C0, "prior feature kernel");
    metrics.add("nngp_residual", res.residual);
    metrics.add("nngp_iterations", res.iterations);
    metrics.add("min_eig_H0", min_eigenvalue(res.H0.data));
    metrics.add("max_abs_H0", res.H0.max_abs());
}

void run_landau_sweep(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    if (cfg.lambda_values.empty()) throw ConfigError("lambda_values must be non-empty");
    const std::vector<ArchMask> archs = {ArchMask::RNN, ArchMask::DNN};
    const std::vector<SweepRow> rows =
        lambda_sweep(cfg.lambda_values, cfg.hyper.u, cfg.hyper.w, cfg.hyper.v, archs, cfg.solver);
    write_sweep_csv((dir / "landau.csv").string(), rows);
    metrics.add("critical_lambda", critical_lambda());
    metrics.add("n_rows", static_cast<double>(rows.size()));
    double max_gap = 0.0;
    for (const auto& r : rows) max_gap = std::max(max_gap, std::abs(r.d2_solver - r.d2_theory));
    metrics.add("max_d2_gap", max_gap);
}

void run_perturbation_check(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    if (cfg.scales.empty()) throw ConfigError("scales must be non-empty");
    const Task task = build_task(cfg);
    const HyperParams hyper = resolved_hyper(cfg, task);
    std::vector<ExpansionRow> all;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        const std::vector<ExpansionRow> rows =
            expansion_error(task, hyper, arch, cfg.scales, cfg.solver);
        double ratio_min = std::numeric_limits<double>::infinity();
        double ratio_max = 0.0;
        for (const auto& r : rows) {
            if (r.ratio <= 0.0) continue;
            ratio_min = std::min(ratio_min, r.ratio);
            ratio_max = std::max(ratio_max, r.ratio);
        }
        metrics.add("ratio_min_" + to_string(arch), ratio_min);
        metrics.add("ratio_max_" + to_string(arch), ratio_max);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    write_expansion_csv((dir / "expansion.csv").string(), all);
}

// Shared SGLD block: per-seed training runs compared against a theory kernel
// via CKA on the hidden-state kernel.
void run_sgld_comparison(const ExperimentConfig& cfg, const fs::path& dir, const Task& task,
                         const HyperParams& hyper, const Kernel& H_theory, const Kernel& C_theory,
                         Metrics& metrics) {
    if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty when sgld.enabled");
    std::vector<double> ckas;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        SGLDConfig run_cfg = cfg.sgld;
        run_cfg.seed = mix_seed(cfg.master_seed, cfg.seeds[i]);
        const TrainResult tr =
            train_and_measure(task, hyper, cfg.act, cfg.arch, run_cfg, nullptr, nullptr);
        const std::string tag = "seed" + std::to_string(cfg.seeds[i]);
        write_training_log((dir / ("training_log_" + tag + ".csv")).string(), tr.log);
        write_kernel_csv((dir / "kernels" / ("C_exp_" + tag + ".csv")).string(), tr.C_exp,
                         "sgld feature kernel");
        write_kernel_csv((dir / "kernels" / ("H_exp_" + tag + ".csv")).string(), tr.H_exp,
                         "sgld hidden kernel");
        const double score = cka(tr.C_exp, C_theory);
        ckas.push_back(score);
        metrics.add("cka_C_" + tag, score);
        metrics.add("cka_H_" + tag, cka(tr.H_exp, H_theory));
        metrics.add("sgld_loss_mean_" + tag, tr.loss_mean);
        metrics.add("sgld_stationary_" + tag, tr.stationary ? 1.0 : 0.0);
    }
    std::sort(ckas.begin(), ckas.end());
    metrics.add("cka_C_median", ckas[ckas.size() / 2]);
}

void run_fig3_endpoint(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    const Task task = build_task(cfg);
    const HyperParams hyper = resolved_hyper(cfg, task);

    Kernel H_star;
    Kernel C_star;
    if (cfg.act == Activation::Linear) {
        const SolveReport report = solve_linear(task, hyper, cfg.arch, cfg.solver);
        H_star = report.H_star;
        C_star = report.H_star;
        write_solve_report((dir / "solve_report.json").string(), report, "kernels/H_star.csv");
        metrics.add("objective", report.objective_value);
        metrics.add("closed_form_residual", report.closed_form_residual);
        metrics.add("solver_iterations", report.iterations);
    } else {
        const NonlinearObjective obj = make_nonlinear_objective(task, hyper, cfg.arch, cfg.act);
        SamplerConfig sampler = cfg.sampler;
        sampler.seed = mix_seed(cfg.master_seed, sampler.seed);
        const SaddleState state =
            solve_saddle(obj, init_saddle(obj, cfg.solver.sym_break_eps), sampler, cfg.saddle);
        save_saddle_checkpoint((dir / "kernels" / "saddle").string(), state, sampler.seed);
        H_star = state.H_eql;
        C_star = state.C;
        metrics.add("saddle_residual", state.residual);
        metrics.add("saddle_iterations", state.iteration);
    }
    write_kernel_csv((dir / "kernels" / "H_star.csv").string(), H_star, "trained hidden kernel");

    const PredictorResult pred = sequence_predictor(H_star, task, hyper);
    write_predictor_csv((dir / "predictor.csv").string(), task, pred);
    metrics.add("predictor_loss", pred.loss);

    const Vector y_end = task.y.row(task.grid.T - 2).transpose();
    const Vector f_end = endpoint_predictor(H_star, y_end, hyper);
    metrics.add("endpoint_mse", mean_squared_gap(f_end, y_end));

    if (cfg.sgld_enabled) run_sgld_comparison(cfg, dir, task, hyper, H_star, C_star, metrics);
}

void run_fig4_sequence(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    if (cfg.act != Activation::Linear)
        throw ConfigError("fig4_sequence compares linear-activation kernels; set act=linear");
    const int T = cfg.task.T;
    if (T < 3) throw ConfigError("fig4_sequence needs T >= 3");

    std::ostringstream os;
    os << "supervised_count,arch,loss,residual\n";
    std::vector<double> rnn_loss(static_cast<std::size_t>(T)), dnn_loss(static_cast<std::size_t>(T));
    for (int k = 1; k <= T - 1; ++k) {
        const Task task = teacher_rotation_task(T, cfg.task.dphi, cfg.task.phi0,
                                                spread_supervised(T, k));
        const HyperParams hyper = resolved_hyper(cfg, task);
        for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
            const SolveReport report = solve_linear(task, hyper, arch, cfg.solver);
            const PredictorResult pred = sequence_predictor(report.H_star, task, hyper);
            os << k << "," << to_string(arch) << "," << fmt_double(pred.loss) << ","
               << fmt_double(report.closed_form_residual) << "\n";
            metrics.add("loss_" + to_string(arch) + "_k" + std::to_string(k), pred.loss);
            (arch == ArchMask::RNN ? rnn_loss : dnn_loss)[static_cast<std::size_t>(k)] = pred.loss;
        }
    }
    write_text_atomic((dir / "fig4.csv").string(), os.str());

    double min_margin = std::numeric_limits<double>::infinity();
    for (int k = 2; k <= T - 1; ++k)
        min_margin = std::min(min_margin, dnn_loss[static_cast<std::size_t>(k)] -
                                              rnn_loss[static_cast<std::size_t>(k)]);
    metrics.add("min_rnn_margin", min_margin);
}

void run_fig2_sinusoid(const ExperimentConfig& cfg, const fs::path& dir, Metrics& metrics) {
    const Task task = build_task(cfg);
    const HyperParams hyper = resolved_hyper(cfg, task);

    const NonlinearObjective obj = make_nonlinear_objective(task, hyper, cfg.arch, cfg.act);
    SamplerConfig sampler = cfg.sampler;
    sampler.seed = mix_seed(cfg.master_seed, sampler.seed);
    const SaddleState state =
        solve_saddle(obj, init_saddle(obj, cfg.solver.sym_break_eps), sampler, cfg.saddle);
    save_saddle_checkpoint((dir / "kernels" / "saddle").string(), state, sampler.seed);
    write_kernel_csv((dir / "kernels" / "H_eql.csv").string(), state.H_eql,
                     "trained hidden kernel");
    metrics.add("saddle_residual", state.residual);
    metrics.add("saddle_iterations", state.iteration);

    double offdiag = 0.0;
    const int n = state.C.grid.n_times();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j)
            offdiag = std::max(offdiag,
                               state.C.data.block(i * task.P, j * task.P, task.P, task.P)
                                   .cwiseAbs()
                                   .maxCoeff());
    metrics.add("offdiag_max", offdiag);
    if (task.P == 1) {
        const Vector ac = autocorrelation(state.C);
        for (int tau = 0; tau < ac.size(); ++tau)
            metrics.add("autocorr_lag" + std::to_string(tau), ac(tau));
    }

    const PredictorResult pred = sequence_predictor(state.H_eql, task, hyper);
    write_predictor_csv((dir / "predictor.csv").string(), task, pred);
    metrics.add("predictor_loss", pred.loss);

    if (cfg.sgld_enabled) run_sgld_comparison(cfg, dir, task, hyper, state.H_eql, state.C, metrics);
}

}  // namespace

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["task"] = {{"name", c.task.name},
                 {"T", c.task.T},
                 {"P", c.task.P},
                 {"D", c.task.D},
                 {"y_final", c.task.y_final},
                 {"x_scale", c.task.x_scale},
                 {"dphi", c.task.dphi},
                 {"phi0", c.task.phi0},
                 {"supervised_count", c.task.supervised_count}};
    j["hyper"] = {{"u", c.hyper.u},
                  {"w", c.hyper.w},
                  {"v", c.hyper.v},
                  {"kappa", c.hyper.kappa},
                  {"N", c.hyper.N}};
    j["arch"] = to_string(c.arch);
    j["act"] = to_string(c.act);
    j["solver"] = {{"gtol", c.solver.gtol},
                   {"max_iter", c.solver.max_iter},
                   {"sym_break_eps", c.solver.sym_break_eps},
                   {"cg_max_iter", c.solver.cg_max_iter},
                   {"verbose", c.solver.verbose}};
    j["sampler"] = {{"method", to_string(c.sampler.method)},
                    {"n_samples", c.sampler.n_samples},
                    {"step", c.sampler.step},
                    {"burn_in", c.sampler.burn_in},
                    {"seed", c.sampler.seed}};
    j["saddle"] = {{"eta", c.saddle.eta},
                   {"tol", c.saddle.tol},
                   {"max_step", c.saddle.max_step},
                   {"max_iter", c.saddle.max_iter},
                   {"stall_window", c.saddle.stall_window},
                   {"verbose", c.saddle.verbose}};
    j["sgld"] = {{"ds", c.sgld.ds},
                 {"n_steps", c.sgld.n_steps},
                 {"burn_in", c.sgld.burn_in},
                 {"thin", c.sgld.thin},
                 {"seed", c.sgld.seed},
                 {"overflow_bound", c.sgld.overflow_bound},
                 {"enabled", c.sgld_enabled}};
    j["seeds"] = c.seeds;
    j["master_seed"] = c.master_seed;
    j["output_dir"] = c.output_dir;
    j["lambda_values"] = c.lambda_values;
    j["scales"] = c.scales;
    return j;
}

json experiment_config_defaults() { return config_to_json(ExperimentConfig{}); }

ExperimentConfig config_from_json(const json& j) {
    const json defaults = experiment_config_defaults();
    validate_keys(j, defaults, "");
    json m = defaults;
    m.merge_patch(j);

    ExperimentConfig c;
    try {
        c.experiment = m.at("experiment").get<std::string>();
        const json& t = m.at("task");
        c.task.name = t.at("name").get<std::string>();
        c.task.T = t.at("T").get<int>();
        c.task.P = t.at("P").get<int>();
        c.task.D = t.at("D").get<int>();
        c.task.y_final = t.at("y_final").get<double>();
        c.task.x_scale = t.at("x_scale").get<double>();
        c.task.dphi = t.at("dphi").get<double>();
        c.task.phi0 = t.at("phi0").get<double>();
        c.task.supervised_count = t.at("supervised_count").get<int>();
        const json& h = m.at("hyper");
        c.hyper.u = h.at("u").get<double>();
        c.hyper.w = h.at("w").get<double>();
        c.hyper.v = h.at("v").get<double>();
        c.hyper.kappa = h.at("kappa").get<double>();
        c.hyper.N = h.at("N").get<long long>();
        c.arch = arch_from_string(m.at("arch").get<std::string>());
        c.act = activation_from_string(m.at("act").get<std::string>());
        const json& so = m.at("solver");
        c.solver.gtol = so.at("gtol").get<double>();
        c.solver.max_iter = so.at("max_iter").get<int>();
        c.solver.sym_break_eps = so.at("sym_break_eps").get<double>();
        c.solver.cg_max_iter = so.at("cg_max_iter").get<int>();
        c.solver.verbose = so.at("verbose").get<bool>();
        const json& sa = m.at("sampler");
        c.sampler.method = sampler_method_from_string(sa.at("method").get<std::string>());
        c.sampler.n_samples = sa.at("n_samples").get<int>();
        c.sampler.step = sa.at("step").get<double>();
        c.sampler.burn_in = sa.at("burn_in").get<int>();
        c.sampler.seed = sa.at("seed").get<std::uint64_t>();
        const json& sd = m.at("saddle");
        c.saddle.eta = sd.at("eta").get<double>();
        c.saddle.tol = sd.at("tol").get<double>();
        c.saddle.max_step = sd.at("max_step").get<double>();
        c.saddle.max_iter = sd.at("max_iter").get<int>();
        c.saddle.stall_window = sd.at("stall_window").get<int>();
        c.saddle.verbose = sd.at("verbose").get<bool>();
        const json& sg = m.at("sgld");
        c.sgld.ds = sg.at("ds").get<double>();
        c.sgld.n_steps = sg.at("n_steps").get<long long>();
        c.sgld.burn_in = sg.at("burn_in").get<long long>();
        c.sgld.thin = sg.at("thin").get<long long>();
        c.sgld.seed = sg.at("seed").get<std::uint64_t>();
        c.sgld.overflow_bound = sg.at("overflow_bound").get<double>();
        c.sgld_enabled = sg.at("enabled").get<bool>();
        c.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
        c.master_seed = m.at("master_seed").get<std::uint64_t>();
        c.output_dir = m.at("output_dir").get<std::string>();
        c.lambda_values = m.at("lambda_values").get<std::vector<double>>();
        c.scales = m.at("scales").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    } catch (const InvalidShape& e) {
        throw ConfigError(e.what());
    }

    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), c.experiment) == names.end()) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown experiment '" + c.experiment + "' (known: " + known + ")");
    }

    // Friendly per-experiment defaults for fields the user left unset.
    const bool has_task_name = j.contains("task") && j.at("task").contains("name");
    const bool has_task_T = j.contains("task") && j.at("task").contains("T");
    const bool has_act = j.contains("act");
    if (!has_task_name) c.task.name = default_task_for(c.experiment);
    if (!has_task_T &&
        (c.experiment == "landau_sweep" || c.experiment == "perturbation_check"))
        c.task.T = 4;
    if (!has_act && c.experiment == "fig2_sinusoid") c.act = Activation::Erf;
    // The sinusoid saddle needs noiseless moments to converge; its joint
    // space is small enough for tensor quadrature.
    const bool has_method = j.contains("sampler") && j.at("sampler").contains("method");
    if (!has_method && c.experiment == "fig2_sinusoid")
        c.sampler.method = SamplerMethod::Quadrature;

    if (c.output_dir.empty()) throw ConfigError("output_dir must be non-empty");
    c.sgld.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON (" + path + "): " + e.what());
    }
    return config_from_json(j);
}

void apply_config_override(json& j, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must be key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // bare words stay strings
    }
    set_dotted(j, path, value);
}

Task build_task(const ExperimentConfig& cfg) {
    const TaskConfig& t = cfg.task;
    if (t.name == "sinusoid") return sinusoid_task(t.T);
    if (t.name == "endpoint_regression")
        return endpoint_regression_task(t.T, t.y_final, t.x_scale);
    if (t.name == "endpoint_classification") return endpoint_classification(t.P, t.D);
    if (t.name == "teacher_rotation") {
        std::vector<int> supervised;
        if (t.supervised_count <= 0) {
            TimeGrid g(t.T, {});
            supervised = g.output_times();
        } else {
            supervised = spread_supervised(t.T, t.supervised_count);
        }
        return teacher_rotation_task(t.T, t.dphi, t.phi0, supervised);
    }
    throw ConfigError("unknown task name: " + t.name);
}

std::vector<int> spread_supervised(int T, int k) {
    if (k < 1 || k > T - 1)
        throw ConfigError("supervised count must lie in [1, T-1], got " + std::to_string(k));
    if (k == 1) return {T};
    std::vector<int> out;
    for (int i = 0; i < k; ++i) {
        const double x = 2.0 + static_cast<double>(i) * (T - 2.0) / (k - 1.0);
        const int t = static_cast<int>(std::lround(x));
        if (out.empty() || out.back() != t) out.push_back(t);
    }
    return out;
}

RunOutcome run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    RunOutcome out;
    out.dir = cfg.output_dir;
    const auto t0 = std::chrono::steady_clock::now();

    json manifest;
    try {
        if (const char* env = std::getenv("KMFT_SEED")) {
            try {
                cfg.master_seed = std::stoull(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("KMFT_SEED must be an unsigned integer, got: ") +
                                  env);
            }
        }
        manifest["version"] = kVersion;
        manifest["experiment"] = cfg.experiment;
        manifest["config"] = config_to_json(cfg);
        std::vector<std::uint64_t> effective;
        for (std::uint64_t s : cfg.seeds) effective.push_back(mix_seed(cfg.master_seed, s));
        manifest["effective_seeds"] = effective;

        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir / "kernels");

        Metrics metrics;
        if (cfg.experiment == "nngp_check") run_nngp_check(cfg, dir, metrics);
        else if (cfg.experiment == "landau_sweep") run_landau_sweep(cfg, dir, metrics);
        else if (cfg.experiment == "perturbation_check") run_perturbation_check(cfg, dir, metrics);
        else if (cfg.experiment == "fig3_endpoint") run_fig3_endpoint(cfg, dir, metrics);
        else if (cfg.experiment == "fig4_sequence") run_fig4_sequence(cfg, dir, metrics);
        else if (cfg.experiment == "fig2_sinusoid") run_fig2_sinusoid(cfg, dir, metrics);
        else throw ConfigError("unknown experiment: " + cfg.experiment);

        metrics.write((dir / "metrics.csv").string());
        manifest["ok"] = true;
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        manifest["ok"] = false;
        try {
            fs::create_directories(cfg.output_dir);
            json err;
            err["experiment"] = cfg.experiment;
            err["error"] = e.what();
            write_text_atomic((fs::path(cfg.output_dir) / "error.json").string(), err.dump(2) + "\n");
        } catch (const std::exception&) {
            // Partial results stay as written; the outcome already records the error.
        }
    }

    const auto t1 = std::chrono::steady_clock::now();
    manifest["wall_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    try {
        write_text_atomic((fs::path(cfg.output_dir) / "manifest.json").string(),
                          manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        if (out.ok) {
            out.ok = false;
            out.error = e.what();
        }
    }
    return out;
}

SweepOutcome run_sweep(const json& base_config, const std::string& axis,
                       const std::vector<json>& values, int parallel) {
    if (values.empty()) throw ConfigError("sweep values list is empty");
    if (axis.empty()) throw ConfigError("sweep axis is empty");
    if (parallel < 1) parallel = 1;

    const ExperimentConfig base = config_from_json(base_config);
    const std::string base_out = base.output_dir;

    const std::size_t n = values.size();
    std::vector<ExperimentConfig> cfgs(n);
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        json j = base_config;
        set_dotted(j, axis, values[i]);
        labels[i] = value_label(values[i]);
        set_dotted(j, "output_dir",
                   base_out + "/" + sanitize_label(axis) + "=" + labels[i]);
        cfgs[i] = config_from_json(j);
    }

    SweepOutcome out;
    out.runs.resize(n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(parallel)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(parallel));
        std::vector<std::thread> wave;
        for (std::size_t i = start; i < stop; ++i) {
            wave.emplace_back([&out, &cfgs, i] {
                try {
                    out.runs[i] = run_experiment(cfgs[i]);
                } catch (const std::exception& e) {
                    out.runs[i].ok = false;
                    out.runs[i].error = e.what();
                    out.runs[i].dir = cfgs[i].output_dir;
                }
            });
        }
        for (auto& th : wave) th.join();
    }

    std::ostringstream os;
    os << "axis,value,key,metric\n";
    for (std::size_t i = 0; i < n; ++i) {
        os << axis << "," << labels[i] << ",ok," << (out.runs[i].ok ? 1 : 0) << "\n";
        std::ifstream is(fs::path(cfgs[i].output_dir) / "metrics.csv");
        if (!is) continue;
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            os << axis << "," << labels[i] << "," << line << "\n";
        }
    }
    fs::create_directories(base_out);
    out.merged_csv = (fs::path(base_out) / "sweep.csv").string();
    write_text_atomic(out.merged_csv, os.str());

    out.all_ok = std::all_of(out.runs.begin(), out.runs.end(),
                             [](const RunOutcome& r) { return r.ok; });
    return out;
}

}  // namespace kmft
