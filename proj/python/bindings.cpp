#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>
#include <optional>
#include <utility>

#include "kmft/errors.hpp"
#include "kmft/experiments.hpp"
#include "kmft/inference.hpp"
#include "kmft/kernelspace.hpp"
#include "kmft/landau.hpp"
#include "kmft/linear_mft.hpp"
#include "kmft/nngp.hpp"
#include "kmft/nonlinear_mft.hpp"
#include "kmft/perturbation.hpp"
#include "kmft/sgld.hpp"
#include "kmft/tasks.hpp"

namespace py = pybind11;
using namespace kmft;

namespace {

// Dict <-> nlohmann round-trips go through the python json module so the
// accepted config grammar is exactly the CLI's.
nlohmann::json to_json(const py::object& o) {
    const py::object dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) {
    const py::object loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

}  // namespace

PYBIND11_MODULE(_kmft, m) {
    m.doc() = "Kernel mean-field theory of trained recurrent and deep networks";
    m.attr("__version__") = "0.1.0";

    const auto base = py::register_exception<Error>(m, "KmftError", PyExc_RuntimeError);
    py::register_exception<SingularKernel>(m, "SingularKernelError", base.ptr());
    py::register_exception<DegenerateTilt>(m, "DegenerateTiltError", base.ptr());
    py::register_exception<DegenerateInput>(m, "DegenerateInputError", base.ptr());
    py::register_exception<NumericOverflow>(m, "NumericOverflowError", base.ptr());
    py::register_exception<MaxIterations>(m, "MaxIterationsError", base.ptr());
    py::register_exception<NonDecreasingResidual>(m, "NonDecreasingResidualError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::enum_<TimeRange>(m, "TimeRange")
        .value("Input", TimeRange::Input)
        .value("Hidden", TimeRange::Hidden)
        .value("Output", TimeRange::Output);

    py::enum_<ArchMask>(m, "ArchMask")
        .value("RNN", ArchMask::RNN)
        .value("DNN", ArchMask::DNN);

    py::enum_<Activation>(m, "Activation")
        .value("Linear", Activation::Linear)
        .value("Erf", Activation::Erf);

    py::enum_<SamplerMethod>(m, "SamplerMethod")
        .value("ImportanceFromBase", SamplerMethod::ImportanceFromBase)
        .value("LangevinRefine", SamplerMethod::LangevinRefine)
        .value("AnalyticLinear", SamplerMethod::AnalyticLinear)
        .value("Quadrature", SamplerMethod::Quadrature);

    py::class_<TimeGrid>(m, "TimeGrid")
        .def(py::init<>())
        .def(py::init<int, std::vector<int>>(), py::arg("T"), py::arg("supervised"))
        .def_readwrite("T", &TimeGrid::T)
        .def_readwrite("supervised", &TimeGrid::supervised)
        .def("n_times", &TimeGrid::n_times)
        .def("input_times", &TimeGrid::input_times)
        .def("hidden_times", &TimeGrid::hidden_times)
        .def("output_times", &TimeGrid::output_times)
        .def("is_supervised", &TimeGrid::is_supervised, py::arg("t"))
        .def(py::self == py::self)
        .def("__repr__", [](const TimeGrid& g) {
            std::string s = "TimeGrid(T=" + std::to_string(g.T) + ", supervised=[";
            for (std::size_t i = 0; i < g.supervised.size(); ++i)
                s += (i ? ", " : "") + std::to_string(g.supervised[i]);
            return s + "])";
        });

    py::class_<HyperParams>(m, "HyperParams")
        .def(py::init([](double u, double w, double v, double kappa, long long N, long long D) {
                 HyperParams h;
                 h.u = u;
                 h.w = w;
                 h.v = v;
                 h.kappa = kappa;
                 h.N = N;
                 h.D = D;
                 return h;
             }),
             py::arg("u") = 1.0, py::arg("w") = 1.0, py::arg("v") = 1.0, py::arg("kappa") = 0.0,
             py::arg("N") = 1, py::arg("D") = 1)
        .def_readwrite("u", &HyperParams::u)
        .def_readwrite("w", &HyperParams::w)
        .def_readwrite("v", &HyperParams::v)
        .def_readwrite("kappa", &HyperParams::kappa)
        .def_readwrite("N", &HyperParams::N)
        .def_readwrite("D", &HyperParams::D)
        .def("G_U", &HyperParams::G_U)
        .def("G_W", &HyperParams::G_W)
        .def("G_V", &HyperParams::G_V)
        .def("Kap", &HyperParams::Kap)
        .def("validate", &HyperParams::validate)
        .def("__repr__", [](const HyperParams& h) {
            return "HyperParams(u=" + std::to_string(h.u) + ", w=" + std::to_string(h.w) +
                   ", v=" + std::to_string(h.v) + ", kappa=" + std::to_string(h.kappa) +
                   ", N=" + std::to_string(h.N) + ", D=" + std::to_string(h.D) + ")";
        });

    py::class_<Kernel>(m, "Kernel")
        .def(py::init<TimeGrid, int, TimeRange>(), py::arg("grid"), py::arg("P"),
             py::arg("range"))
        .def(py::init<TimeGrid, int, std::vector<int>, Matrix>(), py::arg("grid"), py::arg("P"),
             py::arg("times"), py::arg("data"))
        .def_readwrite("grid", &Kernel::grid)
        .def_readwrite("P", &Kernel::P)
        .def_readonly("times", &Kernel::times)
        .def_property(
            "data", [](const Kernel& k) { return k.data; },
            [](Kernel& k, const Matrix& d) { k.set_data(d); })
        .def("dim", &Kernel::dim)
        .def("flat", &Kernel::flat, py::arg("t_idx"), py::arg("p"))
        .def("time_index", &Kernel::time_index, py::arg("t"))
        .def("set_data", &Kernel::set_data, py::arg("data"))
        .def("max_abs", &Kernel::max_abs)
        .def("__repr__", [](const Kernel& k) {
            std::string s = "Kernel(times=[";
            for (std::size_t i = 0; i < k.times.size(); ++i)
                s += (i ? ", " : "") + std::to_string(k.times[i]);
            return s + "], P=" + std::to_string(k.P) + ", dim=" + std::to_string(k.dim()) + ")";
        });

    m.def("symmetrized", &symmetrized, py::arg("m"));
    m.def("shift_minus", &shift_minus, py::arg("K"), py::arg("target") = TimeRange::Hidden);
    m.def("shift_plus", &shift_plus, py::arg("K"), py::arg("target") = TimeRange::Hidden);
    m.def("shifted", &shifted, py::arg("K"), py::arg("target"), py::arg("dt"));
    m.def("apply_mask", &apply_mask, py::arg("mask"), py::arg("K"));
    m.def("apply_mask_matrix", &apply_mask_matrix, py::arg("mask"), py::arg("m"), py::arg("P"));
    m.def("restrict_supervised", &restrict_supervised, py::arg("K"), py::arg("grid"));
    m.def("embed_supervised", &embed_supervised, py::arg("K_restricted"), py::arg("grid"),
          py::arg("times"));
    m.def("project_psd", &project_psd, py::arg("K"), py::arg("floor"));
    m.def("project_psd_matrix", &project_psd_matrix, py::arg("m"), py::arg("floor"));
    m.def("min_eigenvalue", &min_eigenvalue, py::arg("m"));
    m.def("write_kernel_csv", &write_kernel_csv, py::arg("path"), py::arg("K"),
          py::arg("provenance") = "");
    m.def("read_kernel_csv", &read_kernel_csv, py::arg("path"));

    py::class_<Task>(m, "Task")
        .def(py::init<>())
        .def_readwrite("name", &Task::name)
        .def_readwrite("grid", &Task::grid)
        .def_readwrite("P", &Task::P)
        .def_readwrite("D", &Task::D)
        .def_readwrite("x", &Task::x)
        .def_readwrite("y", &Task::y)
        .def("validate", &Task::validate)
        .def("__repr__", [](const Task& t) {
            return "Task(name='" + t.name + "', T=" + std::to_string(t.grid.T) +
                   ", P=" + std::to_string(t.P) + ", D=" + std::to_string(t.D) + ")";
        });

    m.def("sinusoid_task", &sinusoid_task, py::arg("T"));
    m.def("endpoint_classification", &endpoint_classification, py::arg("P"), py::arg("D"));
    m.def("teacher_rotation_task", &teacher_rotation_task, py::arg("T"), py::arg("dphi"),
          py::arg("phi0"), py::arg("supervised"));
    m.def("endpoint_regression_task", &endpoint_regression_task, py::arg("T"),
          py::arg("y_final"), py::arg("x_scale") = 1.0);
    m.def("input_kernel", &input_kernel, py::arg("task"));
    m.def("label_kernel", &label_kernel, py::arg("task"));
    m.def("write_task_manifest", &write_task_manifest, py::arg("path"), py::arg("task"));

    m.def("phi", &phi, py::arg("act"), py::arg("h"));
    m.def("phi_prime", &phi_prime, py::arg("act"), py::arg("h"));
    m.def("gaussian_phi_moment", &gaussian_phi_moment, py::arg("act"), py::arg("hii"),
          py::arg("hjj"), py::arg("hij"));
    m.def("gaussian_phi_moments", &gaussian_phi_moments, py::arg("act"), py::arg("H"));

    py::class_<NngpResult>(m, "NngpResult")
        .def_readonly("H0", &NngpResult::H0)
        .def_readonly("C0", &NngpResult::C0)
        .def_readonly("residual", &NngpResult::residual)
        .def_readonly("iterations", &NngpResult::iterations);

    m.def("nngp_kernel", &nngp_kernel, py::arg("task"), py::arg("hyper"), py::arg("act"),
          py::arg("mask"), py::arg("overflow_bound") = 1e12,
          py::call_guard<py::gil_scoped_release>());

    py::class_<LinearObjective>(m, "LinearObjective")
        .def_readonly("grid", &LinearObjective::grid)
        .def_readonly("P", &LinearObjective::P)
        .def_readonly("hyper", &LinearObjective::hyper)
        .def_readonly("mask", &LinearObjective::mask)
        .def_readonly("Xm", &LinearObjective::Xm)
        .def_readonly("Y_sup", &LinearObjective::Y_sup)
        .def_readonly("sup_pos", &LinearObjective::sup_pos)
        .def_readwrite("kappa_floor", &LinearObjective::kappa_floor)
        .def("dim", &LinearObjective::dim)
        .def("sup_dim", &LinearObjective::sup_dim)
        .def("sigma", &LinearObjective::sigma, py::arg("H"))
        .def("label_gram", &LinearObjective::label_gram, py::arg("H"));

    m.def("make_linear_objective", &make_linear_objective, py::arg("task"), py::arg("hyper"),
          py::arg("mask"));

    m.def("neg_log_p", py::overload_cast<const Kernel&, const LinearObjective&>(&neg_log_p),
          py::arg("H"), py::arg("obj"));
    m.def("neg_log_p", py::overload_cast<const Matrix&, const LinearObjective&>(&neg_log_p),
          py::arg("H"), py::arg("obj"));
    m.def("grad_neg_log_p",
          py::overload_cast<const Kernel&, const LinearObjective&>(&grad_neg_log_p),
          py::arg("H"), py::arg("obj"));
    m.def("grad_neg_log_p",
          py::overload_cast<const Matrix&, const LinearObjective&>(&grad_neg_log_p),
          py::arg("H"), py::arg("obj"));
    m.def("closed_form_residual",
          py::overload_cast<const Kernel&, const LinearObjective&>(&closed_form_residual),
          py::arg("H"), py::arg("obj"));
    m.def("closed_form_residual",
          py::overload_cast<const Matrix&, const LinearObjective&>(&closed_form_residual),
          py::arg("H"), py::arg("obj"));

    py::class_<SolverOptions>(m, "SolverOptions")
        .def(py::init([](double gtol, int max_iter, double sym_break_eps, int cg_max_iter,
                         bool verbose) {
                 SolverOptions o;
                 o.gtol = gtol;
                 o.max_iter = max_iter;
                 o.sym_break_eps = sym_break_eps;
                 o.cg_max_iter = cg_max_iter;
                 o.verbose = verbose;
                 return o;
             }),
             py::arg("gtol") = 1e-9, py::arg("max_iter") = 2000,
             py::arg("sym_break_eps") = 1e-3, py::arg("cg_max_iter") = 0,
             py::arg("verbose") = false)
        .def_readwrite("gtol", &SolverOptions::gtol)
        .def_readwrite("max_iter", &SolverOptions::max_iter)
        .def_readwrite("sym_break_eps", &SolverOptions::sym_break_eps)
        .def_readwrite("cg_max_iter", &SolverOptions::cg_max_iter)
        .def_readwrite("verbose", &SolverOptions::verbose);

    py::class_<SolveReport>(m, "SolveReport")
        .def_readonly("H_star", &SolveReport::H_star)
        .def_readonly("objective_value", &SolveReport::objective_value)
        .def_readonly("gradient_norm", &SolveReport::gradient_norm)
        .def_readonly("iterations", &SolveReport::iterations)
        .def_readonly("closed_form_residual", &SolveReport::closed_form_residual)
        .def_readonly("converged", &SolveReport::converged)
        .def_readonly("status", &SolveReport::status)
        .def("__repr__", [](const SolveReport& r) {
            return "SolveReport(converged=" + std::string(r.converged ? "True" : "False") +
                   ", iterations=" + std::to_string(r.iterations) +
                   ", gradient_norm=" + std::to_string(r.gradient_norm) + ")";
        });

    m.def("symmetry_breaking_init", &symmetry_breaking_init, py::arg("H0"), py::arg("eps"));
    m.def("solve_map", &solve_map, py::arg("obj"), py::arg("init"),
          py::arg("opts") = SolverOptions{}, py::call_guard<py::gil_scoped_release>());
    m.def("partial_supervision_projector", &partial_supervision_projector, py::arg("grid"),
          py::arg("A"));
    m.def("write_solve_report", &write_solve_report, py::arg("path"), py::arg("report"),
          py::arg("kernel_csv_path"));

    py::class_<LandauPoint>(m, "LandauPoint")
        .def_readonly("a", &LandauPoint::a)
        .def_readonly("c", &LandauPoint::c)
        .def_readonly("e", &LandauPoint::e)
        .def_readonly("b2", &LandauPoint::b2)
        .def_readonly("b3", &LandauPoint::b3)
        .def_readonly("d", &LandauPoint::d)
        .def_readonly("lambda_", &LandauPoint::lambda)
        .def_readonly("arch", &LandauPoint::arch);

    m.def("diagonal_foc_solve", &diagonal_foc_solve, py::arg("lambda_"), py::arg("u"),
          py::arg("w"), py::arg("v"), py::arg("arch") = ArchMask::RNN);
    m.def("quadratic_coefficient", &quadratic_coefficient, py::arg("point"), py::arg("w"));
    m.def("critical_lambda", &critical_lambda);
    m.def("order_parameter", &order_parameter, py::arg("lambda_"), py::arg("u"), py::arg("w"),
          py::arg("v"), py::arg("arch") = ArchMask::RNN);

    py::class_<SlavingCoefficients>(m, "SlavingCoefficients")
        .def_readonly("alpha", &SlavingCoefficients::alpha)
        .def_readonly("b3_over_d2", &SlavingCoefficients::b3_over_d2);

    m.def("slaving_coefficients", &slaving_coefficients, py::arg("point"));

    py::class_<SweepRow>(m, "SweepRow")
        .def_readonly("lambda_", &SweepRow::lambda)
        .def_readonly("arch", &SweepRow::arch)
        .def_readonly("d2_theory", &SweepRow::d2_theory)
        .def_readonly("d2_solver", &SweepRow::d2_solver)
        .def_readonly("C2", &SweepRow::C2)
        .def_readonly("a", &SweepRow::a)
        .def_readonly("c", &SweepRow::c)
        .def_readonly("e", &SweepRow::e);

    m.def("lambda_sweep", &lambda_sweep, py::arg("lambdas"), py::arg("u"), py::arg("w"),
          py::arg("v"), py::arg("archs"), py::arg("opts") = SolverOptions{},
          py::call_guard<py::gil_scoped_release>());
    m.def("write_sweep_csv", &write_sweep_csv, py::arg("path"), py::arg("rows"));

    py::class_<Propagators>(m, "Propagators")
        .def_readonly("G_h", &Propagators::G_h)
        .def_readonly("G_h_plus", &Propagators::G_h_plus)
        .def_readonly("G_y", &Propagators::G_y);

    m.def("propagators", &propagators, py::arg("H0"), py::arg("X"), py::arg("hyper"),
          py::arg("mask"));
    m.def("l1_apply", &l1_apply, py::arg("S"), py::arg("G"), py::arg("hyper"), py::arg("mask"),
          py::arg("P"));
    m.def("half_q_apply", &half_q_apply, py::arg("S"), py::arg("G"), py::arg("hyper"),
          py::arg("mask"), py::arg("P"));
    m.def("label_source", &label_source, py::arg("H0"), py::arg("Y_sup"), py::arg("sup_pos"),
          py::arg("hyper"), py::arg("P"), py::arg("dim"));
    m.def("label_source_variation", &label_source_variation, py::arg("S"), py::arg("H0"),
          py::arg("Y_sup"), py::arg("sup_pos"), py::arg("hyper"), py::arg("P"), py::arg("dim"));
    m.def("l1_matrix", &l1_matrix, py::arg("G"), py::arg("hyper"), py::arg("mask"), py::arg("P"),
          py::arg("dim"));
    m.def("delta1", &delta1, py::arg("H0"), py::arg("Y"), py::arg("hyper"), py::arg("mask"));
    m.def("delta2", &delta2, py::arg("H0"), py::arg("D1"), py::arg("Y"), py::arg("hyper"),
          py::arg("mask"));
    m.def("perturbative_kernel", &perturbative_kernel, py::arg("H0"), py::arg("Y"),
          py::arg("hyper"), py::arg("mask"));

    py::class_<ExpansionRow>(m, "ExpansionRow")
        .def_readonly("scale", &ExpansionRow::scale)
        .def_readonly("arch", &ExpansionRow::arch)
        .def_readonly("err_order1", &ExpansionRow::err_order1)
        .def_readonly("err_order2", &ExpansionRow::err_order2)
        .def_readonly("ratio", &ExpansionRow::ratio);

    m.def("expansion_error", &expansion_error, py::arg("task"), py::arg("hyper"),
          py::arg("mask"), py::arg("scales"), py::arg("opts") = SolverOptions{},
          py::call_guard<py::gil_scoped_release>());
    m.def("write_expansion_csv", &write_expansion_csv, py::arg("path"), py::arg("rows"));

    py::class_<SamplerConfig>(m, "SamplerConfig")
        .def(py::init([](SamplerMethod method, int n_samples, double step, int burn_in,
                         std::uint64_t seed) {
                 SamplerConfig c;
                 c.method = method;
                 c.n_samples = n_samples;
                 c.step = step;
                 c.burn_in = burn_in;
                 c.seed = seed;
                 return c;
             }),
             py::arg("method") = SamplerMethod::ImportanceFromBase,
             py::arg("n_samples") = 20000, py::arg("step") = 0.05, py::arg("burn_in") = 2000,
             py::arg("seed") = std::uint64_t{12345})
        .def_readwrite("method", &SamplerConfig::method)
        .def_readwrite("n_samples", &SamplerConfig::n_samples)
        .def_readwrite("step", &SamplerConfig::step)
        .def_readwrite("burn_in", &SamplerConfig::burn_in)
        .def_readwrite("seed", &SamplerConfig::seed);

    py::class_<NonlinearObjective>(m, "NonlinearObjective")
        .def_readonly("lin", &NonlinearObjective::lin)
        .def_readonly("act", &NonlinearObjective::act)
        .def_readonly("H0", &NonlinearObjective::H0)
        .def_readonly("C0", &NonlinearObjective::C0);

    m.def("make_nonlinear_objective", &make_nonlinear_objective, py::arg("task"),
          py::arg("hyper"), py::arg("mask"), py::arg("act"),
          py::call_guard<py::gil_scoped_release>());

    py::class_<SaddleState>(m, "SaddleState")
        .def_readwrite("C", &SaddleState::C)
        .def_readwrite("C_tilde", &SaddleState::C_tilde)
        .def_readonly("H_eql", &SaddleState::H_eql)
        .def_readonly("C_eql", &SaddleState::C_eql)
        .def_readonly("iteration", &SaddleState::iteration)
        .def_readonly("residual", &SaddleState::residual)
        .def_readonly("converged", &SaddleState::converged)
        .def_readonly("status", &SaddleState::status)
        .def("__repr__", [](const SaddleState& s) {
            return "SaddleState(converged=" + std::string(s.converged ? "True" : "False") +
                   ", iteration=" + std::to_string(s.iteration) +
                   ", residual=" + std::to_string(s.residual) + ", status='" + s.status + "')";
        });

    m.def("init_saddle", &init_saddle, py::arg("obj"), py::arg("sym_break_eps") = 1e-3);

    py::class_<MomentEstimate>(m, "MomentEstimate")
        .def_readonly("H_eql", &MomentEstimate::H_eql)
        .def_readonly("C_eql", &MomentEstimate::C_eql)
        .def_readonly("se_H", &MomentEstimate::se_H)
        .def_readonly("se_C", &MomentEstimate::se_C)
        .def_readonly("se_H_mat", &MomentEstimate::se_H_mat)
        .def_readonly("se_C_mat", &MomentEstimate::se_C_mat)
        .def_readonly("ess", &MomentEstimate::ess);

    m.def("single_site_moments", &single_site_moments, py::arg("state"), py::arg("obj"),
          py::arg("sampler"), py::call_guard<py::gil_scoped_release>());

    py::class_<SaddleGradients>(m, "SaddleGradients")
        .def_readonly("gC", &SaddleGradients::gC)
        .def_readonly("gCt", &SaddleGradients::gCt)
        .def_readonly("moments", &SaddleGradients::moments)
        .def_readonly("noise", &SaddleGradients::noise);

    m.def("saddle_gradients", &saddle_gradients, py::arg("state"), py::arg("obj"),
          py::arg("sampler"), py::call_guard<py::gil_scoped_release>());

    py::class_<SaddleOptions>(m, "SaddleOptions")
        .def(py::init([](double eta, double tol, double max_step, int max_iter,
                         int stall_window, bool verbose) {
                 SaddleOptions o;
                 o.eta = eta;
                 o.tol = tol;
                 o.max_step = max_step;
                 o.max_iter = max_iter;
                 o.stall_window = stall_window;
                 o.verbose = verbose;
                 return o;
             }),
             py::arg("eta") = 0.2, py::arg("tol") = 1e-5, py::arg("max_step") = 0.25,
             py::arg("max_iter") = 50000, py::arg("stall_window") = 200,
             py::arg("verbose") = false)
        .def_readwrite("eta", &SaddleOptions::eta)
        .def_readwrite("tol", &SaddleOptions::tol)
        .def_readwrite("max_step", &SaddleOptions::max_step)
        .def_readwrite("max_iter", &SaddleOptions::max_iter)
        .def_readwrite("stall_window", &SaddleOptions::stall_window)
        .def_readwrite("verbose", &SaddleOptions::verbose);

    m.def("solve_saddle", &solve_saddle, py::arg("obj"), py::arg("init"), py::arg("sampler"),
          py::arg("opts") = SaddleOptions{}, py::call_guard<py::gil_scoped_release>());

    py::class_<SaddleCheckpoint>(m, "SaddleCheckpoint")
        .def_readonly("state", &SaddleCheckpoint::state)
        .def_readonly("seed", &SaddleCheckpoint::seed);

    m.def("save_saddle_checkpoint", &save_saddle_checkpoint, py::arg("prefix"),
          py::arg("state"), py::arg("seed"));
    m.def("load_saddle_checkpoint", &load_saddle_checkpoint, py::arg("prefix"));

    m.def("endpoint_predictor", &endpoint_predictor, py::arg("H"), py::arg("y_endpoint"),
          py::arg("hyper"));

    py::class_<PredictorResult>(m, "PredictorResult")
        .def_readonly("f", &PredictorResult::f)
        .def_readonly("loss", &PredictorResult::loss)
        .def_readonly("per_time_loss", &PredictorResult::per_time_loss);

    m.def("sequence_predictor", &sequence_predictor, py::arg("H"), py::arg("task"),
          py::arg("hyper"));
    m.def("cka", &cka, py::arg("A"), py::arg("B"));
    m.def("cka_matrix", &cka_matrix, py::arg("A"), py::arg("B"));
    m.def("autocorrelation", &autocorrelation, py::arg("C"));
    m.def("write_predictor_csv", &write_predictor_csv, py::arg("path"), py::arg("task"),
          py::arg("result"));

    py::class_<WeightState>(m, "WeightState")
        .def_readwrite("U", &WeightState::U)
        .def_readwrite("W", &WeightState::W)
        .def_readwrite("V", &WeightState::V)
        .def_readwrite("arch", &WeightState::arch)
        .def_readwrite("rng_seed", &WeightState::rng_seed);

    m.def("init_weights", &init_weights, py::arg("task"), py::arg("hyper"), py::arg("arch"),
          py::arg("seed"));

    py::class_<ForwardPass>(m, "ForwardPass")
        .def_readonly("h", &ForwardPass::h)
        .def_readonly("ph", &ForwardPass::ph)
        .def_readonly("f", &ForwardPass::f);

    m.def("forward", &forward, py::arg("state"), py::arg("task"), py::arg("act"),
          py::arg("overflow_bound") = 1e12, py::call_guard<py::gil_scoped_release>());

    py::class_<LossGradients>(m, "LossGradients")
        .def_readonly("potential", &LossGradients::potential)
        .def_readonly("gU", &LossGradients::gU)
        .def_readonly("gW", &LossGradients::gW)
        .def_readonly("gV", &LossGradients::gV);

    m.def("loss_and_gradients", &loss_and_gradients, py::arg("state"), py::arg("task"),
          py::arg("act"), py::arg("overflow_bound") = 1e12,
          py::call_guard<py::gil_scoped_release>());

    py::class_<SGLDConfig>(m, "SGLDConfig")
        .def(py::init([](double ds, long long n_steps, long long burn_in, long long thin,
                         std::uint64_t seed, double overflow_bound) {
                 SGLDConfig c;
                 c.ds = ds;
                 c.n_steps = n_steps;
                 c.burn_in = burn_in;
                 c.thin = thin;
                 c.seed = seed;
                 c.overflow_bound = overflow_bound;
                 return c;
             }),
             py::arg("ds") = 1e-3, py::arg("n_steps") = 10000, py::arg("burn_in") = -1,
             py::arg("thin") = 10, py::arg("seed") = std::uint64_t{1},
             py::arg("overflow_bound") = 1e9)
        .def_readwrite("ds", &SGLDConfig::ds)
        .def_readwrite("n_steps", &SGLDConfig::n_steps)
        .def_readwrite("burn_in", &SGLDConfig::burn_in)
        .def_readwrite("thin", &SGLDConfig::thin)
        .def_readwrite("seed", &SGLDConfig::seed)
        .def_readwrite("overflow_bound", &SGLDConfig::overflow_bound)
        .def("effective_burn_in", &SGLDConfig::effective_burn_in)
        .def("validate", &SGLDConfig::validate);

    m.def("sgld_step", &sgld_step, py::arg("state"), py::arg("task"), py::arg("hyper"),
          py::arg("act"), py::arg("cfg"), py::arg("step_index"),
          py::call_guard<py::gil_scoped_release>());

    py::class_<TrainLogRow>(m, "TrainLogRow")
        .def_readonly("step", &TrainLogRow::step)
        .def_readonly("loss", &TrainLogRow::loss)
        .def_readonly("snapshot_id", &TrainLogRow::snapshot_id);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("C_exp", &TrainResult::C_exp)
        .def_readonly("H_exp", &TrainResult::H_exp)
        .def_readonly("f_mean", &TrainResult::f_mean)
        .def_readonly("f_var", &TrainResult::f_var)
        .def_readonly("log", &TrainResult::log)
        .def_readonly("n_kernel_samples", &TrainResult::n_kernel_samples)
        .def_readonly("stationary", &TrainResult::stationary)
        .def_readonly("loss_mean", &TrainResult::loss_mean);

    m.def(
        "train_and_measure",
        [](const Task& task, const HyperParams& hyper, Activation act, ArchMask arch,
           const SGLDConfig& cfg, std::optional<WeightState> warm) {
            WeightState final_state;
            TrainResult result;
            {
                py::gil_scoped_release release;
                result = kmft::train_and_measure(task, hyper, act, arch, cfg,
                                                 warm ? &*warm : nullptr, &final_state);
            }
            return std::make_pair(std::move(result), std::move(final_state));
        },
        py::arg("task"), py::arg("hyper"), py::arg("act"), py::arg("arch"), py::arg("cfg"),
        py::arg("warm") = std::nullopt,
        "Run SGLD training and kernel measurement; returns (result, final_state).");

    m.def("write_training_log", &write_training_log, py::arg("path"), py::arg("log"));
    m.def("write_run_manifest", &write_run_manifest, py::arg("path"), py::arg("task"),
          py::arg("hyper"), py::arg("act"), py::arg("arch"), py::arg("cfg"), py::arg("result"));

    py::class_<RunOutcome>(m, "RunOutcome")
        .def_readonly("ok", &RunOutcome::ok)
        .def_readonly("error", &RunOutcome::error)
        .def_readonly("dir", &RunOutcome::dir)
        .def("__repr__", [](const RunOutcome& r) {
            return "RunOutcome(ok=" + std::string(r.ok ? "True" : "False") + ", dir='" + r.dir +
                   "')";
        });

    py::class_<SweepOutcome>(m, "SweepOutcome")
        .def_readonly("all_ok", &SweepOutcome::all_ok)
        .def_readonly("merged_csv", &SweepOutcome::merged_csv)
        .def_readonly("runs", &SweepOutcome::runs);

    m.def("experiment_config_defaults",
          []() { return from_json(kmft::experiment_config_defaults()); },
          "Fully defaulted experiment config as a dict.");
    m.def("spread_supervised", &spread_supervised, py::arg("T"), py::arg("k"));
    m.def(
        "run_experiment",
        [](const py::dict& config) {
            const ExperimentConfig cfg = config_from_json(to_json(config));
            py::gil_scoped_release release;
            return kmft::run_experiment(cfg);
        },
        py::arg("config"),
        "Validate a config dict and execute the experiment it describes.");
    m.def(
        "run_sweep",
        [](const py::dict& base_config, const std::string& axis, const py::list& values,
           int parallel) {
            const nlohmann::json base = to_json(base_config);
            std::vector<nlohmann::json> vals;
            vals.reserve(values.size());
            for (const auto& v : values)
                vals.push_back(to_json(py::reinterpret_borrow<py::object>(v)));
            py::gil_scoped_release release;
            return kmft::run_sweep(base, axis, vals, parallel);
        },
        py::arg("base_config"), py::arg("axis"), py::arg("values"), py::arg("parallel") = 1,
        "Run one experiment per value of the dotted config key `axis`.");
}
