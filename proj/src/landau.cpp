#include "kmft/landau.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kmft/tasks.hpp"

namespace kmft {

namespace {

double e_of_c(double c, double u, double w) { return std::pow(c, 1.5) * std::sqrt(w / u); }

double e_foc(double c, double lambda, double u, double w) {
    const double e = e_of_c(c, u, w);
    return 1.0 / e - 1.0 / (w * c) + lambda * u * w * w / (e * e);
}

}  // namespace

LandauPoint diagonal_foc_solve(double lambda, double u, double w, double v, ArchMask arch) {
    if (lambda < 0) throw InvalidShape("lambda must be nonnegative");
    (void)v;  // the FOC depends on v only through lambda
    const double c0 = u * w;
    double lo = c0, hi = 100.0 * c0;
    double flo = e_foc(lo, lambda, u, w);
    double c;
    if (flo <= 0) {
        c = lo;  // lambda = 0: the NNGP point itself
    } else {
        if (e_foc(hi, lambda, u, w) > 0) throw NoRoot("diagonal FOC bracket failed");
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (e_foc(mid, lambda, u, w) > 0)
                lo = mid;
            else
                hi = mid;
        }
        c = 0.5 * (lo + hi);
        for (int i = 0; i < 8; ++i) {  // Newton polish
            const double h = 1e-7 * c;
            const double f = e_foc(c, lambda, u, w);
            const double df = (e_foc(c + h, lambda, u, w) - e_foc(c - h, lambda, u, w)) / (2 * h);
            if (df == 0) break;
            const double step = f / df;
            c -= step;
            if (std::abs(step) < 1e-15 * c) break;
        }
    }
    LandauPoint p;
    p.c = c;
    p.a = std::sqrt(u * c / w);
    p.e = e_of_c(c, u, w);
    p.lambda = lambda;
    p.arch = arch;
    return p;
}

double quadratic_coefficient(const LandauPoint& p, double w) {
    const double base = -1.0 / (p.c * p.e);
    if (p.arch == ArchMask::DNN) return base;
    return base + 1.0 / (w * (p.c * p.c + p.a * p.e));
}

double critical_lambda() { return 8.0; }

double order_parameter(double lambda, double u, double w, double v, ArchMask arch) {
    const LandauPoint p = diagonal_foc_solve(lambda, u, w, v, arch);
    const double C2 = quadratic_coefficient(p, w);
    if (C2 <= 0) return 0.0;
    return C2 * p.c * p.c * p.e * p.e;
}

SlavingCoefficients slaving_coefficients(const LandauPoint& p) {
    SlavingCoefficients s;
    if (p.arch == ArchMask::DNN) return s;
    s.alpha = p.a * p.c / (p.c * p.c + p.a * p.e);
    s.b3_over_d2 = s.alpha / p.c;
    return s;
}

std::vector<SweepRow> lambda_sweep(const std::vector<double>& lambdas, double u, double w,
                                   double v, const std::vector<ArchMask>& archs,
                                   const SolverOptions& opts) {
    std::vector<SweepRow> rows;
    for (ArchMask arch : archs) {
        for (double lambda : lambdas) {
            const double y = std::sqrt(lambda * u * w * w * v);
            const Task task = endpoint_regression_task(4, y);
            HyperParams hyper;
            hyper.u = u;
            hyper.w = w;
            hyper.v = v;
            hyper.kappa = 0.0;
            const LinearObjective obj = make_linear_objective(task, hyper, arch);
            const NngpResult prior = nngp_kernel(task, hyper, Activation::Linear, arch);
            const Kernel init = symmetry_breaking_init(prior.H0, opts.sym_break_eps);
            const SolveReport rep = solve_map(obj, init, opts);
            const LandauPoint p = diagonal_foc_solve(lambda, u, w, v, arch);
            SweepRow row;
            row.lambda = lambda;
            row.arch = arch;
            row.d2_theory = order_parameter(lambda, u, w, v, arch);
            const double d = rep.H_star.data(2, 1);
            row.d2_solver = d * d;
            row.C2 = quadratic_coefficient(p, w);
            row.a = p.a;
            row.c = p.c;
            row.e = p.e;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "lambda,arch,d2_theory,d2_solver,C2,a,c,e\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.12g,%s,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                      r.lambda, to_string(r.arch).c_str(), r.d2_theory, r.d2_solver, r.C2,
                      r.a, r.c, r.e);
        out << buf;
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << out.str();
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
