// Release gate: one check per shipped guarantee, each printing a single
// [PASS]/[FAIL] line (indented lines carry the measured numbers).  Run with
// no arguments for the full battery or with criterion numbers to select.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kmft/errors.hpp"
#include "kmft/inference.hpp"
#include "kmft/kernelspace.hpp"
#include "kmft/landau.hpp"
#include "kmft/linear_mft.hpp"
#include "kmft/nngp.hpp"
#include "kmft/nonlinear_mft.hpp"
#include "kmft/perturbation.hpp"
#include "kmft/sgld.hpp"
#include "kmft/tasks.hpp"

namespace {

using namespace kmft;

int g_failures = 0;

std::string fmt(const char* format, ...) {
    char buf[1024];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

void note(const std::string& line) { std::printf("    %s\n", line.c_str()); }

void report(int id, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %02d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

HyperParams hp(double u, double w, double v, double kappa) {
    HyperParams h;
    h.u = u;
    h.w = w;
    h.v = v;
    h.kappa = kappa;
    return h;
}

SolverOptions tight_opts(double gtol) {
    SolverOptions o;
    o.gtol = gtol;
    o.max_iter = 5000;
    return o;
}

SolveReport solve_linear(const Task& task, const HyperParams& hy, ArchMask arch, double eps,
                         double gtol) {
    const auto obj = make_linear_objective(task, hy, arch);
    const Kernel H0 = nngp_kernel(task, hy, arch, Activation::Linear);
    return solve_map(obj, symmetry_breaking_init(H0, eps), tight_opts(gtol));
}

// T=4 endpoint regression at u = w = v = 1, kappa = 0; lambda = y^2.
SolveReport transition_solve(double lambda, ArchMask arch, double gtol = 1e-11) {
    const Task task = endpoint_regression_task(4, std::sqrt(lambda));
    return solve_linear(task, hp(1, 1, 1, 0), arch, 0.05, gtol);
}

double max_offdiag(const Matrix& m) {
    double r = 0.0;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            if (i != j) r = std::max(r, std::abs(m(i, j)));
    return r;
}

// --- 1: symmetry-breaking threshold location, flat phase, quoted amplitude --

bool criterion_01() {
    bool ok = critical_lambda() == 8.0;
    note(fmt("critical_lambda() = %.17g (want exactly 8)", critical_lambda()));

    for (double lam : {4.0, 6.0, 7.5}) {
        const auto rep = transition_solve(lam, ArchMask::RNN);
        const double d = rep.H_star.data(2, 1);
        const bool flat = rep.converged && std::abs(d) <= 1e-6;
        note(fmt("lambda=%.2f: |d| = %.3e (<= 1e-6: %s)", lam, std::abs(d), flat ? "yes" : "NO"));
        ok = ok && flat;
    }

    for (double lam : {8.5, 9.0}) {
        const auto rep = transition_solve(lam, ArchMask::RNN);
        const double d = rep.H_star.data(2, 1);
        const double d2 = d * d;
        const double expect = 0.8 * (lam - 8.0);
        const double rel = std::abs(d2 - expect) / expect;
        note(fmt("lambda=%.2f: d^2 = %.6f, quoted asymptote 0.8*(lambda-8) = %.6f, rel err %.3f "
                 "(need <= 0.15)",
                 lam, d2, expect, rel));
        ok = ok && rep.converged && rel <= 0.15;
    }
    return ok;
}

// --- 2: mean-field exponent beta = 1/2 --------------------------------------

bool criterion_02() {
    const std::vector<double> lambdas = {8.05, 8.1, 8.15, 8.2, 8.3, 8.4, 8.5};
    std::vector<double> xs, ys;
    bool solves = true;
    for (double lam : lambdas) {
        const auto rep = transition_solve(lam, ArchMask::RNN, 1e-12);
        solves = solves && rep.converged;
        const double d = std::abs(rep.H_star.data(2, 1));
        xs.push_back(std::log(lam - 8.0));
        ys.push_back(std::log(d));
    }
    const auto n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    note(fmt("log|d*| vs log(lambda-8) slope = %.4f over lambda in [8.05, 8.5] (want 0.50 +/- "
             "0.05)",
             slope));
    return solves && std::abs(slope - 0.5) <= 0.05;
}

// --- 3: no deep-network symmetry breaking at any coupling -------------------

bool criterion_03() {
    bool ok = true;
    double worst = 0.0;
    for (int j = 1; j <= 20; ++j) {
        const double lam = 5.0 * j;
        const auto rep = transition_solve(lam, ArchMask::DNN);
        const double off = max_offdiag(rep.H_star.data);
        worst = std::max(worst, off);
        ok = ok && rep.converged && off <= 1e-6;
    }
    note(fmt("max |offdiag| over 20 couplings in [5, 100]: %.3e (need <= 1e-6)", worst));
    return ok;
}

// --- 4: critical diagonal in closed form ------------------------------------

bool criterion_04() {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    bool ok = true;
    double worst = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const double u = unif(rng), w = unif(rng), v = unif(rng);
        const LandauPoint p = diagonal_foc_solve(critical_lambda(), u, w, v);
        const double err = std::max({std::abs(p.a - 2 * u), std::abs(p.c - 4 * u * w),
                                     std::abs(p.e - 8 * u * w * w)});
        worst = std::max(worst, err);
        note(fmt("u=%.3f w=%.3f v=%.3f: (a, c, e) err vs (2u, 4uw, 8uw^2) = %.3e", u, w, v, err));
        ok = ok && err <= 1e-8;
    }
    return ok;
}

// --- 5: stationarity identity at every converged optimum --------------------

bool criterion_05() {
    std::vector<Task> tasks;
    for (double lam : {0.5, 8.5, 12.0})
        tasks.push_back(endpoint_regression_task(4, std::sqrt(lam)));
    tasks.push_back(sinusoid_task(5));
    tasks.push_back(teacher_rotation_task(5, 0.7, 0.0, {2, 4}));

    bool ok = true;
    int solved = 0;
    double worst = 0.0;
    for (const auto& task : tasks) {
        for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
            for (double kappa : {0.0, 0.1}) {
                const auto rep = solve_linear(task, hp(1, 1, 1, kappa), arch, 1e-3, 1e-9);
                if (!rep.converged) {
                    note(fmt("%s %s kappa=%.1f: DID NOT CONVERGE (%s)", task.name.c_str(),
                             to_string(arch).c_str(), kappa, rep.status.c_str()));
                    ok = false;
                    continue;
                }
                ++solved;
                worst = std::max(worst, rep.closed_form_residual);
                ok = ok && rep.closed_form_residual <= 1e-6;
            }
        }
    }
    note(fmt("%d/20 solves converged; worst closed-form residual %.3e (need <= 1e-6)", solved,
             worst));
    return ok;
}

// --- 6: analytic gradients against central finite differences ---------------

bool criterion_06() {
    bool ok = true;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;

    // Kernel-space objective gradient.
    int pts = 0;
    double worst_obj = 0.0;
    for (int variant = 0; variant < 2; ++variant) {
        const Task task = variant == 0 ? teacher_rotation_task(4, 0.7, 0.0, {2, 4})
                                       : endpoint_regression_task(4, 1.7);
        for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
            for (double kappa : {0.0, 0.3}) {
                const HyperParams hy = hp(1, 1, 1, kappa);
                const auto obj = make_linear_objective(task, hy, arch);
                Matrix A = nngp_kernel(task, hy, arch, Activation::Linear).data;
                for (int r = 0; r < 3; ++r) {
                    Matrix V = Matrix::Zero(A.rows(), A.cols());
                    for (int i = 0; i < V.rows(); ++i)
                        for (int j = 0; j < V.cols(); ++j) V(i, j) = gauss(rng);
                    V = Matrix((V + V.transpose()) / 2);
                    const Matrix G = grad_neg_log_p(A, obj);
                    const double h = 1e-5;
                    const double fd =
                        (neg_log_p(Matrix(A + h * V), obj) - neg_log_p(Matrix(A - h * V), obj)) /
                        (2 * h);
                    const double dir = (G.array() * V.array()).sum();
                    const double rel = std::abs(fd - dir) / std::max(1.0, std::abs(dir));
                    worst_obj = std::max(worst_obj, rel);
                    ok = ok && rel < 1e-5;
                    ++pts;
                }
            }
        }
    }
    note(fmt("objective gradient: %d points, worst rel err %.3e (need < 1e-5)", pts, worst_obj));

    // Weight-space training gradient.
    const Task task = teacher_rotation_task(4, 0.7, 0.0, {2, 4});
    HyperParams hy = hp(1.2, 0.8, 1.5, 0.4);
    hy.N = 5;
    hy.D = 2;
    int wpts = 0;
    double worst_w = 0.0;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        for (Activation act : {Activation::Linear, Activation::Erf}) {
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                WeightState s = init_weights(task, hy, arch, seed);
                WeightState dU = s;
                for (int i = 0; i < dU.U.rows(); ++i)
                    for (int j = 0; j < dU.U.cols(); ++j) dU.U(i, j) = gauss(rng);
                for (auto& Wb : dU.W)
                    for (int i = 0; i < Wb.rows(); ++i)
                        for (int j = 0; j < Wb.cols(); ++j) Wb(i, j) = gauss(rng);
                for (int i = 0; i < dU.V.size(); ++i) dU.V(i) = gauss(rng);

                const auto g = loss_and_gradients(s, task, act);
                double dir = (g.gU.array() * dU.U.array()).sum() +
                             (g.gV.array() * dU.V.array()).sum();
                for (size_t b = 0; b < g.gW.size(); ++b)
                    dir += (g.gW[b].array() * dU.W[b].array()).sum();

                const double h = 1e-5;
                WeightState sp = s, sm = s;
                sp.U += h * dU.U;
                sm.U -= h * dU.U;
                for (size_t b = 0; b < s.W.size(); ++b) {
                    sp.W[b] += h * dU.W[b];
                    sm.W[b] -= h * dU.W[b];
                }
                sp.V += h * dU.V;
                sm.V -= h * dU.V;
                const double fd =
                    (loss_and_gradients(sp, task, act).potential -
                     loss_and_gradients(sm, task, act).potential) /
                    (2 * h);
                const double rel = std::abs(fd - dir) / std::max(1.0, std::abs(dir));
                worst_w = std::max(worst_w, rel);
                ok = ok && rel < 1e-6;
                ++wpts;
            }
        }
    }
    note(fmt("training gradient: %d points, worst rel err %.3e (need < 1e-6)", wpts, worst_w));
    return ok;
}

// --- 7: second-order expansion error is third order -------------------------

bool criterion_07() {
    const std::vector<double> scales = {0.025, 0.0125, 0.00625, 0.003125};
    bool ok = true;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        const auto rows =
            expansion_error(sinusoid_task(4), hp(1, 1, 1, 0.5), arch, scales, tight_opts(1e-12));
        for (size_t i = 1; i < rows.size(); ++i) {
            note(fmt("%s scale %.6f: |H*-(H0+D1+D2)| = %.3e, shrink x%.2f (need in [6, 10])",
                     to_string(arch).c_str(), rows[i].scale, rows[i].err_order2, rows[i].ratio));
            ok = ok && rows[i].ratio >= 6.0 && rows[i].ratio <= 10.0;
        }
    }
    return ok;
}

// --- 8: cross-time mixing appears only with recurrent weight sharing --------

bool criterion_08() {
    const Task task = teacher_rotation_task(4, 0.7, 0.0, {2, 4});
    const HyperParams hy = hp(1, 1, 1, 0.5);
    bool ok = true;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        const Kernel H0 = nngp_kernel(task, hy, arch, Activation::Linear);
        Kernel Y = label_kernel(task);
        Y.data *= 0.04;  // label scale 0.2
        const Kernel D1 = delta1(H0, Y, hy, arch);
        const Kernel D2 = delta2(H0, D1, Y, hy, arch);
        const double cross = std::abs(D2.data(2, 0));  // hidden times (3, 1)
        if (arch == ArchMask::RNN) {
            note(fmt("RNN second-order cross-time entry (t3, t1) = %.3e (want nonzero)", cross));
            ok = ok && cross > 1e-10;
        } else {
            note(fmt("DNN second-order cross-time entry (t3, t1) = %.3e (want <= 1e-12)", cross));
            ok = ok && cross <= 1e-12;
        }
    }
    return ok;
}

// --- 9: trained finite networks approach the kernel theory ------------------

bool criterion_09() {
    const Task task = sinusoid_task(5);
    HyperParams hy = hp(1, 1, 1, 0.5);

    const auto obj = make_nonlinear_objective(task, hy, ArchMask::RNN, Activation::Erf);
    SamplerConfig sampler;
    sampler.method = SamplerMethod::Quadrature;
    sampler.n_samples = 40000;
    const SaddleState sol = solve_saddle(obj, init_saddle(obj), sampler);
    bool ok = sol.converged;
    if (!ok) note("theory saddle did not converge");

    // The step size scales as 1/N (the readout prior stiffens with width), so
    // the integration bias is width-independent and the residual CKA gap is
    // the genuine finite-width effect.
    std::vector<double> medians;
    for (long long N : {64LL, 256LL, 1024LL}) {
        hy.N = N;
        const double ds = 0.6 / static_cast<double>(N);
        SGLDConfig cfg;
        cfg.ds = ds;
        cfg.n_steps = static_cast<long long>(20.0 / ds);
        cfg.thin = std::max<long long>(1, cfg.n_steps / 2000);
        std::vector<double> scores;
        for (std::uint64_t seed : {1, 2, 3}) {
            cfg.seed = seed;
            const TrainResult res =
                train_and_measure(task, hy, Activation::Erf, ArchMask::RNN, cfg);
            scores.push_back(cka(res.C_exp, sol.C));
        }
        std::sort(scores.begin(), scores.end());
        medians.push_back(scores[1]);
        note(fmt("N=%4lld: CKA(C_exp, C_theory) seeds {%.5f, %.5f, %.5f}, median %.5f", N,
                 scores[0], scores[1], scores[2], scores[1]));
    }
    ok = ok && medians[0] <= medians[1] && medians[1] <= medians[2] && medians[2] >= 0.9;

    // Without labels the Gibbs measure is the muP prior itself: every weight
    // block's stationary variance must sit on its prior value.
    Task free_task = endpoint_classification(2, 8);
    free_task.grid = TimeGrid(free_task.grid.T, {});
    HyperParams fh = hp(1.2, 0.7, 1.5, 2.0);
    fh.N = 16;
    fh.D = 8;
    SGLDConfig fcfg;
    fcfg.ds = 4e-3;
    fcfg.n_steps = 60000;
    WeightState st = init_weights(free_task, fh, ArchMask::RNN, 11);
    double sU = 0, sW = 0, sV = 0;
    long long n_acc = 0;
    for (long long step = 0; step < fcfg.n_steps; ++step) {
        sgld_step(st, free_task, fh, Activation::Erf, fcfg, step);
        if (step >= fcfg.n_steps / 3 && step % 5 == 0) {
            sU += st.U.array().square().mean();
            sW += st.W[0].array().square().mean();
            sV += st.V.array().square().mean();
            ++n_acc;
        }
    }
    const double rU = (sU / n_acc) / fh.G_U();
    const double rW = (sW / n_acc) / fh.G_W();
    const double rV = (sV / n_acc) / fh.G_V();
    note(fmt("label-free variance / prior: U %.4f, W %.4f, V %.4f (need within 0.05 of 1)", rU,
             rW, rV));
    ok = ok && std::abs(rU - 1) <= 0.05 && std::abs(rW - 1) <= 0.05 && std::abs(rV - 1) <= 0.05;
    return ok;
}

// --- 10: finite-width transition matches the kernel prediction --------------

bool criterion_10() {
    const double u = 0.1, w = 0.05, v = 100.0, kappa = 0.1, x_scale = 64.0;
    const double u_eff = u * x_scale * x_scale;
    HyperParams hy = hp(u, w, v, kappa);
    hy.N = 2048;

    bool ok = true;
    for (double lam : {6.0, 7.0, 8.0, 9.0, 10.0, 12.0}) {
        const auto y_of = [&](double l) { return std::sqrt(l * u_eff * w * w * v); };
        const Task task = endpoint_regression_task(4, y_of(lam), x_scale);

        // Theory value and its spread under a 5% systematic on the coupling.
        double th_lo = 1e300, th_hi = -1e300, th = 0;
        for (double l : {lam, 0.95 * lam, 1.05 * lam}) {
            const Task t2 = endpoint_regression_task(4, y_of(l), x_scale);
            const auto rep = solve_linear(t2, hy, ArchMask::RNN, 0.05, 1e-10);
            ok = ok && rep.converged;
            const double val = std::abs(rep.H_star.data(2, 1));
            if (l == lam) th = val;
            th_lo = std::min(th_lo, val);
            th_hi = std::max(th_hi, val);
        }

        SGLDConfig cfg;
        cfg.ds = 3e-3;
        cfg.n_steps = 12000;
        cfg.thin = 6;
        std::vector<double> vals;
        for (std::uint64_t seed : {1, 2, 3}) {
            cfg.seed = seed;
            const TrainResult res =
                train_and_measure(task, hy, Activation::Linear, ArchMask::RNN, cfg);
            vals.push_back(std::abs(res.H_exp.data(2, 1)));
        }
        const double mean = (vals[0] + vals[1] + vals[2]) / 3.0;
        double var = 0;
        for (double x : vals) var += (x - mean) * (x - mean) / 2.0;
        const double se = std::sqrt(var / 3.0);
        const double band = 3.0 * se + std::max(th_hi - th, th - th_lo);
        const bool hit = std::abs(mean - th) <= band;
        note(fmt("lambda=%.1f: |H32| exp %.4f +/- %.4f (3 seeds), theory %.4f, band %.4f -> %s",
                 lam, mean, se, th, band, hit ? "ok" : "MISS"));
        ok = ok && hit;
    }
    return ok;
}

// --- 11: recurrent weight sharing wins on sparse supervision ----------------

bool criterion_11() {
    bool ok = true;

    // Without labels both architectures predict zero off supervision; for the
    // deep mask this holds at every unsupervised time even when trained.
    const Task full = teacher_rotation_task(5, 0.7, 0.0, {2, 4});
    const HyperParams hy = hp(1, 1, 0.05, 0);
    const auto rep_dnn = solve_linear(full, hy, ArchMask::DNN, 1e-3, 1e-10);
    const auto pr_dnn = sequence_predictor(rep_dnn.H_star, full, hy);
    double dnn_unsup = 0;
    for (int t = 2; t <= full.grid.T; ++t)
        if (!full.grid.is_supervised(t))
            dnn_unsup = std::max(dnn_unsup, pr_dnn.f.row(t - 2).cwiseAbs().maxCoeff());
    note(fmt("DNN predictions at unsupervised times: max |f| = %.3e (need <= 1e-8)", dnn_unsup));
    ok = ok && rep_dnn.converged && dnn_unsup <= 1e-8;

    for (int k : {2, 3}) {
        const auto sup = spread_supervised(5, k);
        const Task task = teacher_rotation_task(5, 0.7, 0.0, sup);
        double loss[2];
        int idx = 0;
        bool conv = true;
        for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
            const auto rep = solve_linear(task, hy, arch, 1e-3, 1e-10);
            conv = conv && rep.converged;
            loss[idx++] = sequence_predictor(rep.H_star, task, hy).loss;
        }
        note(fmt("supervised count %d: RNN loss %.6f vs DNN loss %.6f (want RNN < DNN)", k,
                 loss[0], loss[1]));
        ok = ok && conv && loss[0] < loss[1];
    }
    return ok;
}

// --- 12: nonlinear saddle behaves and reduces to the linear solver ----------

bool criterion_12() {
    bool ok = true;

    // Erf: the learned interior correlation grows monotonically with the
    // supervision strength.
    double prev = -1e300;
    bool increasing = true;
    for (double lam : {2.0, 4.0, 8.0, 16.0, 32.0}) {
        const Task task = endpoint_regression_task(4, std::sqrt(lam));
        const auto obj = make_nonlinear_objective(task, hp(1, 1, 1, 0.5), ArchMask::RNN,
                                                  Activation::Erf);
        SamplerConfig sampler;
        sampler.method = SamplerMethod::Quadrature;
        sampler.n_samples = 40000;
        const SaddleState sol = solve_saddle(obj, init_saddle(obj), sampler);
        const double off = sol.C.data(1, 2);
        note(fmt("erf lambda=%.0f: converged=%d, C(t2,t3) = %.6f", lam, int(sol.converged), off));
        ok = ok && sol.converged;
        increasing = increasing && off > prev;
        prev = off;
    }
    note(fmt("erf interior off-diagonal increasing with coupling: %s", increasing ? "yes" : "NO"));
    ok = ok && increasing;

    // Linear activation: the saddle must agree with the direct optimizer.
    const Task task = sinusoid_task(5);
    const HyperParams hy = hp(1, 1, 10, 0);
    const auto obj = make_nonlinear_objective(task, hy, ArchMask::RNN, Activation::Linear);
    const auto rep = solve_map(make_linear_objective(task, hy, ArchMask::RNN),
                               nngp_kernel(task, hy, ArchMask::RNN, Activation::Linear),
                               tight_opts(1e-10));
    ok = ok && rep.converged;

    SamplerConfig analytic;
    analytic.method = SamplerMethod::AnalyticLinear;
    const SaddleState sa = solve_saddle(obj, init_saddle(obj), analytic);
    const double gap_a = (sa.H_eql.data - rep.H_star.data).cwiseAbs().maxCoeff();
    note(fmt("analytic linear saddle vs direct optimum: max |dH| = %.3e (need <= 1e-2)", gap_a));
    ok = ok && sa.converged && gap_a <= 1e-2;

    SamplerConfig is;
    is.method = SamplerMethod::ImportanceFromBase;
    is.n_samples = 40000;
    is.seed = 5;
    const SaddleState si = solve_saddle(obj, init_saddle(obj), is);
    const auto grads = saddle_gradients(si, obj, is);
    const Matrix gap = (si.H_eql.data - rep.H_star.data).cwiseAbs();
    const Matrix band = (3.0 * grads.moments.se_H_mat.array()).cwiseMax(1e-2).matrix();
    const double excess = (gap - band).maxCoeff();
    note(fmt("sampled linear saddle vs direct optimum: max excess over max(1e-2, 3 SE) = %.3e",
             excess));
    ok = ok && si.converged && excess <= 0.0;
    return ok;
}

// --- 13: infinite-slack limit of the supervision projector ------------------

bool criterion_13() {
    const TimeGrid grid(6, {3, 6});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    bool ok = true;
    for (int trial = 0; trial < 3; ++trial) {
        Kernel A(grid, 1, TimeRange::Output);
        Matrix R(A.dim(), A.dim());
        for (int i = 0; i < R.rows(); ++i)
            for (int j = 0; j < R.cols(); ++j) R(i, j) = gauss(rng);
        A.set_data(Matrix(R * R.transpose() + 0.5 * Matrix::Identity(A.dim(), A.dim())));

        const Kernel P = partial_supervision_projector(grid, A);

        double unsup_mass = 0.0;
        Matrix Q = Matrix::Zero(A.dim(), A.dim());
        for (int i = 0; i < A.dim(); ++i) {
            if (grid.is_supervised(A.times[static_cast<size_t>(i)])) continue;
            Q(i, i) = 1.0;
            unsup_mass = std::max(unsup_mass,
                                  std::max(P.data.row(i).cwiseAbs().maxCoeff(),
                                           P.data.col(i).cwiseAbs().maxCoeff()));
        }
        const Matrix direct = Matrix(A.data + 1e12 * Q).inverse();
        const double gap = (P.data - direct).cwiseAbs().maxCoeff();
        note(fmt("trial %d: unsupervised rows/cols max |entry| = %.3e (<= 1e-12), vs direct "
                 "1e12-penalty inverse max gap = %.3e (<= 1e-6)",
                 trial, unsup_mass, gap));
        ok = ok && unsup_mass <= 1e-12 && gap <= 1e-6;
    }
    return ok;
}

using CriterionFn = bool (*)();

struct Entry {
    CriterionFn fn;
    const char* what;
};

const Entry kCriteria[] = {
    {criterion_01, "transition threshold, flat phase, quoted amplitude"},
    {criterion_02, "order-parameter exponent 1/2"},
    {criterion_03, "no deep-network symmetry breaking"},
    {criterion_04, "critical diagonal closed form"},
    {criterion_05, "closed-form stationarity at every optimum"},
    {criterion_06, "gradients vs finite differences"},
    {criterion_07, "third-order expansion error decay"},
    {criterion_08, "cross-time mixing only under weight sharing"},
    {criterion_09, "trained networks approach kernel theory with width"},
    {criterion_10, "finite-width transition tracks theory"},
    {criterion_11, "recurrent interpolation beats deep masking"},
    {criterion_12, "nonlinear saddle monotonicity and linear reduction"},
    {criterion_13, "supervision projector infinite-slack limit"},
};

void run_criterion(int id) {
    const Entry& e = kCriteria[id - 1];
    bool ok = false;
    std::string detail = e.what;
    try {
        ok = e.fn();
    } catch (const std::exception& ex) {
        detail = fmt("%s [exception: %s]", e.what, ex.what());
        ok = false;
    }
    report(id, ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) {
        const int id = std::atoi(argv[i]);
        if (id < 1 || id > 13) {
            std::fprintf(stderr, "unknown criterion %s (valid: 1..13)\n", argv[i]);
            return 2;
        }
        ids.push_back(id);
    }
    if (ids.empty())
        for (int id = 1; id <= 13; ++id) ids.push_back(id);
    for (int id : ids) run_criterion(id);
    return g_failures;
}
