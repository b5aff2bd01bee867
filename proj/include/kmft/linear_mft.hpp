#pragma once

#include <optional>

#include "kmft/kernelspace.hpp"
#include "kmft/nngp.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Negative log-probability over hidden-time kernels H (linear activation):
//   E(H) = 1/2 tr[Y_T A(H)^-1] + 1/2 tr[H Sigma(H)^-1] - 1/2 ln det H
//          + 1/2 ln det Sigma(H),
// with Sigma(H) = w M[H^-] + u X^- and A(H) = v H^-_T + kappa.
// All matrices live on the flattened hidden (time, pattern) index.
struct LinearObjective {
    TimeGrid grid;
    int P = 1;
    HyperParams hyper;
    ArchMask mask = ArchMask::RNN;
    Matrix Xm;        // u-unscaled input kernel re-indexed to hidden times
    Matrix Y_sup;     // label kernel restricted to supervised times
    std::vector<int> sup_pos;  // hidden-range positions carrying supervision
    double kappa_floor = 1e-12;

    int dim() const { return grid.n_times() * P; }
    int sup_dim() const { return static_cast<int>(sup_pos.size()) * P; }

    Matrix sigma(const Matrix& H) const;
    Matrix label_gram(const Matrix& H) const;  // A(H), with kappa floor at kappa=0
};

LinearObjective make_linear_objective(const Task& task, const HyperParams& hyper,
                                      ArchMask mask);

double neg_log_p(const Matrix& H, const LinearObjective& obj);
Matrix grad_neg_log_p(const Matrix& H, const LinearObjective& obj);

double neg_log_p(const Kernel& H, const LinearObjective& obj);
Kernel grad_neg_log_p(const Kernel& H, const LinearObjective& obj);

// Max-abs residual of the closed-form stationarity relation
//   Sigma^-1 - H^-1 = w M[(Sigma^-1 (H - Sigma) Sigma^-1)^+] + v P_T[A^-1 Y A^-1],
// the boundary handled by zero-filling the shift at the last hidden time
// (the H-tilt vanishes there). Equals |2 grad|_inf by construction.
double closed_form_residual(const Matrix& H, const LinearObjective& obj);
double closed_form_residual(const Kernel& H, const LinearObjective& obj);

struct SolverOptions {
    double gtol = 1e-9;       // on |grad|_inf in H space
    int max_iter = 2000;
    double sym_break_eps = 1e-3;
    int cg_max_iter = 0;      // 0: 2 * number of variables
    bool verbose = false;
};

struct SolveReport {
    Kernel H_star;
    double objective_value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    double closed_form_residual = 0.0;
    bool converged = false;
    std::string status;
};

// NNGP initialization plus a symmetry-breaking perturbation on the first
// time-off-diagonal band.
Kernel symmetry_breaking_init(const Kernel& H0, double eps);

// Newton-CG on the Cholesky factor of H (PSD by construction); analytic
// gradient and exact Hessian-vector products. Deterministic.
SolveReport solve_map(const LinearObjective& obj, const Kernel& init,
                      const SolverOptions& opts = {});

// kappa_inf -> infinity Woodbury limit of (A + kappa_inf U U^T)^-1 where U
// spans the unsupervised directions: embeds inv(A_TT) at the supervised
// block, exact zeros elsewhere.
Kernel partial_supervision_projector(const TimeGrid& grid, const Kernel& A);

void write_solve_report(const std::string& path, const SolveReport& report,
                        const std::string& kernel_csv_path);

}  // namespace kmft
