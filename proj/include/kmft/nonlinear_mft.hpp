#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "kmft/kernelspace.hpp"
#include "kmft/linear_mft.hpp"
#include "kmft/nngp.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Saddle solver on the primal/dual kernel pair (C, C_tilde) for general
// activations.  The single-site measure over the stacked hidden vector is
//   P(h) ~ exp{ -1/2 h^T (w M[C^-] + u X^-)^{-1} h + phi(h)^T C_tilde phi(h) },
// and the stationarity conditions are C = <phi phi^T>, C_tilde = C_tilde_eql
// (label tilt plus forward-pass tilt).

enum class SamplerMethod {
    ImportanceFromBase,  // self-normalized IS from the base Gaussian
    LangevinRefine,      // unadjusted (preconditioned) Langevin chain
    AnalyticLinear,      // closed form; exact for Linear activation
    Quadrature,          // tensor Gauss-Hermite; deterministic, low dims only
};

std::string to_string(SamplerMethod m);
SamplerMethod sampler_method_from_string(const std::string& s);

struct SamplerConfig {
    SamplerMethod method = SamplerMethod::ImportanceFromBase;
    int n_samples = 20000;  // >= 1e4 for acceptance-grade runs
    double step = 0.05;     // Langevin step size
    int burn_in = 2000;     // Langevin burn-in steps
    std::uint64_t seed = 12345;
};

struct NonlinearObjective {
    LinearObjective lin;  // base covariance pieces, label block, supervision map
    Activation act = Activation::Erf;
    Kernel H0;  // prior fixed point for this activation
    Kernel C0;
};

NonlinearObjective make_nonlinear_objective(const Task& task, const HyperParams& hyper,
                                            ArchMask mask, Activation act);

struct SaddleState {
    Kernel C;
    Matrix C_tilde;
    Kernel H_eql;
    Kernel C_eql;
    int iteration = 0;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::string status = "init";
};

// C = prior C0 with symmetry-breaking eps on the first off-diagonal time
// band; C_tilde = 0 (the prior is the zero-label saddle).
SaddleState init_saddle(const NonlinearObjective& obj, double sym_break_eps = 1e-3);

struct MomentEstimate {
    Kernel H_eql;
    Kernel C_eql;
    double se_H = 0.0;   // max entrywise standard error
    double se_C = 0.0;
    Matrix se_H_mat;     // entrywise standard errors; empty for analytic moments
    Matrix se_C_mat;
    double ess = 0.0;
};

// Tilted-measure moments <h h^T> and <phi phi^T>.  Throws DegenerateTilt when
// the importance weights collapse (ESS < 1% of n_samples) or when the
// analytic tilted precision loses positive definiteness.
MomentEstimate single_site_moments(const SaddleState& state, const NonlinearObjective& obj,
                                   const SamplerConfig& sampler);

// grad_C = C_tilde - C_tilde_eql, grad_Ctilde = C - C_eql; both symmetric and
// zero (within MC error) exactly at the saddle.
struct SaddleGradients {
    Matrix gC;
    Matrix gCt;
    MomentEstimate moments;
    double noise = 0.0;  // 3x propagated MC standard error on the residual
};

SaddleGradients saddle_gradients(const SaddleState& state, const NonlinearObjective& obj,
                                 const SamplerConfig& sampler);

struct SaddleOptions {
    double eta = 0.2;       // extragradient step; anneals on plateaus
    double tol = 1e-5;      // residual target in the max norm
    double max_step = 0.25;  // trust-region cap on the max-norm update
    int max_iter = 50000;
    int stall_window = 200;  // iterations without 1% cumulative progress
    bool verbose = false;
};

// Extragradient iteration: descend C, ascend C_tilde, gradients recomputed at
// the half step; C kept PSD by projection.  Stops at max(tol, MC noise
// floor).  Throws MaxIterations or NonDecreasingResidual on failure.
SaddleState solve_saddle(const NonlinearObjective& obj, const SaddleState& init,
                         const SamplerConfig& sampler, const SaddleOptions& opts = {});

// Resumable checkpoints: <prefix>_C.csv, <prefix>_Ctilde.csv, <prefix>.json.
void save_saddle_checkpoint(const std::string& prefix, const SaddleState& state,
                            std::uint64_t seed);

struct SaddleCheckpoint {
    SaddleState state;
    std::uint64_t seed = 0;
};

SaddleCheckpoint load_saddle_checkpoint(const std::string& prefix);

}  // namespace kmft
