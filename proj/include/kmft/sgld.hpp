#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmft/kernelspace.hpp"
#include "kmft/nngp.hpp"
#include "kmft/rng.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Weight-space ground truth: finite networks trained with stochastic
// gradient Langevin dynamics under the muP prior scalings
// G_U = u/D, G_W = w/N, G_V = v/N^2, Kap = kappa/N.

struct WeightState {
    Matrix U;                // N x D
    std::vector<Matrix> W;   // one N x N matrix (RNN) or T-2 matrices (DNN)
    Eigen::RowVectorXd V;    // 1 x N
    ArchMask arch = ArchMask::RNN;
    std::uint64_t rng_seed = 0;

    const Matrix& W_at(int j) const { return arch == ArchMask::RNN ? W[0] : W[static_cast<std::size_t>(j)]; }
    Matrix& W_at(int j) { return arch == ArchMask::RNN ? W[0] : W[static_cast<std::size_t>(j)]; }
};

// Weights drawn from their muP priors (the ergodic reference measure).
WeightState init_weights(const Task& task, const HyperParams& hyper, ArchMask arch,
                         std::uint64_t seed);

struct ForwardPass {
    std::vector<Matrix> h;   // hidden times 1..T-1, each N x P
    std::vector<Matrix> ph;  // phi(h), cached for gradients and kernels
    Matrix f;                // output times 2..T, shape (T-1) x P
};

// h^t = W^{(t-1)} phi(h^{t-1}) + U x^{t-1} with h^0 = 0; f^{t+1} = V phi(h^t).
ForwardPass forward(const WeightState& state, const Task& task, Activation act,
                    double overflow_bound = 1e12);

struct LossGradients {
    double potential = 0.0;  // 1/2 sum_{t in supervised, p} (y - f)^2
    Matrix gU;
    std::vector<Matrix> gW;  // per stored W block; RNN: summed over timesteps
    Eigen::RowVectorXd gV;
};

// Exact reverse accumulation through the unrolled computation.
LossGradients loss_and_gradients(const WeightState& state, const Task& task, Activation act,
                                 double overflow_bound = 1e12);

struct SGLDConfig {
    double ds = 1e-3;
    long long n_steps = 10000;
    long long burn_in = -1;  // -1: half of n_steps
    long long thin = 10;
    std::uint64_t seed = 1;
    double overflow_bound = 1e9;

    long long effective_burn_in() const { return burn_in >= 0 ? burn_in : n_steps / 2; }
    void validate() const;
};

// One Euler-Maruyama step of
//   theta <- theta - ds (grad potential + (Kap/G_theta) theta) + sqrt(2 Kap ds) xi,
// noise drawn from a stream derived from (state.rng_seed, step_index) in the
// fixed block order U, W..., V.  Returns the pre-step potential.
double sgld_step(WeightState& state, const Task& task, const HyperParams& hyper, Activation act,
                 const SGLDConfig& cfg, long long step_index);

struct TrainLogRow {
    long long step = 0;
    double loss = 0.0;  // potential / (P |supervised|), plain potential if unsupervised
    int snapshot_id = -1;
};

struct TrainResult {
    Kernel C_exp;  // mean of (1/N) phi(h) phi(h)^T over retained samples
    Kernel H_exp;  // mean of (1/N) h h^T
    Matrix f_mean;  // output times x patterns
    Matrix f_var;
    std::vector<TrainLogRow> log;
    int n_kernel_samples = 0;
    bool stationary = false;  // two-window loss-mean comparison, 5% threshold
    double loss_mean = 0.0;   // post-burn-in mean of the logged loss
};

// Full training run: per-step SGLD, kernels and predictor statistics averaged
// over post-burn-in, thinned samples.  `warm` optionally resumes from an
// existing state (sweep continuation).
TrainResult train_and_measure(const Task& task, const HyperParams& hyper, Activation act,
                              ArchMask arch, const SGLDConfig& cfg,
                              const WeightState* warm = nullptr,
                              WeightState* final_state = nullptr);

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& log);

// Run manifest: config, seed, and a content hash of the task inputs.
void write_run_manifest(const std::string& path, const Task& task, const HyperParams& hyper,
                        Activation act, ArchMask arch, const SGLDConfig& cfg,
                        const TrainResult& result);

}  // namespace kmft
