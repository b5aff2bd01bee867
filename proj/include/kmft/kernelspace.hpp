#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kmft/errors.hpp"

namespace kmft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Time bookkeeping for an unrolled network with T total timesteps.
// Inputs live on 0..T-2, hidden states on 1..T-1, outputs on 2..T;
// each range has T-1 elements. `supervised` is a subset of the output range.
struct TimeGrid {
    int T = 2;
    std::vector<int> supervised;  // sorted, subset of 2..T

    TimeGrid() = default;
    TimeGrid(int T_total, std::vector<int> supervised_times);

    int n_times() const { return T - 1; }
    std::vector<int> input_times() const;
    std::vector<int> hidden_times() const;
    std::vector<int> output_times() const;
    bool is_supervised(int t) const;

    bool operator==(const TimeGrid&) const = default;
};

enum class TimeRange { Input, Hidden, Output };

std::string to_string(TimeRange r);
TimeRange time_range_from_string(const std::string& s);

enum class ArchMask { RNN, DNN };

std::string to_string(ArchMask m);
ArchMask arch_from_string(const std::string& s);

// Intensive scales; extensive weight variances are derived, never stored.
struct HyperParams {
    double u = 1.0;
    double w = 1.0;
    double v = 1.0;
    double kappa = 0.0;
    long long N = 1;
    long long D = 1;

    double G_U() const { return u / static_cast<double>(D); }
    double G_W() const { return w / static_cast<double>(N); }
    double G_V() const { return v / (static_cast<double>(N) * static_cast<double>(N)); }
    double Kap() const { return kappa / static_cast<double>(N); }

    void validate() const;
};

// Symmetric kernel over the joint (time, pattern) index space.
// `times` lists the physical time of each block; flattening is time-major,
// pattern-minor: flat(t_idx, p) = t_idx*P + p.
struct Kernel {
    TimeGrid grid;
    int P = 1;
    std::vector<int> times;
    Matrix data;

    Kernel() = default;
    Kernel(TimeGrid g, int P_, TimeRange range);
    Kernel(TimeGrid g, int P_, std::vector<int> times_, Matrix data_);

    int dim() const { return static_cast<int>(times.size()) * P; }
    int flat(int t_idx, int p) const { return t_idx * P + p; }
    int time_index(int t) const;  // -1 if t not present

    void set_data(const Matrix& m);  // symmetrizes on write

    double max_abs() const { return data.size() ? data.cwiseAbs().maxCoeff() : 0.0; }
};

Matrix symmetrized(const Matrix& m);

// Entry (t,t') of the result reads K^{t-1,t'-1} (shift_minus) or K^{t+1,t'+1}
// (shift_plus); times outside K's stored range contribute exact zeros
// (zero-initial-state convention). `target` selects the range the result is
// indexed on; the default Hidden covers every use in the saddle equations.
Kernel shift_minus(const Kernel& K, TimeRange target = TimeRange::Hidden);
Kernel shift_plus(const Kernel& K, TimeRange target = TimeRange::Hidden);

// General physical-time re-indexing: entry (t,t') reads K^{t+dt,t'+dt}.
Kernel shifted(const Kernel& K, TimeRange target, int dt);

// M[.]: identity for RNN; zeroes time-off-diagonal blocks for DNN.
Kernel apply_mask(ArchMask mask, const Kernel& K);
Matrix apply_mask_matrix(ArchMask mask, const Matrix& m, int P);

// Principal submatrix on the supervised times of K's range.
Kernel restrict_supervised(const Kernel& K, const TimeGrid& grid);

// Zero-filled embedding of a supervised-restricted kernel back into `times`.
Kernel embed_supervised(const Kernel& K_restricted, const TimeGrid& grid,
                        const std::vector<int>& times);

// Eigenvalue clip to >= floor; symmetric output.
Kernel project_psd(const Kernel& K, double floor);
Matrix project_psd_matrix(const Matrix& m, double floor);

double min_eigenvalue(const Matrix& m);

// Dense CSV (one-line header: range,T,P) plus a JSON metadata sidecar at
// path + ".json". Round-trip relative error <= 1e-15.
void write_kernel_csv(const std::string& path, const Kernel& K,
                      const std::string& provenance = "");
Kernel read_kernel_csv(const std::string& path);

}  // namespace kmft
