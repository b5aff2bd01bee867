#pragma once

#include <string>
#include <vector>

#include "kmft/kernelspace.hpp"

namespace kmft {

// Inputs x indexed (input_time, pattern, input_dim) and labels y indexed
// (output_time, pattern); y is meaningful only on supervised times.
struct Task {
    std::string name;
    TimeGrid grid;
    int P = 1;
    int D = 1;
    std::vector<Matrix> x;  // one P x D matrix per input time 0..T-2
    Matrix y;               // (T-1) x P over output times 2..T

    void validate() const;
};

// P=1, D=1, impulse input x^t = delta^{t0}, targets y^t = cos(2*pi*t/T),
// all output times supervised.
Task sinusoid_task(int T);

// P orthogonal patterns x^0_p = sqrt(D) e_p (so X^00 = I), balanced +-1
// labels, supervision only at the final time.
Task endpoint_classification(int P, int D);

// P=1, D=2, x^0 = (cos phi0, sin phi0); labels from the linear teacher
// y^t = V* (W*)^t U* x^0 with U* = I, V* = (1,0), W* = rotation by dphi.
Task teacher_rotation_task(int T, double dphi, double phi0,
                           const std::vector<int>& supervised);

// P=1, D=1 endpoint regression with x^0 = x_scale and label y at the final
// time; the single-pattern setting of the T=4 transition analysis.  The
// kernel theory depends on x_scale only through u * x_scale^2, so weight-space
// runs can trade input magnitude against u to balance mixing rates.
Task endpoint_regression_task(int T, double y_final, double x_scale = 1.0);

// X^{tt'}_{pp'} = (1/D) sum_i x^t_{p,i} x^{t'}_{p',i} on input times.
Kernel input_kernel(const Task& task);

// Y^{tt'}_{pp'} = y^t_p y^{t'}_{p'} on output times, zero outside supervised.
Kernel label_kernel(const Task& task);

void write_task_manifest(const std::string& path, const Task& task);

}  // namespace kmft
