#pragma once

#include <string>
#include <vector>

#include "kmft/kernelspace.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Kernel-regression predictors and comparison metrics.

// f = v H^{T-,T-} (v H^{T-,T-} + kappa)^{-1} y on the last hidden block.
Vector endpoint_predictor(const Kernel& H, const Vector& y_endpoint, const HyperParams& hyper);

struct PredictorResult {
    Matrix f;               // output times x patterns
    double loss = 0.0;      // mean of per_time_loss
    Vector per_time_loss;   // per output time: mean_p (y - f)^2 / 2
};

// f^t = v H^{(t-1),S}(v H_SS + kappa)^{-1} y_S for every output time t; the
// Gram is restricted to the supervised hidden positions (the infinite-slack
// limit drops unsupervised rows).
PredictorResult sequence_predictor(const Kernel& H, const Task& task, const HyperParams& hyper);

// Cosine similarity of mean-centered vectorized matrices; invariant to
// positive scaling and constant shifts.  DegenerateInput on zero variance.
double cka(const Kernel& A, const Kernel& B);
double cka_matrix(const Matrix& A, const Matrix& B);

// Mean of C^{t,t-tau} over valid t for each lag tau >= 0 (single pattern).
Vector autocorrelation(const Kernel& C);

// CSV rows: (time, y, f, supervised_flag, squared_error), one per time and
// pattern.
void write_predictor_csv(const std::string& path, const Task& task, const PredictorResult& r);

}  // namespace kmft
