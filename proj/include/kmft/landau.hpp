#pragma once

#include <vector>

#include "kmft/kernelspace.hpp"
#include "kmft/linear_mft.hpp"

namespace kmft {

// T=4 endpoint-supervised transition analytics. The hidden 3x3 kernel is
// parameterized as [[a, b2, b3], [b2, c, d], [b3, d, e]]; lambda = y^2/(u w^2 v).
struct LandauPoint {
    double a = 0, c = 0, e = 0;
    double b2 = 0, b3 = 0, d = 0;
    double lambda = 0;
    ArchMask arch = ArchMask::RNN;
};

// Solves the diagonal first-order conditions a^2 = (u/w) c, e = c^2/a and the
// scalar e-condition 1/e - 1/(wc) + lambda u w^2 / e^2 = 0 by bracketed
// bisection with a Newton polish; off-diagonals zero.
LandauPoint diagonal_foc_solve(double lambda, double u, double w, double v,
                               ArchMask arch = ArchMask::RNN);

// Curvature of the reduced objective in d at d=0:
// RNN: -1/(ce) + 1/(w(c^2 + ae)); DNN: -1/(ce).
double quadratic_coefficient(const LandauPoint& p, double w);

// The critical signal strength of the T=4 transition.
double critical_lambda();

// Leading-order squared off-diagonal d*^2 = C2 c^2 e^2 on the diagonal FOC
// point, clipped at zero below threshold (DNN: always zero, C2 < 0).
double order_parameter(double lambda, double u, double w, double v,
                       ArchMask arch = ArchMask::RNN);

// b2 = alpha d + O(d^3) with alpha = ac/(c^2+ae) (RNN) or 0 (DNN);
// second component is the b3 = (alpha/c) d^2 coefficient.
struct SlavingCoefficients {
    double alpha = 0;
    double b3_over_d2 = 0;
};
SlavingCoefficients slaving_coefficients(const LandauPoint& p);

struct SweepRow {
    double lambda;
    ArchMask arch;
    double d2_theory;
    double d2_solver;
    double C2;
    double a, c, e;
};

// Theory and full-solver order parameter across a lambda grid (T=4 endpoint
// task, kappa=0).
std::vector<SweepRow> lambda_sweep(const std::vector<double>& lambdas, double u,
                                   double w, double v,
                                   const std::vector<ArchMask>& archs,
                                   const SolverOptions& opts = {});

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace kmft
