#pragma once

#include <string>
#include <vector>

#include "kmft/kernelspace.hpp"
#include "kmft/linear_mft.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

// Expansion of the optimal kernel around the prior fixed point H0 in powers
// of the label kernel Y: H = H0 + D1 + D2 + O(Y^3).  All operators below are
// exact linearizations of the stationarity condition; the expansion orders
// are solved as dense linear systems over the vectorized symmetric basis.

// Resolvents of the prior at the expansion point.
struct Propagators {
    Matrix G_h;       // inverse of H0 (equals inverse of w M[H0^-] + u X^-)
    Matrix G_h_plus;  // inverse of w M[H0] + u X, the one-step-ahead prior
    Matrix G_y;       // inverse of v H0_S + kappa on the supervised block
};

Propagators propagators(const Kernel& H0, const Kernel& X, const HyperParams& hyper,
                        ArchMask mask);

// First variation of the prior-consistency part of the stationarity residual
// at H0: L1[S] = G S G - G w M[S^-] G - w M[(G (S - w M[S^-]) G)^+], G = H0^{-1}.
Matrix l1_apply(const Matrix& S, const Matrix& G, const HyperParams& hyper, ArchMask mask,
                int P);

// Half the second variation applied twice to the same direction:
// the (D1)^2 source terms of the second-order system.
Matrix half_q_apply(const Matrix& S, const Matrix& G, const HyperParams& hyper, ArchMask mask,
                    int P);

// Label source R(H) = v embed_S[A^{-1} Y_S A^{-1}], A = v H_S + kappa, and its
// first variation dR[S] = -v^2 embed_S[A^{-1} S_S A^{-1} Y_S A^{-1} + transpose].
Matrix label_source(const Matrix& H0, const Matrix& Y_sup, const std::vector<int>& sup_pos,
                    const HyperParams& hyper, int P, int dim);
Matrix label_source_variation(const Matrix& S, const Matrix& H0, const Matrix& Y_sup,
                              const std::vector<int>& sup_pos, const HyperParams& hyper, int P,
                              int dim);

// Dense matrix of L1 over the vectorized symmetric basis (i <= j entries).
Matrix l1_matrix(const Matrix& G, const HyperParams& hyper, ArchMask mask, int P, int dim);

// First- and second-order corrections.  H0 on the hidden range, Y on the
// output range (zero outside the supervised set); results live on the hidden
// range.  Throws SingularSystem if the first-order operator is degenerate.
Kernel delta1(const Kernel& H0, const Kernel& Y, const HyperParams& hyper, ArchMask mask);
Kernel delta2(const Kernel& H0, const Kernel& D1, const Kernel& Y, const HyperParams& hyper,
              ArchMask mask);

// H0 + D1 + D2.
Kernel perturbative_kernel(const Kernel& H0, const Kernel& Y, const HyperParams& hyper,
                           ArchMask mask);

// Full-solver comparison at a list of label-kernel scales.  err_order1 and
// err_order2 are Frobenius distances of H*(s) from H0 + D1(s) and from
// H0 + D1(s) + D2(s); ratio is err_order2(previous row) / err_order2(this row)
// (0 for the first row); the second-order error shrinks as O(s^3).
struct ExpansionRow {
    double scale = 0.0;
    ArchMask arch = ArchMask::RNN;
    double err_order1 = 0.0;
    double err_order2 = 0.0;
    double ratio = 0.0;
};

std::vector<ExpansionRow> expansion_error(const Task& task, const HyperParams& hyper,
                                          ArchMask mask, const std::vector<double>& scales,
                                          const SolverOptions& opts = {});

void write_expansion_csv(const std::string& path, const std::vector<ExpansionRow>& rows);

}  // namespace kmft
