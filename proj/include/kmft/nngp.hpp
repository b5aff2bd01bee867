#pragma once

#include "kmft/kernelspace.hpp"
#include "kmft/tasks.hpp"

namespace kmft {

enum class Activation { Linear, Erf };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// phi(h) = h (Linear) or erf(sqrt(pi)/2 h) (Erf); both odd, slope 1 at 0.
double phi(Activation act, double h);
double phi_prime(Activation act, double h);

// <phi(h_i) phi(h_j)> for (h_i,h_j) ~ N(0, [[hii,hij],[hij,hjj]]),
// closed form for Linear and Erf (arcsine form, validated against MC).
double gaussian_phi_moment(Activation act, double hii, double hjj, double hij);

// C = <phi phi^T> entrywise under covariance H.
Matrix gaussian_phi_moments(Activation act, const Matrix& H);

struct NngpResult {
    Kernel H0;
    Kernel C0;
    double residual = 0.0;  // |H0 - (w M[C0^-] + u X^-)|_inf
    int iterations = 0;
};

// Prior kernels of the untrained network: fixed point of
// H = w M[C(H)^-] + u X^- on hidden times. Mask-independent for odd phi.
NngpResult nngp_kernel(const Task& task, const HyperParams& hyper, Activation act,
                       ArchMask mask, double overflow_bound = 1e12);

}  // namespace kmft
