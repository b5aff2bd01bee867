#include "kmft/nngp.hpp"

#include <cmath>

namespace kmft {

std::string to_string(Activation a) { return a == Activation::Linear ? "linear" : "erf"; }

Activation activation_from_string(const std::string& s) {
    if (s == "linear" || s == "Linear") return Activation::Linear;
    if (s == "erf" || s == "Erf") return Activation::Erf;
    throw InvalidShape("unknown activation: " + s);
}

double phi(Activation act, double h) {
    return act == Activation::Linear ? h : std::erf(0.5 * std::sqrt(M_PI) * h);
}

double phi_prime(Activation act, double h) {
    return act == Activation::Linear ? 1.0 : std::exp(-0.25 * M_PI * h * h);
}

double gaussian_phi_moment(Activation act, double hii, double hjj, double hij) {
    if (act == Activation::Linear) return hij;
    const double a = 0.5 * M_PI;  // 2*(sqrt(pi)/2)^2
    const double den = std::sqrt((1.0 + a * hii) * (1.0 + a * hjj));
    double r = a * hij / den;
    r = std::min(1.0, std::max(-1.0, r));
    return 2.0 / M_PI * std::asin(r);
}

Matrix gaussian_phi_moments(Activation act, const Matrix& H) {
    if (act == Activation::Linear) return H;
    Matrix C(H.rows(), H.cols());
    for (int i = 0; i < H.rows(); ++i)
        for (int j = 0; j < H.cols(); ++j)
            C(i, j) = gaussian_phi_moment(act, H(i, i), H(j, j), H(i, j));
    return symmetrized(C);
}

NngpResult nngp_kernel(const Task& task, const HyperParams& hyper, Activation act,
                       ArchMask mask, double overflow_bound) {
    hyper.validate();
    const Kernel X = input_kernel(task);
    const Kernel Xm = shift_minus(X);  // input -> hidden re-index
    const int max_iter = 4 * task.grid.T + 16;

    Kernel H(task.grid, task.P, TimeRange::Hidden);
    H.data = hyper.u * Xm.data;
    double residual = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        Kernel C = H;
        C.data = gaussian_phi_moments(act, H.data);
        const Kernel Cm = shift_minus(C);
        const Matrix next = hyper.w * apply_mask_matrix(mask, Cm.data, task.P) + hyper.u * Xm.data;
        residual = (H.data - next).cwiseAbs().maxCoeff();
        H.set_data(next);
        if (H.data.diagonal().maxCoeff() > overflow_bound)
            throw DivergentPrior("prior diagonal exceeds overflow bound");
        if (residual <= 1e-12) break;
    }

    NngpResult r;
    r.H0 = H;
    r.C0 = H;
    r.C0.data = gaussian_phi_moments(act, H.data);
    {
        const Kernel Cm = shift_minus(r.C0);
        const Matrix rhs = hyper.w * apply_mask_matrix(mask, Cm.data, task.P) + hyper.u * Xm.data;
        r.residual = (H.data - rhs).cwiseAbs().maxCoeff();
    }
    r.iterations = it + 1;
    return r;
}

}  // namespace kmft
