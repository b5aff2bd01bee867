#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kmft/kernelspace.hpp"
#include "kmft/nngp.hpp"
#include "kmft/tasks.hpp"

using namespace kmft;

namespace {

// Independent closed form for the erf pair moment: with phi(h) = erf(a h),
// a = sqrt(pi)/2, E[phi_i phi_j] = (2/pi) asin(2a^2 Hij / sqrt((1+2a^2 Hii)(1+2a^2 Hjj))).
double erf_moment_oracle(double hii, double hjj, double hij) {
    const double s = M_PI / 2.0;
    return (2.0 / M_PI) * std::asin(s * hij / std::sqrt((1.0 + s * hii) * (1.0 + s * hjj)));
}

double mc_phi_moment(Activation act, double hii, double hjj, double hij, int n,
                     unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // h_i = L z with L the Cholesky factor of [[hii, hij], [hij, hjj]]
    const double l11 = std::sqrt(hii);
    const double l21 = hij / l11;
    const double l22 = std::sqrt(hjj - l21 * l21);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const double z1 = gauss(rng), z2 = gauss(rng);
        acc += phi(act, l11 * z1) * phi(act, l21 * z1 + l22 * z2);
    }
    return acc / n;
}

// Forward recursion for the prior: H^{tt'} = w M[C]^{t-1,t'-1} + u X^{t-1,t'-1}
// with C = entrywise pair moments of H; dependencies are strictly earlier in
// time, so the fixed point is computable without iteration.
Matrix prior_recursion_oracle(const Task& task, const HyperParams& hyper, Activation act,
                              ArchMask mask) {
    const int n = task.grid.n_times();
    REQUIRE(task.P == 1);
    const Kernel X = input_kernel(task);
    Matrix H = Matrix::Zero(n, n);
    Matrix C = Matrix::Zero(n, n);
    for (int t = 0; t < n; ++t) {
        for (int s = 0; s <= t; ++s) {
            double mc = 0.0;
            if (t >= 1 && s >= 1) {
                const bool keep = mask == ArchMask::RNN || t == s;
                mc = keep ? C(t - 1, s - 1) : 0.0;
            }
            H(t, s) = H(s, t) = hyper.w * mc + hyper.u * X.data(t, s);
            C(t, s) = C(s, t) = gaussian_phi_moment(act, H(t, t), H(s, s), H(t, s));
        }
    }
    return H;
}

Task multi_input_task(int T) {
    Task task;
    task.name = "multi_input";
    task.grid = TimeGrid(T, {T});
    task.P = 1;
    task.D = 2;
    task.x.assign(static_cast<std::size_t>(T - 1), Matrix::Zero(1, 2));
    for (int t = 0; t < T - 1; ++t) {
        task.x[static_cast<std::size_t>(t)](0, 0) = std::cos(0.9 * t + 0.2);
        task.x[static_cast<std::size_t>(t)](0, 1) = std::sin(1.3 * t - 0.4);
    }
    task.y = Matrix::Zero(T - 1, 1);
    task.y(T - 2, 0) = 1.0;
    task.validate();
    return task;
}

}  // namespace

TEST_CASE("phi and phi_prime agree with finite differences") {
    for (Activation act : {Activation::Linear, Activation::Erf}) {
        for (double h : {-1.7, -0.3, 0.0, 0.5, 2.2}) {
            const double step = 1e-6;
            const double fd = (phi(act, h + step) - phi(act, h - step)) / (2.0 * step);
            CHECK(phi_prime(act, h) == doctest::Approx(fd).epsilon(1e-8));
        }
        CHECK(phi(act, 0.0) == 0.0);
        CHECK(phi_prime(act, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(phi(act, -0.8) == doctest::Approx(-phi(act, 0.8)).epsilon(1e-14));
    }
}

TEST_CASE("erf pair moment matches the arcsine closed form") {
    const double cases[][3] = {
        {1.0, 1.0, 0.0}, {1.0, 1.0, 0.7}, {2.0, 0.5, -0.6}, {3.0, 3.0, 2.9}, {0.2, 0.4, 0.1}};
    for (const auto& c : cases) {
        CHECK(gaussian_phi_moment(Activation::Erf, c[0], c[1], c[2]) ==
              doctest::Approx(erf_moment_oracle(c[0], c[1], c[2])).epsilon(1e-12));
        CHECK(gaussian_phi_moment(Activation::Linear, c[0], c[1], c[2]) ==
              doctest::Approx(c[2]).epsilon(1e-14));
    }
}

TEST_CASE("arcsine closed form itself matches monte carlo") {
    const int n = 400000;
    for (unsigned seed : {11u, 29u}) {
        const double mc = mc_phi_moment(Activation::Erf, 1.5, 0.8, 0.55, n, seed);
        const double exact = erf_moment_oracle(1.5, 0.8, 0.55);
        CHECK(std::abs(mc - exact) < 4.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("entrywise moment matrix uses the pair formula") {
    Matrix H(3, 3);
    H << 1.4, 0.3, -0.2, 0.3, 0.9, 0.1, -0.2, 0.1, 2.0;
    const Matrix C = gaussian_phi_moments(Activation::Erf, H);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(C(i, j) ==
                  doctest::Approx(erf_moment_oracle(H(i, i), H(j, j), H(i, j))).epsilon(1e-12));
    const Matrix CL = gaussian_phi_moments(Activation::Linear, H);
    CHECK((CL - H).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("impulse-input prior has closed-form diagonal and zero off-diagonals") {
    const Task task = sinusoid_task(4);
    HyperParams hyper;
    hyper.u = 1.3;
    hyper.w = 0.7;
    for (Activation act : {Activation::Linear, Activation::Erf}) {
        for (ArchMask mask : {ArchMask::RNN, ArchMask::DNN}) {
            const NngpResult res = nngp_kernel(task, hyper, act, mask);
            CHECK(res.residual <= 1e-12);
            double diag = hyper.u;  // H^{11} = u X^{00}
            for (int t = 0; t < 3; ++t) {
                CHECK(res.H0.data(t, t) == doctest::Approx(diag).epsilon(1e-10));
                diag = hyper.w * gaussian_phi_moment(act, diag, diag, diag);
            }
            Matrix off = res.H0.data;
            off.diagonal().setZero();
            CHECK(off.cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("prior fixed point matches the forward recursion oracle") {
    const Task task = multi_input_task(5);
    HyperParams hyper;
    hyper.u = 0.9;
    hyper.w = 1.1;
    hyper.D = task.D;
    for (Activation act : {Activation::Linear, Activation::Erf}) {
        for (ArchMask mask : {ArchMask::RNN, ArchMask::DNN}) {
            const NngpResult res = nngp_kernel(task, hyper, act, mask);
            const Matrix oracle = prior_recursion_oracle(task, hyper, act, mask);
            CHECK((res.H0.data - oracle).cwiseAbs().maxCoeff() < 1e-10);
            const Matrix C_oracle = gaussian_phi_moments(act, oracle);
            CHECK((res.C0.data - C_oracle).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("prior diverges loudly instead of overflowing") {
    const Task task = sinusoid_task(8);
    HyperParams hyper;
    hyper.w = 50.0;  // linear diagonal grows as w^t times u
    CHECK_THROWS_AS(nngp_kernel(task, hyper, Activation::Linear, ArchMask::RNN, 1e6),
                    DivergentPrior);
}

TEST_CASE("activation strings round-trip") {
    CHECK(activation_from_string(to_string(Activation::Linear)) == Activation::Linear);
    CHECK(activation_from_string(to_string(Activation::Erf)) == Activation::Erf);
}
