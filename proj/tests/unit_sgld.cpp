#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kmft/kernelspace.hpp"
#include "kmft/sgld.hpp"
#include "kmft/tasks.hpp"

using namespace kmft;

namespace {

// Reference forward pass written as the plain unrolled recursion.
Matrix forward_oracle(const WeightState& st, const Task& task, Activation act) {
    const int T = task.grid.T;
    const int P = task.P;
    const long long N = st.U.rows();
    Matrix f(T - 1, P);
    Matrix h;
    for (int t = 1; t <= T - 1; ++t) {
        Matrix drive = st.U * task.x[static_cast<std::size_t>(t - 1)].transpose();
        if (t > 1) {
            Matrix ph(h.rows(), h.cols());
            for (int i = 0; i < h.rows(); ++i)
                for (int p = 0; p < P; ++p) ph(i, p) = phi(act, h(i, p));
            drive += st.W_at(t - 2) * ph;
        }
        h = drive;
        Matrix ph(h.rows(), h.cols());
        for (long long i = 0; i < N; ++i)
            for (int p = 0; p < P; ++p) ph(i, p) = phi(act, h(i, p));
        f.row(t - 1) = st.V * ph;  // output time t + 1
    }
    return f;
}

double potential_oracle(const WeightState& st, const Task& task, Activation act) {
    const Matrix f = forward_oracle(st, task, act);
    double pot = 0.0;
    for (int t : task.grid.supervised)
        for (int p = 0; p < task.P; ++p) {
            const double r = task.y(t - 2, p) - f(t - 2, p);
            pot += 0.5 * r * r;
        }
    return pot;
}

}  // namespace

TEST_CASE("forward pass matches the unrolled recursion") {
    std::mt19937_64 rng(3);
    const Task task = endpoint_classification(4, 3);
    HyperParams hyper;
    hyper.N = 6;
    hyper.D = task.D;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        for (Activation act : {Activation::Linear, Activation::Erf}) {
            const WeightState st = init_weights(task, hyper, arch, 11);
            REQUIRE(st.W.size() == (arch == ArchMask::RNN ? 1u : 2u));
            const ForwardPass fp = forward(st, task, act);
            const Matrix f_ref = forward_oracle(st, task, act);
            CHECK((fp.f - f_ref).cwiseAbs().maxCoeff() < 1e-13);
            REQUIRE(fp.h.size() == 3);
            for (std::size_t i = 0; i < fp.h.size(); ++i)
                for (int r = 0; r < fp.h[i].rows(); ++r)
                    for (int c = 0; c < fp.h[i].cols(); ++c)
                        CHECK(fp.ph[i](r, c) ==
                              doctest::Approx(phi(act, fp.h[i](r, c))).epsilon(1e-14));
        }
    }
}

TEST_CASE("loss gradients match directional finite differences") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Task task = teacher_rotation_task(4, 0.7, 0.2, {2, 4});
    HyperParams hyper;
    hyper.N = 5;
    hyper.D = task.D;
    int checked = 0;
    for (ArchMask arch : {ArchMask::RNN, ArchMask::DNN}) {
        for (Activation act : {Activation::Linear, Activation::Erf}) {
            for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
                const WeightState st = init_weights(task, hyper, arch, seed);
                const LossGradients lg = loss_and_gradients(st, task, act);
                CHECK(lg.potential ==
                      doctest::Approx(potential_oracle(st, task, act)).epsilon(1e-12));

                WeightState plus = st, minus = st;
                double directional = 0.0;
                const double h = 1e-6;
                auto perturb = [&](Matrix& p, Matrix& m, const Matrix& g) {
                    Matrix S(g.rows(), g.cols());
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) S(i, j) = gauss(rng);
                    p += h * S;
                    m -= h * S;
                    directional += (g.array() * S.array()).sum();
                };
                perturb(plus.U, minus.U, lg.gU);
                for (std::size_t k = 0; k < st.W.size(); ++k)
                    perturb(plus.W[k], minus.W[k], lg.gW[k]);
                {
                    Eigen::RowVectorXd S(st.V.cols());
                    for (int j = 0; j < S.cols(); ++j) S(j) = gauss(rng);
                    plus.V += h * S;
                    minus.V -= h * S;
                    directional += (lg.gV.array() * S.array()).sum();
                }
                const double fd = (potential_oracle(plus, task, act) -
                                   potential_oracle(minus, task, act)) /
                                  (2.0 * h);
                CHECK(std::abs(directional - fd) <=
                      1e-6 * std::max({std::abs(directional), std::abs(fd), 1e-6}));
                ++checked;
            }
        }
    }
    CHECK(checked == 20);
}

TEST_CASE("prior scalings set the initial weight variances") {
    const Task task = endpoint_classification(2, 16);
    HyperParams hyper;
    hyper.u = 1.5;
    hyper.w = 0.6;
    hyper.v = 2.0;
    hyper.N = 400;
    hyper.D = 16;
    const WeightState st = init_weights(task, hyper, ArchMask::RNN, 9);
    const double vu = st.U.array().square().mean();
    const double vw = st.W[0].array().square().mean();
    const double vv = st.V.array().square().mean();
    CHECK(vu == doctest::Approx(hyper.G_U()).epsilon(0.1));
    CHECK(vw == doctest::Approx(hyper.G_W()).epsilon(0.1));
    CHECK(vv == doctest::Approx(hyper.G_V()).epsilon(0.35));
}

TEST_CASE("langevin step is deterministic in (seed, step index)") {
    const Task task = endpoint_regression_task(4, 1.0);
    HyperParams hyper;
    hyper.N = 8;
    hyper.kappa = 0.5;
    SGLDConfig cfg;
    cfg.ds = 1e-3;
    WeightState a = init_weights(task, hyper, ArchMask::RNN, 21);
    WeightState b = init_weights(task, hyper, ArchMask::RNN, 21);
    const double pa = sgld_step(a, task, hyper, Activation::Erf, cfg, 5);
    const double pb = sgld_step(b, task, hyper, Activation::Erf, cfg, 5);
    CHECK(pa == pb);
    CHECK((a.U - b.U).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.W[0] - b.W[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.V - b.V).cwiseAbs().maxCoeff() == 0.0);
    WeightState c = init_weights(task, hyper, ArchMask::RNN, 21);
    sgld_step(c, task, hyper, Activation::Erf, cfg, 6);
    CHECK((c.U - a.U).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("unsupervised dynamics relax every block to its prior variance") {
    // wide input so the U block has enough entries to average over
    Task task = endpoint_classification(2, 8);
    task.grid.supervised.clear();  // labels disabled: pure prior sampling
    HyperParams hyper;
    hyper.u = 1.2;
    hyper.w = 0.7;
    hyper.v = 1.5;
    hyper.kappa = 2.0;
    hyper.N = 16;
    hyper.D = 8;
    SGLDConfig cfg;
    cfg.ds = 4e-3;
    cfg.n_steps = 30000;
    WeightState st = init_weights(task, hyper, ArchMask::RNN, 33);
    double su = 0, sw = 0, sv = 0;
    long long n = 0;
    for (long long k = 0; k < cfg.n_steps; ++k) {
        sgld_step(st, task, hyper, Activation::Erf, cfg, k);
        if (k < cfg.n_steps / 3 || k % 5 != 0) continue;
        su += st.U.array().square().mean();
        sw += st.W[0].array().square().mean();
        sv += st.V.array().square().mean();
        ++n;
    }
    CHECK(su / n == doctest::Approx(hyper.G_U()).epsilon(0.1));
    CHECK(sw / n == doctest::Approx(hyper.G_W()).epsilon(0.1));
    CHECK(sv / n == doctest::Approx(hyper.G_V()).epsilon(0.1));
}

TEST_CASE("training harness is reproducible and reports stationarity") {
    const Task task = sinusoid_task(4);
    HyperParams hyper;
    hyper.N = 32;
    hyper.kappa = 1.0;
    SGLDConfig cfg;
    cfg.ds = 2e-3;
    cfg.n_steps = 4000;
    cfg.thin = 5;
    cfg.seed = 3;
    const TrainResult a = train_and_measure(task, hyper, Activation::Erf, ArchMask::RNN, cfg);
    const TrainResult b = train_and_measure(task, hyper, Activation::Erf, ArchMask::RNN, cfg);
    CHECK((a.C_exp.data - b.C_exp.data).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.H_exp.data - b.H_exp.data).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.n_kernel_samples == b.n_kernel_samples);
    CHECK(a.n_kernel_samples > 0);
    CHECK(a.C_exp.dim() == 3);
    CHECK(min_eigenvalue(a.C_exp.data) > -1e-10);
    CHECK(!a.log.empty());
    CHECK(a.loss_mean < a.log.front().loss);  // training reduces the loss
    // resuming from the final state continues the same trajectory shape
    WeightState final_state = init_weights(task, hyper, ArchMask::RNN, 3);
    const TrainResult c = train_and_measure(task, hyper, Activation::Erf, ArchMask::RNN, cfg,
                                            nullptr, &final_state);
    CHECK((c.C_exp.data - a.C_exp.data).cwiseAbs().maxCoeff() == 0.0);
    const TrainResult warm = train_and_measure(task, hyper, Activation::Erf, ArchMask::RNN,
                                               cfg, &final_state);
    CHECK(warm.n_kernel_samples == a.n_kernel_samples);
}

TEST_CASE("runaway steps overflow loudly") {
    const Task task = endpoint_regression_task(4, 50.0);
    HyperParams hyper;
    hyper.N = 8;
    hyper.kappa = 1.0;
    SGLDConfig cfg;
    cfg.ds = 50.0;  // absurd step size: the potential diverges immediately
    cfg.n_steps = 200;
    cfg.overflow_bound = 1e6;
    CHECK_THROWS_AS(
        train_and_measure(task, hyper, Activation::Linear, ArchMask::RNN, cfg),
        NumericOverflow);
}
