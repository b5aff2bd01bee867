#include "kmft/sgld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace kmft {

namespace {

int hidden_count(const Task& task) { return task.grid.T - 1; }

int w_block_count(const Task& task, ArchMask arch) {
    return arch == ArchMask::RNN ? 1 : std::max(0, task.grid.T - 2);
}

Matrix phi_mat(Activation act, const Matrix& h) {
    if (act == Activation::Linear) return h;
    Matrix r(h.rows(), h.cols());
    for (Eigen::Index j = 0; j < h.cols(); ++j)
        for (Eigen::Index i = 0; i < h.rows(); ++i) r(i, j) = phi(act, h(i, j));
    return r;
}

Matrix phi_prime_mat(Activation act, const Matrix& h) {
    Matrix r(h.rows(), h.cols());
    for (Eigen::Index j = 0; j < h.cols(); ++j)
        for (Eigen::Index i = 0; i < h.rows(); ++i) r(i, j) = phi_prime(act, h(i, j));
    return r;
}

// Residual (f - y) on supervised output rows, zero elsewhere.
Matrix supervised_residual(const Matrix& f, const Task& task) {
    Matrix r = Matrix::Zero(f.rows(), f.cols());
    for (int t : task.grid.supervised) {
        const int row = t - 2;
        r.row(row) = f.row(row) - task.y.row(row);
    }
    return r;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

void SGLDConfig::validate() const {
    if (ds <= 0) throw ConfigError("sgld: ds must be positive");
    if (n_steps <= 0) throw ConfigError("sgld: n_steps must be positive");
    if (burn_in >= n_steps) throw ConfigError("sgld: burn_in must be below n_steps");
    if (thin < 1) throw ConfigError("sgld: thin must be >= 1");
}

WeightState init_weights(const Task& task, const HyperParams& hyper, ArchMask arch,
                         std::uint64_t seed) {
    hyper.validate();
    task.validate();
    if (hyper.D != task.D) throw InvalidShape("hyper.D must match task.D");
    const int N = static_cast<int>(hyper.N);
    const int D = static_cast<int>(hyper.D);

    WeightState st;
    st.arch = arch;
    st.rng_seed = seed;
    NormalSampler rng(mix_seed(seed, 0xC0117));

    const double su = std::sqrt(hyper.G_U());
    const double sw = std::sqrt(hyper.G_W());
    const double sv = std::sqrt(hyper.G_V());

    st.U.resize(N, D);
    rng.fill(st.U.data(), static_cast<std::size_t>(st.U.size()));
    st.U *= su;
    st.W.resize(static_cast<std::size_t>(w_block_count(task, arch)));
    for (auto& w : st.W) {
        w.resize(N, N);
        rng.fill(w.data(), static_cast<std::size_t>(w.size()));
        w *= sw;
    }
    st.V.resize(N);
    rng.fill(st.V.data(), static_cast<std::size_t>(st.V.size()));
    st.V *= sv;
    return st;
}

ForwardPass forward(const WeightState& state, const Task& task, Activation act,
                    double overflow_bound) {
    const int Tm = hidden_count(task);
    const int P = task.P;
    ForwardPass fp;
    fp.h.resize(static_cast<std::size_t>(Tm));
    fp.ph.resize(static_cast<std::size_t>(Tm));
    fp.f.resize(Tm, P);
    for (int j = 0; j < Tm; ++j) {
        Matrix ht = state.U * task.x[static_cast<std::size_t>(j)].transpose();  // U x^{t-1}
        if (j > 0) ht.noalias() += state.W_at(j - 1) * fp.ph[static_cast<std::size_t>(j - 1)];
        if (!(ht.cwiseAbs().maxCoeff() <= overflow_bound))
            throw NumericOverflow("hidden state exceeded bound at time " + std::to_string(j + 1));
        fp.h[static_cast<std::size_t>(j)] = ht;
        fp.ph[static_cast<std::size_t>(j)] = phi_mat(act, ht);
        fp.f.row(j) = state.V * fp.ph[static_cast<std::size_t>(j)];
    }
    return fp;
}

LossGradients loss_and_gradients(const WeightState& state, const Task& task, Activation act,
                                 double overflow_bound) {
    const int Tm = hidden_count(task);
    const ForwardPass fp = forward(state, task, act, overflow_bound);
    const Matrix R = supervised_residual(fp.f, task);

    LossGradients lg;
    lg.potential = 0.5 * R.squaredNorm();
    lg.gU = Matrix::Zero(state.U.rows(), state.U.cols());
    lg.gW.assign(state.W.size(), Matrix::Zero(state.U.rows(), state.U.rows()));
    lg.gV = Eigen::RowVectorXd::Zero(state.V.cols());

    Matrix g;  // d potential / d h^t, N x P
    for (int j = Tm - 1; j >= 0; --j) {
        lg.gV.noalias() += R.row(j) * fp.ph[static_cast<std::size_t>(j)].transpose();
        Matrix gph = state.V.transpose() * R.row(j);  // from f^{t+1}
        if (j + 1 < Tm) gph.noalias() += state.W_at(j).transpose() * g;
        g = gph.cwiseProduct(phi_prime_mat(act, fp.h[static_cast<std::size_t>(j)]));
        if (j > 0) {
            const int blk = state.arch == ArchMask::RNN ? 0 : j - 1;
            lg.gW[static_cast<std::size_t>(blk)].noalias() +=
                g * fp.ph[static_cast<std::size_t>(j - 1)].transpose();
        }
        lg.gU.noalias() += g * task.x[static_cast<std::size_t>(j)];
    }
    return lg;
}

double sgld_step(WeightState& state, const Task& task, const HyperParams& hyper, Activation act,
                 const SGLDConfig& cfg, long long step_index) {
    const LossGradients lg = loss_and_gradients(state, task, act, cfg.overflow_bound);
    const double Kap = hyper.Kap();
    const double ds = cfg.ds;
    const double noise_sd = std::sqrt(2.0 * Kap * ds);
    NormalSampler rng(mix_seed(state.rng_seed, static_cast<std::uint64_t>(step_index)));

    Matrix xi(state.U.rows(), state.U.cols());
    rng.fill(xi.data(), static_cast<std::size_t>(xi.size()));
    state.U += -ds * (lg.gU + (Kap / hyper.G_U()) * state.U) + noise_sd * xi;

    Matrix xw(state.U.rows(), state.U.rows());
    for (std::size_t b = 0; b < state.W.size(); ++b) {
        rng.fill(xw.data(), static_cast<std::size_t>(xw.size()));
        state.W[b] += -ds * (lg.gW[b] + (Kap / hyper.G_W()) * state.W[b]) + noise_sd * xw;
    }

    Eigen::RowVectorXd xv(state.V.cols());
    rng.fill(xv.data(), static_cast<std::size_t>(xv.size()));
    state.V += -ds * (lg.gV + (Kap / hyper.G_V()) * state.V) + noise_sd * xv;
    return lg.potential;
}

TrainResult train_and_measure(const Task& task, const HyperParams& hyper, Activation act,
                              ArchMask arch, const SGLDConfig& cfg, const WeightState* warm,
                              WeightState* final_state) {
    cfg.validate();
    WeightState st = warm ? *warm : init_weights(task, hyper, arch, cfg.seed);
    if (warm && warm->arch != arch) throw ConfigError("warm start has wrong architecture");
    const int Tm = hidden_count(task);
    const int P = task.P;
    const int n = Tm * P;
    const double N = static_cast<double>(hyper.N);
    const double norm =
        task.grid.supervised.empty()
            ? 1.0
            : static_cast<double>(P) * static_cast<double>(task.grid.supervised.size());

    const long long burn = cfg.effective_burn_in();
    Matrix sumC = Matrix::Zero(n, n), sumH = Matrix::Zero(n, n);
    Matrix sumF = Matrix::Zero(Tm, P), sumF2 = Matrix::Zero(Tm, P);
    int snaps = 0;

    TrainResult res;
    std::vector<double> post_losses;
    for (long long s = 0; s < cfg.n_steps; ++s) {
        const double potential = sgld_step(st, task, hyper, act, cfg, s);
        const double loss = potential / norm;
        if (s % cfg.thin == 0) {
            int snap_id = -1;
            if (s >= burn) {
                const ForwardPass fp = forward(st, task, act, cfg.overflow_bound);
                for (int a = 0; a < Tm; ++a)
                    for (int b = a; b < Tm; ++b) {
                        const Matrix cb =
                            fp.ph[static_cast<std::size_t>(a)].transpose() *
                            fp.ph[static_cast<std::size_t>(b)] / N;
                        const Matrix hb = fp.h[static_cast<std::size_t>(a)].transpose() *
                                          fp.h[static_cast<std::size_t>(b)] / N;
                        sumC.block(a * P, b * P, P, P) += cb;
                        sumH.block(a * P, b * P, P, P) += hb;
                        if (b > a) {
                            sumC.block(b * P, a * P, P, P) += cb.transpose();
                            sumH.block(b * P, a * P, P, P) += hb.transpose();
                        }
                    }
                sumF += fp.f;
                sumF2 += fp.f.cwiseAbs2();
                snap_id = snaps++;
                post_losses.push_back(loss);
            }
            res.log.push_back({s, loss, snap_id});
        }
    }
    if (snaps == 0) throw ConfigError("sgld: no post-burn-in samples (check burn_in/thin)");

    res.C_exp = Kernel(task.grid, P, TimeRange::Hidden);
    res.H_exp = res.C_exp;
    res.C_exp.set_data(sumC / snaps);
    res.H_exp.set_data(sumH / snaps);
    res.f_mean = sumF / snaps;
    res.f_var = (sumF2 / snaps - res.f_mean.cwiseAbs2()).cwiseMax(0.0);
    res.n_kernel_samples = snaps;

    double m = 0.0;
    for (double l : post_losses) m += l;
    res.loss_mean = m / static_cast<double>(post_losses.size());
    const std::size_t half = post_losses.size() / 2;
    if (half > 0) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) m1 += post_losses[i];
        for (std::size_t i = half; i < post_losses.size(); ++i) m2 += post_losses[i];
        m1 /= static_cast<double>(half);
        m2 /= static_cast<double>(post_losses.size() - half);
        const double ref = std::max({std::abs(m1), std::abs(m2), 1e-12});
        res.stationary = std::abs(m1 - m2) <= 0.05 * ref;
    }
    if (final_state) *final_state = st;
    return res;
}

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << "step,loss,snapshot_id\n";
        char buf[128];
        for (const auto& r : log) {
            std::snprintf(buf, sizeof(buf), "%lld,%.17g,%d\n", r.step, r.loss, r.snapshot_id);
            f << buf;
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_run_manifest(const std::string& path, const Task& task, const HyperParams& hyper,
                        Activation act, ArchMask arch, const SGLDConfig& cfg,
                        const TrainResult& result) {
    nlohmann::json j;
    j["task"] = task.name;
    j["T"] = task.grid.T;
    j["P"] = task.P;
    j["D"] = task.D;
    j["supervised"] = task.grid.supervised;
    j["hyper"] = {{"u", hyper.u},     {"w", hyper.w}, {"v", hyper.v},
                  {"kappa", hyper.kappa}, {"N", hyper.N}, {"D", hyper.D}};
    j["activation"] = to_string(act);
    j["arch"] = to_string(arch);
    j["sgld"] = {{"ds", cfg.ds},          {"n_steps", cfg.n_steps}, {"burn_in", cfg.burn_in},
                 {"thin", cfg.thin},      {"seed", cfg.seed},       {"overflow_bound", cfg.overflow_bound}};
    j["n_kernel_samples"] = result.n_kernel_samples;
    j["stationary"] = result.stationary;
    j["loss_mean"] = result.loss_mean;

    std::string inputs;
    for (const auto& xm : task.x)
        for (Eigen::Index i = 0; i < xm.size(); ++i) inputs += std::to_string(xm.data()[i]) + ",";
    for (Eigen::Index i = 0; i < task.y.size(); ++i) inputs += std::to_string(task.y.data()[i]) + ",";
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a(inputs)));
    j["input_hash"] = std::string(hash);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
