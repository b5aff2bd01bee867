#include "kmft/nonlinear_mft.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmft/detail/matrix_ops.hpp"
#include "kmft/rng.hpp"

namespace kmft {

using detail::chol_inverse;
using detail::embed_pos;
using detail::shift_ul;

std::string to_string(SamplerMethod m) {
    switch (m) {
        case SamplerMethod::ImportanceFromBase: return "importance_from_base";
        case SamplerMethod::LangevinRefine: return "langevin_refine";
        case SamplerMethod::AnalyticLinear: return "analytic_linear";
        case SamplerMethod::Quadrature: return "quadrature";
    }
    throw ConfigError("unknown sampler method");
}

SamplerMethod sampler_method_from_string(const std::string& s) {
    if (s == "importance_from_base") return SamplerMethod::ImportanceFromBase;
    if (s == "langevin_refine") return SamplerMethod::LangevinRefine;
    if (s == "analytic_linear") return SamplerMethod::AnalyticLinear;
    if (s == "quadrature") return SamplerMethod::Quadrature;
    throw ConfigError("unknown sampler method: " + s);
}

NonlinearObjective make_nonlinear_objective(const Task& task, const HyperParams& hyper,
                                            ArchMask mask, Activation act) {
    NonlinearObjective obj;
    obj.lin = make_linear_objective(task, hyper, mask);
    obj.act = act;
    const NngpResult prior = nngp_kernel(task, hyper, act, mask);
    obj.H0 = prior.H0;
    obj.C0 = prior.C0;
    return obj;
}

// Strictly positive eigenvalue floor keeps every restriction of the iterate
// invertible even when the ridge is zero.
constexpr double kPsdFloor = 1e-10;

SaddleState init_saddle(const NonlinearObjective& obj, double sym_break_eps) {
    SaddleState st;
    st.C = symmetry_breaking_init(obj.C0, sym_break_eps);
    st.C.set_data(project_psd_matrix(st.C.data, kPsdFloor));
    st.C_tilde = Matrix::Zero(st.C.data.rows(), st.C.data.cols());
    st.H_eql = obj.H0;
    st.C_eql = obj.C0;
    return st;
}

namespace {

Vector apply_phi(Activation act, const Vector& h) {
    if (act == Activation::Linear) return h;
    Vector r(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) r[i] = phi(act, h[i]);
    return r;
}

struct Accum {
    Matrix a1, a2, a3;  // sum w*x, sum w^2*x, sum w^2*x.^2
    explicit Accum(int n) : a1(Matrix::Zero(n, n)), a2(Matrix::Zero(n, n)), a3(Matrix::Zero(n, n)) {}
    void add(const Matrix& x, double wgt) {
        a1 += wgt * x;
        a2 += wgt * wgt * x;
        a3 += (wgt * wgt) * x.cwiseProduct(x);
    }
    // Self-normalized mean and its entrywise standard errors.
    Matrix mean(double s1) const { return a1 / s1; }
    Matrix se_mat(double s1, double s2) const {
        const Matrix m = mean(s1);
        const Matrix var = a3 - 2.0 * m.cwiseProduct(a2) + s2 * m.cwiseProduct(m);
        return var.cwiseMax(0.0).cwiseSqrt() / s1;
    }
};

MomentEstimate moments_importance(const SaddleState& state, const NonlinearObjective& obj,
                                  const SamplerConfig& cfg, const Matrix& base) {
    const int n = static_cast<int>(base.rows());
    Eigen::LLT<Matrix> llt(base);
    if (llt.info() != Eigen::Success) throw SingularKernel("base covariance is not PD");
    const Matrix L = llt.matrixL();

    NormalSampler rng(mix_seed(cfg.seed, 0x15eed));
    Vector z(n), h(n);

    // First pass caches log weights to stabilize the exponentials.
    std::vector<Vector> hs(static_cast<std::size_t>(cfg.n_samples));
    std::vector<double> logw(static_cast<std::size_t>(cfg.n_samples));
    double logw_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.n_samples; ++i) {
        rng.fill(z.data(), static_cast<std::size_t>(n));
        h = L * z;
        const Vector ph = apply_phi(obj.act, h);
        logw[static_cast<std::size_t>(i)] = ph.dot(state.C_tilde * ph);
        logw_max = std::max(logw_max, logw[static_cast<std::size_t>(i)]);
        hs[static_cast<std::size_t>(i)] = h;
    }

    Accum acc_h(n), acc_c(n);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < cfg.n_samples; ++i) {
        const double wgt = std::exp(logw[static_cast<std::size_t>(i)] - logw_max);
        const Vector& hi = hs[static_cast<std::size_t>(i)];
        const Vector ph = apply_phi(obj.act, hi);
        acc_h.add(hi * hi.transpose(), wgt);
        acc_c.add(ph * ph.transpose(), wgt);
        s1 += wgt;
        s2 += wgt * wgt;
    }
    const double ess = s1 * s1 / s2;
    if (ess < 0.01 * cfg.n_samples)
        throw DegenerateTilt("importance weights collapsed: ESS " + std::to_string(ess) + " of " +
                             std::to_string(cfg.n_samples));

    MomentEstimate est;
    est.H_eql = Kernel(obj.lin.grid, obj.lin.P, TimeRange::Hidden);
    est.C_eql = est.H_eql;
    est.H_eql.set_data(acc_h.mean(s1));
    est.C_eql.set_data(acc_c.mean(s1));
    est.se_H_mat = acc_h.se_mat(s1, s2);
    est.se_C_mat = acc_c.se_mat(s1, s2);
    est.se_H = est.se_H_mat.maxCoeff();
    est.se_C = est.se_C_mat.maxCoeff();
    est.ess = ess;
    return est;
}

MomentEstimate moments_langevin(const SaddleState& state, const NonlinearObjective& obj,
                                const SamplerConfig& cfg, const Matrix& base) {
    const int n = static_cast<int>(base.rows());
    Eigen::LLT<Matrix> llt(base);
    if (llt.info() != Eigen::Success) throw SingularKernel("base covariance is not PD");
    const Matrix L = llt.matrixL();

    NormalSampler rng(mix_seed(cfg.seed, 0x1a9e));
    const double ds = cfg.step;
    const double sq = std::sqrt(ds);

    Vector z(n), h(n), drift(n);
    rng.fill(z.data(), static_cast<std::size_t>(n));
    h = L * z;  // start from the base Gaussian

    // Preconditioned unadjusted Langevin targeting
    // exp(-h' B^{-1} h / 2 + phi' Ct phi):  h += ds/2 (-h + 2 B (phi'∘(Ct phi))) + sqrt(ds) L xi.
    auto step = [&](Vector& x) {
        const Vector ph = apply_phi(obj.act, x);
        Vector tilt = 2.0 * (state.C_tilde * ph);
        for (int i = 0; i < n; ++i) tilt[i] *= phi_prime(obj.act, x[i]);
        drift = -x + base * tilt;
        rng.fill(z.data(), static_cast<std::size_t>(n));
        x += 0.5 * ds * drift + sq * (L * z);
        if (!x.allFinite()) throw NumericOverflow("Langevin chain diverged");
    };

    for (int i = 0; i < cfg.burn_in; ++i) step(h);

    const int nb = std::max(2, std::min(50, cfg.n_samples / 20));
    const int per = cfg.n_samples / nb;
    std::vector<Matrix> bh(static_cast<std::size_t>(nb)), bc(static_cast<std::size_t>(nb));
    Matrix mh = Matrix::Zero(n, n), mc = Matrix::Zero(n, n);
    for (int b = 0; b < nb; ++b) {
        Matrix sh = Matrix::Zero(n, n), sc = Matrix::Zero(n, n);
        for (int i = 0; i < per; ++i) {
            step(h);
            const Vector ph = apply_phi(obj.act, h);
            sh += h * h.transpose();
            sc += ph * ph.transpose();
        }
        bh[static_cast<std::size_t>(b)] = sh / per;
        bc[static_cast<std::size_t>(b)] = sc / per;
        mh += bh[static_cast<std::size_t>(b)];
        mc += bc[static_cast<std::size_t>(b)];
    }
    mh /= nb;
    mc /= nb;

    Matrix vh = Matrix::Zero(n, n), vc = Matrix::Zero(n, n);
    for (int b = 0; b < nb; ++b) {
        vh += (bh[static_cast<std::size_t>(b)] - mh).cwiseAbs2();
        vc += (bc[static_cast<std::size_t>(b)] - mc).cwiseAbs2();
    }

    MomentEstimate est;
    est.H_eql = Kernel(obj.lin.grid, obj.lin.P, TimeRange::Hidden);
    est.C_eql = est.H_eql;
    est.H_eql.set_data(mh);
    est.C_eql.set_data(mc);
    est.se_H_mat = (vh / (nb * (nb - 1.0))).cwiseSqrt();
    est.se_C_mat = (vc / (nb * (nb - 1.0))).cwiseSqrt();
    est.se_H = est.se_H_mat.maxCoeff();
    est.se_C = est.se_C_mat.maxCoeff();
    est.ess = static_cast<double>(cfg.n_samples);
    return est;
}

MomentEstimate moments_analytic(const SaddleState& state, const NonlinearObjective& obj,
                                const Matrix& base) {
    const Matrix prec = symmetrized(chol_inverse(base, "base covariance") - 2.0 * state.C_tilde);
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success)
        throw DegenerateTilt("tilted precision is not positive definite");
    const Matrix H = symmetrized(llt.solve(Matrix::Identity(prec.rows(), prec.cols())));

    MomentEstimate est;
    est.H_eql = Kernel(obj.lin.grid, obj.lin.P, TimeRange::Hidden);
    est.C_eql = est.H_eql;
    est.H_eql.set_data(H);
    // Exact for Linear; for Erf this is the Gaussian-measure moment at the
    // tilted covariance (used only as a preconditioning surrogate).
    est.C_eql.set_data(obj.act == Activation::Linear ? H
                                                     : gaussian_phi_moments(obj.act, H));
    est.se_H = 0.0;
    est.se_C = 0.0;
    est.ess = std::numeric_limits<double>::infinity();
    return est;
}

// Probabilists' Gauss-Hermite rule via Golub-Welsch: nodes are eigenvalues of
// the Jacobi matrix (off-diagonal sqrt(k)), weights the squared first
// eigenvector components; exact for polynomials of degree 2m-1 under N(0,1).
void gauss_hermite(int m, Vector& nodes, Vector& weights) {
    Matrix J = Matrix::Zero(m, m);
    for (int k = 1; k < m; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Matrix> es(J);
    nodes = es.eigenvalues();
    weights = es.eigenvectors().row(0).transpose().cwiseAbs2();
}

MomentEstimate moments_quadrature(const SaddleState& state, const NonlinearObjective& obj,
                                  const SamplerConfig& cfg, const Matrix& base) {
    // Linear activation has exact closed-form moments; no grid needed.
    if (obj.act == Activation::Linear) return moments_analytic(state, obj, base);

    const int d = static_cast<int>(base.rows());
    // Nodes per dimension from the total evaluation budget, floored so the
    // rule stays meaningful and capped to keep single calls fast.
    int m = static_cast<int>(std::floor(std::pow(static_cast<double>(cfg.n_samples), 1.0 / d)));
    m = std::max(4, std::min(64, m));
    const double total = std::pow(static_cast<double>(m), d);
    if (total > 5e7)
        throw ConfigError("quadrature grid too large (dim " + std::to_string(d) +
                          "): use an MC sampler");

    Eigen::LLT<Matrix> llt(base);
    if (llt.info() != Eigen::Success) throw SingularKernel("base covariance is not PD");
    const Matrix L = llt.matrixL();

    Vector nodes, weights;
    gauss_hermite(m, nodes, weights);
    const Vector logw1 = weights.array().log();

    // Materialize the tensor grid as columns so every step is a matrix op.
    const int K = static_cast<int>(total);
    Matrix Z(d, K);
    Vector logw0(K);
    {
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        for (int k = 0; k < K; ++k) {
            double lw = 0.0;
            for (int i = 0; i < d; ++i) {
                Z(i, k) = nodes[idx[static_cast<std::size_t>(i)]];
                lw += logw1[idx[static_cast<std::size_t>(i)]];
            }
            logw0[k] = lw;
            for (int i = 0; i < d; ++i) {
                if (++idx[static_cast<std::size_t>(i)] < m) break;
                idx[static_cast<std::size_t>(i)] = 0;
            }
        }
    }

    const Matrix Hp = L * Z;
    Matrix Phi(d, K);
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < d; ++i) Phi(i, k) = phi(obj.act, Hp(i, k));

    Vector lt = (Phi.cwiseProduct(state.C_tilde * Phi)).colwise().sum().transpose() + logw0;
    const Vector wv = (lt.array() - lt.maxCoeff()).exp();
    const double s1 = wv.sum();

    MomentEstimate est;
    est.H_eql = Kernel(obj.lin.grid, obj.lin.P, TimeRange::Hidden);
    est.C_eql = est.H_eql;
    est.H_eql.set_data(symmetrized(Hp * wv.asDiagonal() * Hp.transpose() / s1));
    est.C_eql.set_data(symmetrized(Phi * wv.asDiagonal() * Phi.transpose() / s1));
    est.se_H = 0.0;
    est.se_C = 0.0;
    est.ess = total;
    return est;
}

// Stationary dual kernel at the current moments:
// C_tilde_eql = v/2 embed_S[A^{-1} Y_S A^{-1}] + w/2 M[(Sig^{-1}(H_eql - Sig)Sig^{-1})^+].
Matrix tilde_eql(const Matrix& C, const Matrix& H_eql, const NonlinearObjective& obj) {
    const LinearObjective& lin = obj.lin;
    const Matrix Sig = lin.sigma(C);
    const Matrix SigInv = chol_inverse(Sig, "Sigma(C)");
    const Matrix A = lin.label_gram(C);
    const Matrix Ainv = chol_inverse(A, "label gram");
    Matrix t = 0.5 * lin.hyper.v * embed_pos(Ainv * lin.Y_sup * Ainv, lin.sup_pos, lin.P, lin.dim());
    const Matrix F = SigInv * (H_eql - Sig) * SigInv;
    t += 0.5 * lin.hyper.w * apply_mask_matrix(lin.mask, shift_ul(F, lin.P), lin.P);
    return symmetrized(t);
}

}  // namespace

MomentEstimate single_site_moments(const SaddleState& state, const NonlinearObjective& obj,
                                   const SamplerConfig& sampler) {
    const Matrix base = obj.lin.sigma(state.C.data);
    switch (sampler.method) {
        case SamplerMethod::ImportanceFromBase: return moments_importance(state, obj, sampler, base);
        case SamplerMethod::LangevinRefine: return moments_langevin(state, obj, sampler, base);
        case SamplerMethod::AnalyticLinear: return moments_analytic(state, obj, base);
        case SamplerMethod::Quadrature: return moments_quadrature(state, obj, sampler, base);
    }
    throw ConfigError("unknown sampler method");
}

SaddleGradients saddle_gradients(const SaddleState& state, const NonlinearObjective& obj,
                                 const SamplerConfig& sampler) {
    SaddleGradients g;
    g.moments = single_site_moments(state, obj, sampler);
    g.gC = symmetrized(state.C_tilde - tilde_eql(state.C.data, g.moments.H_eql.data, obj));
    g.gCt = symmetrized(state.C.data - g.moments.C_eql.data);
    // Delta method: the H estimate enters gC through S (H - Sig) S with
    // S = Sig^{-1}, so independent entrywise errors propagate as
    // var = (S.^2) se_H.^2 (S.^2), far tighter than the operator-norm bound.
    double se_gC = 0.0;
    if (g.moments.se_H_mat.size() > 0) {
        const Matrix Sig = obj.lin.sigma(state.C.data);
        const Matrix S2 = chol_inverse(Sig, "base covariance").cwiseAbs2();
        const Matrix var = S2 * g.moments.se_H_mat.cwiseAbs2() * S2;
        se_gC = 0.5 * obj.lin.hyper.w * std::sqrt(std::max(0.0, var.maxCoeff()));
    }
    g.noise = 3.0 * std::max(se_gC, g.moments.se_C);
    return g;
}

SaddleState solve_saddle(const NonlinearObjective& obj, const SaddleState& init,
                         const SamplerConfig& sampler, const SaddleOptions& opts) {
    SaddleState st = init;
    st.status = "running";
    SamplerConfig cur = sampler;
    double eta = opts.eta;
    double eta_cap = opts.eta;
    double best_resid = std::numeric_limits<double>::infinity();
    double prev_resid = std::numeric_limits<double>::infinity();
    int best_iter = 0;

    auto grads_with_fallback = [&](const SaddleState& at, std::uint64_t stream) {
        SamplerConfig c = cur;
        c.seed = mix_seed(sampler.seed, stream);
        try {
            return saddle_gradients(at, obj, c);
        } catch (const DegenerateTilt&) {
            if (cur.method != SamplerMethod::ImportanceFromBase) throw;
            cur.method = SamplerMethod::LangevinRefine;  // sticky fallback
            c.method = cur.method;
            return saddle_gradients(at, obj, c);
        }
    };

    for (int it = 0; it < opts.max_iter; ++it) {
        const SaddleGradients g = grads_with_fallback(st, 2 * static_cast<std::uint64_t>(it));
        st.H_eql = g.moments.H_eql;
        st.C_eql = g.moments.C_eql;
        st.iteration = it;
        const double resid =
            std::max(g.gC.cwiseAbs().maxCoeff(), g.gCt.cwiseAbs().maxCoeff());
        st.residual = resid;
        if (opts.verbose)
            std::fprintf(stderr,
                         "saddle it=%d resid=%.6e (gC=%.3e gCt=%.3e) eta=%.3e noise=%.3e "
                         "(se_H=%.2e se_C=%.2e ess=%.0f)\n",
                         it, resid, g.gC.cwiseAbs().maxCoeff(), g.gCt.cwiseAbs().maxCoeff(), eta,
                         g.noise, g.moments.se_H, g.moments.se_C, g.moments.ess);

        if (resid <= std::max(opts.tol, g.noise)) {
            st.converged = true;
            st.status = resid <= opts.tol ? "converged" : "converged_noise_floor";
            return st;
        }
        // The bar moves only when beaten by 1%, so the window measures
        // cumulative progress; a single noise dip cannot freeze it for long.
        if (resid < 0.99 * best_resid) {
            best_resid = resid;
            best_iter = it;
        }
        if (it - best_iter >= opts.stall_window) {
            if (eta <= 1e-3 * opts.eta * (1.0 + 1e-12))
                throw NonDecreasingResidual("saddle residual stalled at " +
                                            std::to_string(best_resid) + " (tol " +
                                            std::to_string(opts.tol) + ")");
            eta_cap = eta = std::max(0.5 * eta, 1e-3 * opts.eta);  // anneal, fresh window
            best_iter = it;
        }
        // Back off only on a significant increase: MC noise wiggles the
        // residual at the floor and must not collapse the step size.
        if (resid > 1.2 * prev_resid + g.noise)
            eta = std::max(0.5 * eta, 1e-3 * opts.eta);
        else
            eta = std::min(1.05 * eta, eta_cap);
        prev_resid = resid;

        // Damped Picard step with an extragradient midpoint: each variable
        // relaxes toward its own self-consistency target, so the step is
        // scale-free in C and cannot be ejected by a near-singular label
        // gram.  The dual step is still capped: its target blows up as
        // lambda_min(A)^{-2} when the supervised block degenerates.
        // `at` is taken by value: callers pass the same object as input and
        // output, and the retry loop must re-read the pre-step state.
        const auto mix = [&](double beta0, const SaddleState at, const SaddleGradients& gr,
                             SaddleState& out) {
            double beta = beta0;
            for (int k = 0; k < 40; ++k, beta *= 0.5) {
                if (obj.act == Activation::Linear) {
                    // The covariance target (Sigma^{-1} - 2 C_tilde)^{-1}
                    // blows up near the tilt-domain boundary; mixing
                    // precisions instead keeps the step bounded and the
                    // iterate inside the PD cone.
                    const Matrix Ci = chol_inverse(at.C.data, "saddle C");
                    const Matrix Hi = chol_inverse(gr.moments.H_eql.data, "tilted moment");
                    out.C.set_data(
                        chol_inverse((1.0 - beta) * Ci + beta * Hi, "mixed precision"));
                } else {
                    out.C.set_data(project_psd_matrix(at.C.data - beta * gr.gCt, kPsdFloor));
                }
                const double m = gr.gC.cwiseAbs().maxCoeff();
                const double bt = m * beta > opts.max_step ? opts.max_step / m : beta;
                out.C_tilde = symmetrized(at.C_tilde - bt * gr.gC);
                if (obj.act != Activation::Linear) return;
                // Linear tilt domain: the measure is normalizable only while
                // 2 C_tilde < Sigma(C)^{-1}.  The previous state satisfies
                // this, so halving the whole step must eventually re-enter.
                const Matrix Si = chol_inverse(obj.lin.sigma(out.C.data), "Sigma(C)");
                const double margin = 1e-8 * (1.0 + Si.cwiseAbs().maxCoeff());
                if (min_eigenvalue(Si - 2.0 * out.C_tilde) > margin) return;
            }
            out = at;  // no feasible step found; the stall handler anneals
        };

        SaddleState half = st;
        mix(0.5 * eta, st, g, half);
        const SaddleGradients gh =
            grads_with_fallback(half, 2 * static_cast<std::uint64_t>(it) + 1);
        mix(eta, st, gh, st);
    }
    throw MaxIterations("saddle solver: residual " + std::to_string(st.residual) +
                        " above tolerance after " + std::to_string(opts.max_iter) +
                        " iterations");
}

void save_saddle_checkpoint(const std::string& prefix, const SaddleState& state,
                            std::uint64_t seed) {
    write_kernel_csv(prefix + "_C.csv", state.C, "saddle C");
    Kernel ct = state.C;
    ct.set_data(state.C_tilde);
    write_kernel_csv(prefix + "_Ctilde.csv", ct, "saddle C_tilde");
    nlohmann::json j;
    j["iteration"] = state.iteration;
    j["residual"] = state.residual;
    j["converged"] = state.converged;
    j["status"] = state.status;
    j["seed"] = seed;
    const std::string tmp = prefix + ".json.tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, prefix + ".json");
}

SaddleCheckpoint load_saddle_checkpoint(const std::string& prefix) {
    SaddleCheckpoint cp;
    cp.state.C = read_kernel_csv(prefix + "_C.csv");
    cp.state.C_tilde = read_kernel_csv(prefix + "_Ctilde.csv").data;
    cp.state.H_eql = cp.state.C;
    cp.state.C_eql = cp.state.C;
    std::ifstream f(prefix + ".json");
    if (!f) throw Error("cannot read " + prefix + ".json");
    nlohmann::json j;
    f >> j;
    cp.state.iteration = j.value("iteration", 0);
    cp.state.residual = j.value("residual", 0.0);
    cp.state.converged = j.value("converged", false);
    cp.state.status = j.value("status", std::string("loaded"));
    cp.seed = j.value("seed", std::uint64_t{0});
    return cp;
}

}  // namespace kmft
