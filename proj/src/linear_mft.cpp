#include "kmft/linear_mft.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kmft/detail/matrix_ops.hpp"

namespace kmft {

using detail::chol_inverse;
using detail::chol_logdet;
using detail::embed_pos;
using detail::restrict_pos;
using detail::shift_dr;
using detail::shift_ul;

Matrix LinearObjective::sigma(const Matrix& H) const {
    return hyper.w * apply_mask_matrix(mask, shift_dr(H, P), P) + hyper.u * Xm;
}

Matrix LinearObjective::label_gram(const Matrix& H) const {
    Matrix A = hyper.v * restrict_pos(H, sup_pos, P);
    const double k = hyper.kappa > 0 ? hyper.kappa : kappa_floor;
    A.diagonal().array() += k;
    return A;
}

LinearObjective make_linear_objective(const Task& task, const HyperParams& hyper,
                                      ArchMask mask) {
    hyper.validate();
    if (task.grid.supervised.empty()) throw EmptySupervision();
    LinearObjective obj;
    obj.grid = task.grid;
    obj.P = task.P;
    obj.hyper = hyper;
    obj.mask = mask;
    obj.Xm = shift_minus(input_kernel(task)).data;
    const Kernel Y = label_kernel(task);
    obj.Y_sup = restrict_supervised(Y, task.grid).data;
    // Supervised output time t reads the hidden time t-1, stored position t-2.
    for (int t : task.grid.supervised) obj.sup_pos.push_back(t - 2);
    return obj;
}

double neg_log_p(const Matrix& H, const LinearObjective& obj) {
    const Matrix Sig = obj.sigma(H);
    const Matrix A = obj.label_gram(H);
    const Matrix Ainv = chol_inverse(A, "label gram");
    const double label = 0.5 * (obj.Y_sup * Ainv).trace();
    const Matrix SigInv = chol_inverse(Sig, "Sigma(H)");
    const double cross = 0.5 * (H * SigInv).trace();
    const double logdet = -0.5 * chol_logdet(H, "H") + 0.5 * chol_logdet(Sig, "Sigma(H)");
    return label + cross + logdet;
}

Matrix grad_neg_log_p(const Matrix& H, const LinearObjective& obj) {
    const int P = obj.P;
    const Matrix Sig = obj.sigma(H);
    const Matrix SigInv = chol_inverse(Sig, "Sigma(H)");
    const Matrix Hinv = chol_inverse(H, "H");
    const Matrix A = obj.label_gram(H);
    const Matrix Ainv = chol_inverse(A, "label gram");

    const Matrix F = SigInv * (H - Sig) * SigInv;
    const Matrix lab = Ainv * obj.Y_sup * Ainv;
    Matrix g = 0.5 * (SigInv - Hinv);
    g -= 0.5 * obj.hyper.w * apply_mask_matrix(obj.mask, shift_ul(F, P), P);
    g -= 0.5 * obj.hyper.v * embed_pos(lab, obj.sup_pos, P, obj.dim());
    return symmetrized(g);
}

double closed_form_residual(const Matrix& H, const LinearObjective& obj) {
    return 2.0 * grad_neg_log_p(H, obj).cwiseAbs().maxCoeff();
}

double neg_log_p(const Kernel& H, const LinearObjective& obj) { return neg_log_p(H.data, obj); }

Kernel grad_neg_log_p(const Kernel& H, const LinearObjective& obj) {
    Kernel g = H;
    g.data = grad_neg_log_p(H.data, obj);
    return g;
}

double closed_form_residual(const Kernel& H, const LinearObjective& obj) {
    return closed_form_residual(H.data, obj);
}

Kernel symmetry_breaking_init(const Kernel& H0, double eps) {
    Kernel H = H0;
    const int P = H.P;
    const int nt = static_cast<int>(H.times.size());
    Matrix d = H.data;
    for (int t = 0; t + 1 < nt; ++t) {
        d.block(t * P, (t + 1) * P, P, P).array() += eps;
        d.block((t + 1) * P, t * P, P, P).array() += eps;
    }
    H.set_data(d);
    return H;
}

namespace {

// Directional derivative of the gradient: exact Hessian action on a
// symmetric direction S in H space.
Matrix hess_apply(const Matrix& H, const Matrix& S, const LinearObjective& obj,
                  const Matrix& Sig, const Matrix& SigInv, const Matrix& Hinv,
                  const Matrix& Ainv) {
    const int P = obj.P;
    const Matrix Sdot = obj.hyper.w * apply_mask_matrix(obj.mask, shift_dr(S, P), P);
    const Matrix R = H - Sig;

    const Matrix dSigInv = -SigInv * Sdot * SigInv;
    const Matrix dHinv = -Hinv * S * Hinv;

    // F = SigInv R SigInv
    const Matrix dF = dSigInv * R * SigInv + SigInv * (S - Sdot) * SigInv + SigInv * R * dSigInv;

    // d(Ainv Y Ainv) with dA = v S_T: -v (Ainv S_T Ainv Y Ainv + transpose)
    const Matrix S_T = restrict_pos(S, obj.sup_pos, P);
    const Matrix lab1 = Ainv * S_T * Ainv * obj.Y_sup * Ainv;
    const Matrix dLab = -obj.hyper.v * (lab1 + lab1.transpose());

    Matrix dg = 0.5 * (dSigInv - dHinv);
    dg -= 0.5 * obj.hyper.w * apply_mask_matrix(obj.mask, shift_ul(dF, P), P);
    dg -= 0.5 * obj.hyper.v * embed_pos(dLab, obj.sup_pos, P, obj.dim());
    return symmetrized(dg);
}

struct LowerIndex {
    std::vector<std::pair<int, int>> idx;
    explicit LowerIndex(int n) {
        for (int j = 0; j < n; ++j)
            for (int i = j; i < n; ++i) idx.emplace_back(i, j);
    }
    int size() const { return static_cast<int>(idx.size()); }
    Vector pack(const Matrix& m) const {
        Vector v(size());
        for (int k = 0; k < size(); ++k) v[k] = m(idx[k].first, idx[k].second);
        return v;
    }
    Matrix unpack(const Vector& v, int n) const {
        Matrix m = Matrix::Zero(n, n);
        for (int k = 0; k < size(); ++k) m(idx[k].first, idx[k].second) = v[k];
        return m;
    }
};

}  // namespace

SolveReport solve_map(const LinearObjective& obj, const Kernel& init, const SolverOptions& opts) {
    const int n = obj.dim();
    if (init.data.rows() != n) throw InvalidShape("solver init dimension mismatch");
    const LowerIndex li(n);
    const int nvar = li.size();
    const int cg_cap = opts.cg_max_iter > 0 ? opts.cg_max_iter : 2 * nvar;

    Eigen::LLT<Matrix> llt(project_psd_matrix(init.data, 1e-12));
    Matrix L = llt.matrixL();

    auto objective = [&](const Matrix& Lc, double& val) -> bool {
        const Matrix H = Lc * Lc.transpose();
        try {
            val = neg_log_p(H, obj);
        } catch (const SingularKernel&) {
            return false;
        }
        return std::isfinite(val);
    };

    // gradient in L space: 2 (G L) restricted to the lower triangle
    auto grad_L = [&](const Matrix& Lc, Matrix& G_H) {
        const Matrix H = Lc * Lc.transpose();
        G_H = grad_neg_log_p(H, obj);
        return Matrix((2.0 * G_H * Lc).triangularView<Eigen::Lower>());
    };

    SolveReport rep;
    rep.status = "max_iterations";
    double f = 0.0;
    if (!objective(L, f)) throw SingularKernel("solver init is not feasible");

    Matrix G_H;
    Matrix gL = grad_L(L, G_H);
    double gnorm_H = G_H.cwiseAbs().maxCoeff();

    int it = 0;
    for (; it < opts.max_iter; ++it) {
        if (gnorm_H <= opts.gtol) {
            rep.converged = true;
            rep.status = "converged";
            break;
        }

        // Hessian-vector product in L space at fixed L:
        // d gL[V] = 2 (dG[dH] L + G V)_lower, dH = V L^T + L V^T.
        const Matrix H = L * L.transpose();
        const Matrix Sig = obj.sigma(H);
        Matrix SigInv, Hinv, Ainv;
        try {
            SigInv = chol_inverse(Sig, "Sigma(H)");
            Hinv = chol_inverse(H, "H");
            Ainv = chol_inverse(obj.label_gram(H), "label gram");
        } catch (const SingularKernel&) {
            rep.status = "singular_at_iterate";
            break;
        }
        auto hvp = [&](const Vector& vv) -> Vector {
            const Matrix V = li.unpack(vv, n);
            const Matrix dH = V * L.transpose() + L * V.transpose();
            const Matrix dG = hess_apply(H, dH, obj, Sig, SigInv, Hinv, Ainv);
            const Matrix out = 2.0 * (dG * L + G_H * V);
            return li.pack(Matrix(out.triangularView<Eigen::Lower>()));
        };

        // Truncated CG for the Newton direction.
        const Vector b = -li.pack(gL);
        Vector p = Vector::Zero(nvar);
        Vector r = b;
        Vector d = r;
        double rr = r.squaredNorm();
        const double forcing = std::min(0.5, std::sqrt(std::sqrt(rr)));
        const double cg_tol = forcing * std::sqrt(rr);
        for (int cg = 0; cg < cg_cap; ++cg) {
            if (std::sqrt(rr) <= cg_tol) break;
            const Vector Hd = hvp(d);
            const double dHd = d.dot(Hd);
            if (dHd <= 1e-14 * d.squaredNorm()) {
                if (p.isZero()) p = b;  // steepest descent fallback
                break;
            }
            const double alpha = rr / dHd;
            p += alpha * d;
            r -= alpha * Hd;
            const double rr_new = r.squaredNorm();
            d = r + (rr_new / rr) * d;
            rr = rr_new;
        }
        if (p.isZero()) p = b;

        const Matrix P_dir = li.unpack(p, n);
        const double slope = li.pack(gL).dot(p);
        Matrix dir = P_dir;
        double dslope = slope;
        if (slope > -1e-18) {  // not a descent direction; use steepest descent
            dir = -li.unpack(li.pack(gL), n);
            dslope = -li.pack(gL).squaredNorm();
        }

        // Backtracking Armijo line search.
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Matrix Lnew = L + alpha * dir;
            double fnew;
            if (objective(Lnew, fnew) && fnew <= f + 1e-4 * alpha * dslope) {
                L = Lnew;
                f = fnew;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            rep.status = "line_search_failure";
            break;
        }
        gL = grad_L(L, G_H);
        gnorm_H = G_H.cwiseAbs().maxCoeff();
    }

    Kernel Hk(obj.grid, obj.P, TimeRange::Hidden);
    Hk.set_data(L * L.transpose());
    rep.H_star = Hk;
    rep.objective_value = f;
    rep.gradient_norm = gnorm_H;
    rep.iterations = it;
    rep.closed_form_residual = closed_form_residual(Hk.data, obj);
    if (!rep.converged && gnorm_H <= opts.gtol) {
        rep.converged = true;
        rep.status = "converged";
    }
    return rep;
}

Kernel partial_supervision_projector(const TimeGrid& grid, const Kernel& A) {
    if (grid.supervised.empty()) throw EmptySupervision();
    const Kernel A_T = restrict_supervised(A, grid);
    Eigen::LLT<Matrix> llt(A_T.data);
    Matrix inv;
    if (llt.info() == Eigen::Success) {
        inv = llt.solve(Matrix::Identity(A_T.data.rows(), A_T.data.cols()));
    } else {
        Eigen::FullPivLU<Matrix> lu(A_T.data);
        if (!lu.isInvertible()) throw SingularKernel("supervised block is singular");
        inv = lu.inverse();
    }
    Kernel invK(grid, A.P, A_T.times, symmetrized(inv));
    return embed_supervised(invK, grid, A.times);
}

void write_solve_report(const std::string& path, const SolveReport& report,
                        const std::string& kernel_csv_path) {
    nlohmann::json j;
    j["objective_value"] = report.objective_value;
    j["gradient_norm"] = report.gradient_norm;
    j["iterations"] = report.iterations;
    j["closed_form_residual"] = report.closed_form_residual;
    j["converged"] = report.converged;
    j["status"] = report.status;
    j["kernel_csv"] = kernel_csv_path;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
