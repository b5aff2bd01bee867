#include "kmft/perturbation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kmft/detail/matrix_ops.hpp"
#include "kmft/nngp.hpp"

namespace kmft {

using detail::chol_inverse;
using detail::embed_pos;
using detail::restrict_pos;
using detail::shift_dr;
using detail::shift_ul;

namespace {

double kappa_or_floor(const HyperParams& hyper) {
    return hyper.kappa > 0 ? hyper.kappa : 1e-12;
}

std::vector<int> supervised_positions(const TimeGrid& grid) {
    if (grid.supervised.empty()) throw EmptySupervision();
    std::vector<int> pos;
    // Supervised output time t reads the hidden time t-1, stored position t-2.
    for (int t : grid.supervised) pos.push_back(t - 2);
    return pos;
}

// Vectorized symmetric basis: pairs (i, j) with i <= j; coordinates are the
// matrix entries themselves, basis matrices e_i e_j^T + e_j e_i^T (i < j).
struct SymIndex {
    std::vector<std::pair<int, int>> idx;
    explicit SymIndex(int n) {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i <= j; ++i) idx.emplace_back(i, j);
    }
    int size() const { return static_cast<int>(idx.size()); }
    Vector pack(const Matrix& m) const {
        Vector v(size());
        for (int k = 0; k < size(); ++k) v[k] = m(idx[k].first, idx[k].second);
        return v;
    }
    Matrix basis(int k, int n) const {
        Matrix b = Matrix::Zero(n, n);
        b(idx[k].first, idx[k].second) = 1.0;
        b(idx[k].second, idx[k].first) = 1.0;
        return b;
    }
    Matrix unpack(const Vector& v, int n) const {
        Matrix m(n, n);
        for (int k = 0; k < size(); ++k) {
            m(idx[k].first, idx[k].second) = v[k];
            m(idx[k].second, idx[k].first) = v[k];
        }
        return m;
    }
};

Matrix solve_order(const Matrix& G, const HyperParams& hyper, ArchMask mask, int P,
                   const Matrix& rhs) {
    const int n = static_cast<int>(G.rows());
    const SymIndex si(n);
    const Matrix L1 = l1_matrix(G, hyper, mask, P, n);
    Eigen::FullPivLU<Matrix> lu(L1);
    if (!lu.isInvertible()) throw SingularSystem("first-order expansion operator is singular");
    return si.unpack(lu.solve(si.pack(rhs)), n);
}

}  // namespace

Propagators propagators(const Kernel& H0, const Kernel& X, const HyperParams& hyper,
                        ArchMask mask) {
    hyper.validate();
    const int P = H0.P;
    Propagators p;
    p.G_h = chol_inverse(H0.data, "H0");
    const Matrix X_hid = shifted(X, TimeRange::Hidden, 0).data;
    p.G_h_plus = chol_inverse(
        hyper.w * apply_mask_matrix(mask, H0.data, P) + hyper.u * X_hid, "one-step-ahead prior");
    const std::vector<int> pos = supervised_positions(H0.grid);
    Matrix A = hyper.v * restrict_pos(H0.data, pos, P);
    A.diagonal().array() += kappa_or_floor(hyper);
    p.G_y = chol_inverse(A, "label gram");
    return p;
}

Matrix l1_apply(const Matrix& S, const Matrix& G, const HyperParams& hyper, ArchMask mask,
                int P) {
    const Matrix Sm = hyper.w * apply_mask_matrix(mask, shift_dr(S, P), P);
    const Matrix D = S - Sm;
    Matrix r = G * S * G - G * Sm * G;
    r -= hyper.w * apply_mask_matrix(mask, shift_ul(G * D * G, P), P);
    return symmetrized(r);
}

Matrix half_q_apply(const Matrix& S, const Matrix& G, const HyperParams& hyper, ArchMask mask,
                    int P) {
    const Matrix Sm = hyper.w * apply_mask_matrix(mask, shift_dr(S, P), P);
    const Matrix D = S - Sm;
    const Matrix GSm = G * Sm;
    Matrix r = GSm * GSm * G - G * S * G * S * G;
    const Matrix cross = GSm * (G * D * G) + (G * D * G) * (Sm * G);
    r += hyper.w * apply_mask_matrix(mask, shift_ul(cross, P), P);
    return symmetrized(r);
}

Matrix label_source(const Matrix& H0, const Matrix& Y_sup, const std::vector<int>& sup_pos,
                    const HyperParams& hyper, int P, int dim) {
    Matrix A = hyper.v * restrict_pos(H0, sup_pos, P);
    A.diagonal().array() += kappa_or_floor(hyper);
    const Matrix Ainv = chol_inverse(A, "label gram");
    return hyper.v * embed_pos(Ainv * Y_sup * Ainv, sup_pos, P, dim);
}

Matrix label_source_variation(const Matrix& S, const Matrix& H0, const Matrix& Y_sup,
                              const std::vector<int>& sup_pos, const HyperParams& hyper, int P,
                              int dim) {
    Matrix A = hyper.v * restrict_pos(H0, sup_pos, P);
    A.diagonal().array() += kappa_or_floor(hyper);
    const Matrix Ainv = chol_inverse(A, "label gram");
    const Matrix S_T = restrict_pos(S, sup_pos, P);
    const Matrix one = Ainv * S_T * Ainv * Y_sup * Ainv;
    return -hyper.v * hyper.v * embed_pos(one + one.transpose(), sup_pos, P, dim);
}

Matrix l1_matrix(const Matrix& G, const HyperParams& hyper, ArchMask mask, int P, int dim) {
    const SymIndex si(dim);
    Matrix L1(si.size(), si.size());
    for (int k = 0; k < si.size(); ++k)
        L1.col(k) = si.pack(l1_apply(si.basis(k, dim), G, hyper, mask, P));
    return L1;
}

Kernel delta1(const Kernel& H0, const Kernel& Y, const HyperParams& hyper, ArchMask mask) {
    hyper.validate();
    const int P = H0.P;
    const std::vector<int> pos = supervised_positions(H0.grid);
    const Matrix Y_sup = restrict_supervised(Y, H0.grid).data;
    const Matrix G = chol_inverse(H0.data, "H0");
    const Matrix rhs = label_source(H0.data, Y_sup, pos, hyper, P, static_cast<int>(G.rows()));
    Kernel out(H0.grid, P, TimeRange::Hidden);
    out.set_data(solve_order(G, hyper, mask, P, rhs));
    return out;
}

Kernel delta2(const Kernel& H0, const Kernel& D1, const Kernel& Y, const HyperParams& hyper,
              ArchMask mask) {
    hyper.validate();
    const int P = H0.P;
    const int dim = static_cast<int>(H0.data.rows());
    const std::vector<int> pos = supervised_positions(H0.grid);
    const Matrix Y_sup = restrict_supervised(Y, H0.grid).data;
    const Matrix G = chol_inverse(H0.data, "H0");
    const Matrix rhs = label_source_variation(D1.data, H0.data, Y_sup, pos, hyper, P, dim) -
                       half_q_apply(D1.data, G, hyper, mask, P);
    Kernel out(H0.grid, P, TimeRange::Hidden);
    out.set_data(solve_order(G, hyper, mask, P, rhs));
    return out;
}

Kernel perturbative_kernel(const Kernel& H0, const Kernel& Y, const HyperParams& hyper,
                           ArchMask mask) {
    const Kernel D1 = delta1(H0, Y, hyper, mask);
    const Kernel D2 = delta2(H0, D1, Y, hyper, mask);
    Kernel out = H0;
    out.set_data(H0.data + D1.data + D2.data);
    return out;
}

std::vector<ExpansionRow> expansion_error(const Task& task, const HyperParams& hyper,
                                          ArchMask mask, const std::vector<double>& scales,
                                          const SolverOptions& opts) {
    const NngpResult prior = nngp_kernel(task, hyper, Activation::Linear, mask);
    const Kernel Y = label_kernel(task);
    LinearObjective obj = make_linear_objective(task, hyper, mask);
    const Matrix Y_sup_base = obj.Y_sup;

    std::vector<ExpansionRow> rows;
    double prev_err2 = 0.0;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const double s = scales[k];
        Kernel Ys = Y;
        Ys.set_data(s * Y.data);
        const Kernel D1 = delta1(prior.H0, Ys, hyper, mask);
        const Kernel D2 = delta2(prior.H0, D1, Ys, hyper, mask);

        obj.Y_sup = s * Y_sup_base;
        Kernel init = prior.H0;
        init.set_data(project_psd_matrix(prior.H0.data + D1.data + D2.data, 1e-10));
        const SolveReport rep = solve_map(obj, init, opts);

        ExpansionRow row;
        row.scale = s;
        row.arch = mask;
        row.err_order1 = (rep.H_star.data - (prior.H0.data + D1.data)).norm();
        row.err_order2 = (rep.H_star.data - (prior.H0.data + D1.data + D2.data)).norm();
        row.ratio = (k > 0 && row.err_order2 > 0) ? prev_err2 / row.err_order2 : 0.0;
        prev_err2 = row.err_order2;
        rows.push_back(row);
    }
    return rows;
}

void write_expansion_csv(const std::string& path, const std::vector<ExpansionRow>& rows) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << "scale,arch,err_order1,err_order2,ratio\n";
        char buf[256];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%.17g,%s,%.17g,%.17g,%.17g\n", r.scale,
                          to_string(r.arch).c_str(), r.err_order1, r.err_order2, r.ratio);
            f << buf;
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
