#pragma once

#include <string>
#include <vector>

#include "kmft/errors.hpp"
#include "kmft/kernelspace.hpp"

namespace kmft::detail {

// Shift a block matrix down-right (entry block (t,t') <- (t-1,t'-1)) or
// up-left (entry block (t,t') <- (t+1,t'+1)) by one P-sized time block,
// zero fill at the vacated boundary.
inline Matrix shift_dr(const Matrix& m, int P) {
    Matrix r = Matrix::Zero(m.rows(), m.cols());
    const int n = static_cast<int>(m.rows()) - P;
    if (n > 0) r.block(P, P, n, n) = m.block(0, 0, n, n);
    return r;
}

inline Matrix shift_ul(const Matrix& m, int P) {
    Matrix r = Matrix::Zero(m.rows(), m.cols());
    const int n = static_cast<int>(m.rows()) - P;
    if (n > 0) r.block(0, 0, n, n) = m.block(P, P, n, n);
    return r;
}

// Gather the P-sized time blocks listed in pos into a dense sub-matrix.
inline Matrix restrict_pos(const Matrix& m, const std::vector<int>& pos, int P) {
    const int k = static_cast<int>(pos.size());
    Matrix r(k * P, k * P);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            r.block(i * P, j * P, P, P) = m.block(pos[i] * P, pos[j] * P, P, P);
    return r;
}

// Scatter a sub-matrix back onto the listed time blocks, zero elsewhere.
inline Matrix embed_pos(const Matrix& sub, const std::vector<int>& pos, int P, int dim) {
    Matrix r = Matrix::Zero(dim, dim);
    const int k = static_cast<int>(pos.size());
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            r.block(pos[i] * P, pos[j] * P, P, P) = sub.block(i * P, j * P, P, P);
    return r;
}

inline Matrix chol_inverse(const Matrix& m, const char* what) {
    Eigen::LLT<Matrix> llt(symmetrized(m));
    if (llt.info() != Eigen::Success) throw SingularKernel(std::string(what) + " is not PD");
    return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

inline double chol_logdet(const Matrix& m, const char* what) {
    Eigen::LLT<Matrix> llt(symmetrized(m));
    if (llt.info() != Eigen::Success) throw SingularKernel(std::string(what) + " is not PD");
    double ld = 0.0;
    for (int i = 0; i < m.rows(); ++i) {
        const double d = llt.matrixL()(i, i);
        if (d < 1e-150) throw SingularKernel(std::string(what) + " determinant underflow");
        ld += std::log(d);
    }
    return 2.0 * ld;
}

}  // namespace kmft::detail
