#include "kmft/inference.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kmft/detail/matrix_ops.hpp"

namespace kmft {

Vector endpoint_predictor(const Kernel& H, const Vector& y_endpoint, const HyperParams& hyper) {
    const int P = H.P;
    if (y_endpoint.size() != P) throw InvalidShape("endpoint labels must have P entries");
    const int nt = static_cast<int>(H.times.size());
    const Matrix Hb = H.data.block((nt - 1) * P, (nt - 1) * P, P, P);
    Matrix A = hyper.v * Hb;
    A.diagonal().array() += hyper.kappa;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success)
        throw SingularKernel("endpoint gram is not PD (kappa=0 with singular block)");
    return hyper.v * Hb * llt.solve(y_endpoint);
}

PredictorResult sequence_predictor(const Kernel& H, const Task& task, const HyperParams& hyper) {
    if (task.grid.supervised.empty()) throw EmptySupervision();
    const int P = H.P;
    const int Tm = task.grid.T - 1;
    const int k = static_cast<int>(task.grid.supervised.size());

    // Supervised output time s reads hidden position s-2; queries run over
    // all output times t via hidden position t-2.
    std::vector<int> sup_pos;
    for (int s : task.grid.supervised) sup_pos.push_back(s - 2);
    Matrix A = hyper.v * detail::restrict_pos(H.data, sup_pos, P);
    A.diagonal().array() += hyper.kappa;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success)
        throw SingularKernel("supervised gram is not PD (kappa=0 with singular block)");

    Vector y_s(k * P);
    for (int i = 0; i < k; ++i)
        y_s.segment(i * P, P) = task.y.row(task.grid.supervised[static_cast<std::size_t>(i)] - 2)
                                    .transpose();
    const Vector alpha = llt.solve(y_s);

    PredictorResult r;
    r.f.resize(Tm, P);
    r.per_time_loss.resize(Tm);
    Matrix cross(P, k * P);
    for (int t = 0; t < Tm; ++t) {
        for (int i = 0; i < k; ++i)
            cross.block(0, i * P, P, P) = H.data.block(t * P, sup_pos[static_cast<std::size_t>(i)] * P, P, P);
        r.f.row(t) = (hyper.v * cross * alpha).transpose();
        r.per_time_loss[t] =
            0.5 * (task.y.row(t) - r.f.row(t)).squaredNorm() / static_cast<double>(P);
    }
    r.loss = r.per_time_loss.mean();
    return r;
}

double cka_matrix(const Matrix& A, const Matrix& B) {
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw InvalidShape("cka requires equal shapes");
    const Matrix Ac = A.array() - A.mean();
    const Matrix Bc = B.array() - B.mean();
    const double na = Ac.norm(), nb = Bc.norm();
    if (na <= 0 || nb <= 0) throw DegenerateInput("cka of a constant matrix");
    return (Ac.cwiseProduct(Bc)).sum() / (na * nb);
}

double cka(const Kernel& A, const Kernel& B) { return cka_matrix(A.data, B.data); }

Vector autocorrelation(const Kernel& C) {
    if (C.P != 1) throw InvalidShape("autocorrelation expects a single-pattern kernel");
    const int nt = static_cast<int>(C.times.size());
    Vector r(nt);
    for (int tau = 0; tau < nt; ++tau) {
        double s = 0.0;
        for (int t = tau; t < nt; ++t) s += C.data(t, t - tau);
        r[tau] = s / static_cast<double>(nt - tau);
    }
    return r;
}

void write_predictor_csv(const std::string& path, const Task& task, const PredictorResult& r) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << "time,y,f,supervised_flag,squared_error\n";
        char buf[256];
        for (int t = 0; t < r.f.rows(); ++t) {
            const int time = t + 2;
            const int sup = task.grid.is_supervised(time) ? 1 : 0;
            for (int p = 0; p < r.f.cols(); ++p) {
                const double y = task.y(t, p), ff = r.f(t, p);
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%.17g\n", time, y, ff, sup,
                              (y - ff) * (y - ff));
                f << buf;
            }
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
