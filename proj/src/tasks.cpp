#include "kmft/tasks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace kmft {

void Task::validate() const {
    if (static_cast<int>(x.size()) != grid.n_times())
        throw InvalidShape("task x must cover all input times");
    for (const auto& xt : x)
        if (xt.rows() != P || xt.cols() != D) throw InvalidShape("task x block shape");
    if (y.rows() != grid.n_times() || y.cols() != P) throw InvalidShape("task y shape");
    if (!x.empty() && !(x[0].allFinite())) throw InvalidShape("task x must be finite");
    for (int t : grid.supervised) {
        const int i = t - 2;
        if (!y.row(i).allFinite()) throw InvalidShape("task y must be finite where supervised");
    }
}

Task sinusoid_task(int T) {
    if (T < 3) throw InvalidShape("sinusoid_task requires T >= 3");
    TimeGrid grid(T, [&] {
        std::vector<int> s;
        for (int t = 2; t <= T; ++t) s.push_back(t);
        return s;
    }());
    Task task;
    task.name = "sinusoid";
    task.grid = grid;
    task.P = 1;
    task.D = 1;
    task.x.assign(T - 1, Matrix::Zero(1, 1));
    task.x[0](0, 0) = 1.0;
    task.y = Matrix::Zero(T - 1, 1);
    for (int t = 2; t <= T; ++t) task.y(t - 2, 0) = std::cos(2.0 * M_PI * t / T);
    task.validate();
    return task;
}

Task endpoint_classification(int P, int D) {
    if (P > D) throw InvalidShape("endpoint_classification requires P <= D");
    if (P < 2 || P % 2 != 0) throw InvalidShape("endpoint_classification requires even P >= 2");
    const int T = 4;
    TimeGrid grid(T, {T});
    Task task;
    task.name = "endpoint_classification";
    task.grid = grid;
    task.P = P;
    task.D = D;
    task.x.assign(T - 1, Matrix::Zero(P, D));
    for (int p = 0; p < P; ++p) task.x[0](p, p) = std::sqrt(static_cast<double>(D));
    task.y = Matrix::Zero(T - 1, P);
    for (int p = 0; p < P; ++p) task.y(T - 2, p) = p < P / 2 ? 1.0 : -1.0;
    task.validate();
    return task;
}

Task teacher_rotation_task(int T, double dphi, double phi0,
                           const std::vector<int>& supervised) {
    if (T < 3) throw InvalidShape("teacher_rotation_task requires T >= 3");
    if (supervised.empty()) throw EmptySupervision();
    TimeGrid grid(T, supervised);
    Task task;
    task.name = "teacher_rotation";
    task.grid = grid;
    task.P = 1;
    task.D = 2;
    task.x.assign(T - 1, Matrix::Zero(1, 2));
    task.x[0](0, 0) = std::cos(phi0);
    task.x[0](0, 1) = std::sin(phi0);
    task.y = Matrix::Zero(T - 1, 1);
    // y^t = V* (W*)^t U* x^0 with W* the 2D rotation by dphi, V* = (1,0).
    for (int t = 2; t <= T; ++t) {
        const double ang = phi0 + t * dphi;
        task.y(t - 2, 0) = std::cos(ang);
    }
    task.validate();
    return task;
}

Task endpoint_regression_task(int T, double y_final, double x_scale) {
    if (T < 3) throw InvalidShape("endpoint_regression_task requires T >= 3");
    TimeGrid grid(T, {T});
    Task task;
    task.name = "endpoint_regression";
    task.grid = grid;
    task.P = 1;
    task.D = 1;
    task.x.assign(T - 1, Matrix::Zero(1, 1));
    task.x[0](0, 0) = x_scale;
    task.y = Matrix::Zero(T - 1, 1);
    task.y(T - 2, 0) = y_final;
    task.validate();
    return task;
}

Kernel input_kernel(const Task& task) {
    const int n = task.grid.n_times();
    const int P = task.P;
    Matrix X(n * P, n * P);
    for (int t = 0; t < n; ++t)
        for (int s = 0; s < n; ++s)
            X.block(t * P, s * P, P, P) =
                task.x[t] * task.x[s].transpose() / static_cast<double>(task.D);
    return Kernel(task.grid, P, task.grid.input_times(), std::move(X));
}

Kernel label_kernel(const Task& task) {
    const int n = task.grid.n_times();
    const int P = task.P;
    Matrix Y = Matrix::Zero(n * P, n * P);
    for (int t = 0; t < n; ++t) {
        if (!task.grid.is_supervised(t + 2)) continue;
        for (int s = 0; s < n; ++s) {
            if (!task.grid.is_supervised(s + 2)) continue;
            Y.block(t * P, s * P, P, P) = task.y.row(t).transpose() * task.y.row(s);
        }
    }
    return Kernel(task.grid, P, task.grid.output_times(), std::move(Y));
}

void write_task_manifest(const std::string& path, const Task& task) {
    nlohmann::json j;
    j["generator"] = task.name;
    j["T"] = task.grid.T;
    j["P"] = task.P;
    j["D"] = task.D;
    j["supervised"] = task.grid.supervised;
    std::vector<std::vector<double>> y(task.y.rows());
    for (int i = 0; i < task.y.rows(); ++i)
        for (int p = 0; p < task.y.cols(); ++p) y[i].push_back(task.y(i, p));
    j["y"] = y;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace kmft
