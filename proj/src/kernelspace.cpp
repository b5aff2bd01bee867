#include "kmft/kernelspace.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kmft {

TimeGrid::TimeGrid(int T_total, std::vector<int> supervised_times)
    : T(T_total), supervised(std::move(supervised_times)) {
    if (T < 2) throw InvalidShape("TimeGrid requires T >= 2");
    std::sort(supervised.begin(), supervised.end());
    supervised.erase(std::unique(supervised.begin(), supervised.end()), supervised.end());
    for (int t : supervised) {
        if (t < 2 || t > T) throw InvalidShape("supervised time outside output range 2..T");
    }
}

static std::vector<int> iota_range(int first, int count) {
    std::vector<int> r(count);
    for (int i = 0; i < count; ++i) r[i] = first + i;
    return r;
}

std::vector<int> TimeGrid::input_times() const { return iota_range(0, T - 1); }
std::vector<int> TimeGrid::hidden_times() const { return iota_range(1, T - 1); }
std::vector<int> TimeGrid::output_times() const { return iota_range(2, T - 1); }

bool TimeGrid::is_supervised(int t) const {
    return std::binary_search(supervised.begin(), supervised.end(), t);
}

std::string to_string(TimeRange r) {
    switch (r) {
        case TimeRange::Input: return "input";
        case TimeRange::Hidden: return "hidden";
        case TimeRange::Output: return "output";
    }
    return "hidden";
}

TimeRange time_range_from_string(const std::string& s) {
    if (s == "input") return TimeRange::Input;
    if (s == "hidden") return TimeRange::Hidden;
    if (s == "output") return TimeRange::Output;
    throw InvalidShape("unknown time range: " + s);
}

std::string to_string(ArchMask m) { return m == ArchMask::RNN ? "rnn" : "dnn"; }

ArchMask arch_from_string(const std::string& s) {
    if (s == "rnn" || s == "RNN") return ArchMask::RNN;
    if (s == "dnn" || s == "DNN") return ArchMask::DNN;
    throw InvalidShape("unknown architecture: " + s);
}

void HyperParams::validate() const {
    if (!(u > 0) || !(w > 0) || !(v > 0)) throw InvalidShape("u, w, v must be positive");
    if (!(kappa >= 0)) throw InvalidShape("kappa must be nonnegative");
    if (N < 1 || D < 1) throw InvalidShape("N, D must be >= 1");
}

static std::vector<int> range_times(const TimeGrid& g, TimeRange r) {
    switch (r) {
        case TimeRange::Input: return g.input_times();
        case TimeRange::Hidden: return g.hidden_times();
        case TimeRange::Output: return g.output_times();
    }
    return g.hidden_times();
}

Kernel::Kernel(TimeGrid g, int P_, TimeRange range)
    : grid(std::move(g)), P(P_), times(range_times(grid, range)) {
    data = Matrix::Zero(dim(), dim());
}

Kernel::Kernel(TimeGrid g, int P_, std::vector<int> times_, Matrix data_)
    : grid(std::move(g)), P(P_), times(std::move(times_)), data(std::move(data_)) {
    if (data.rows() != dim() || data.cols() != dim())
        throw InvalidShape("kernel data does not match times*P");
    data = symmetrized(data);
}

int Kernel::time_index(int t) const {
    auto it = std::find(times.begin(), times.end(), t);
    return it == times.end() ? -1 : static_cast<int>(it - times.begin());
}

void Kernel::set_data(const Matrix& m) {
    if (m.rows() != dim() || m.cols() != dim())
        throw InvalidShape("kernel data does not match times*P");
    data = symmetrized(m);
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Kernel shifted(const Kernel& K, TimeRange target, int dt) {
    const std::vector<int> out_times = range_times(K.grid, target);
    const int P = K.P;
    Kernel R(K.grid, P, target);
    const int n = static_cast<int>(out_times.size());
    for (int i = 0; i < n; ++i) {
        const int si = K.time_index(out_times[i] + dt);
        if (si < 0) continue;
        for (int j = 0; j < n; ++j) {
            const int sj = K.time_index(out_times[j] + dt);
            if (sj < 0) continue;
            R.data.block(i * P, j * P, P, P) = K.data.block(si * P, sj * P, P, P);
        }
    }
    return R;
}

Kernel shift_minus(const Kernel& K, TimeRange target) { return shifted(K, target, -1); }
Kernel shift_plus(const Kernel& K, TimeRange target) { return shifted(K, target, +1); }

Matrix apply_mask_matrix(ArchMask mask, const Matrix& m, int P) {
    if (mask == ArchMask::RNN) return m;
    Matrix r = Matrix::Zero(m.rows(), m.cols());
    for (int b = 0; b * P < m.rows(); ++b)
        r.block(b * P, b * P, P, P) = m.block(b * P, b * P, P, P);
    return r;
}

Kernel apply_mask(ArchMask mask, const Kernel& K) {
    if (mask == ArchMask::RNN) return K;
    Kernel R = K;
    R.data = apply_mask_matrix(mask, K.data, K.P);
    return R;
}

Kernel restrict_supervised(const Kernel& K, const TimeGrid& grid) {
    if (grid.supervised.empty()) throw EmptySupervision();
    std::vector<int> kept;
    for (int t : K.times)
        if (grid.is_supervised(t)) kept.push_back(t);
    if (kept.empty()) throw EmptySupervision();
    const int P = K.P;
    Matrix d(static_cast<int>(kept.size()) * P, static_cast<int>(kept.size()) * P);
    for (size_t i = 0; i < kept.size(); ++i)
        for (size_t j = 0; j < kept.size(); ++j)
            d.block(static_cast<int>(i) * P, static_cast<int>(j) * P, P, P) =
                K.data.block(K.time_index(kept[i]) * P, K.time_index(kept[j]) * P, P, P);
    return Kernel(grid, P, kept, std::move(d));
}

Kernel embed_supervised(const Kernel& K_restricted, const TimeGrid& grid,
                        const std::vector<int>& times) {
    const int P = K_restricted.P;
    Kernel R(grid, P, times, Matrix::Zero(static_cast<int>(times.size()) * P,
                                          static_cast<int>(times.size()) * P));
    for (size_t i = 0; i < times.size(); ++i) {
        const int si = K_restricted.time_index(times[i]);
        if (si < 0) continue;
        for (size_t j = 0; j < times.size(); ++j) {
            const int sj = K_restricted.time_index(times[j]);
            if (sj < 0) continue;
            R.data.block(static_cast<int>(i) * P, static_cast<int>(j) * P, P, P) =
                K_restricted.data.block(si * P, sj * P, P, P);
        }
    }
    return R;
}

Matrix project_psd_matrix(const Matrix& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    Vector ev = es.eigenvalues().cwiseMax(floor);
    return symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

Kernel project_psd(const Kernel& K, double floor) {
    Kernel R = K;
    R.data = project_psd_matrix(K.data, floor);
    return R;
}

double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    return es.eigenvalues().minCoeff();
}

static TimeRange infer_range(const Kernel& K) {
    if (!K.times.empty()) {
        if (K.times.front() == 0) return TimeRange::Input;
        if (K.times.front() == 1) return TimeRange::Hidden;
    }
    return TimeRange::Output;
}

void write_kernel_csv(const std::string& path, const Kernel& K, const std::string& provenance) {
    namespace fs = std::filesystem;
    std::ostringstream out;
    out << "range=" << to_string(infer_range(K)) << ",T=" << K.grid.T << ",P=" << K.P << "\n";
    char buf[32];
    for (int i = 0; i < K.dim(); ++i) {
        for (int j = 0; j < K.dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", K.data(i, j));
            out << buf << (j + 1 == K.dim() ? "\n" : ",");
        }
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw Error("cannot write " + tmp);
        f << out.str();
    }
    fs::rename(tmp, path);

    nlohmann::json meta;
    meta["T"] = K.grid.T;
    meta["P"] = K.P;
    meta["range"] = to_string(infer_range(K));
    meta["times"] = K.times;
    meta["supervised"] = K.grid.supervised;
    meta["provenance"] = provenance;
    const std::string jtmp = path + ".json.tmp";
    {
        std::ofstream f(jtmp);
        if (!f) throw Error("cannot write " + jtmp);
        f << meta.dump(2) << "\n";
    }
    fs::rename(jtmp, path + ".json");
}

Kernel read_kernel_csv(const std::string& path) {
    std::ifstream jf(path + ".json");
    if (!jf) throw Error("missing metadata sidecar for " + path);
    nlohmann::json meta = nlohmann::json::parse(jf);
    TimeGrid grid(meta.at("T").get<int>(), meta.at("supervised").get<std::vector<int>>());
    const int P = meta.at("P").get<int>();
    const std::vector<int> times = meta.at("times").get<std::vector<int>>();
    const int n = static_cast<int>(times.size()) * P;

    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path);
    std::string line;
    std::getline(f, line);  // header
    Matrix d(n, n);
    for (int i = 0; i < n; ++i) {
        if (!std::getline(f, line)) throw Error("truncated kernel csv: " + path);
        std::istringstream row(line);
        std::string cell;
        for (int j = 0; j < n; ++j) {
            if (!std::getline(row, cell, ',')) throw Error("truncated kernel row: " + path);
            d(i, j) = std::stod(cell);
        }
    }
    return Kernel(grid, P, times, std::move(d));
}

}  // namespace kmft
