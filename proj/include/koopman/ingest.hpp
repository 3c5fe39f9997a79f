#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/trajectory_io.hpp"

namespace koopman {

namespace detail {

/// Row i of the returned matrix holds the weights that evaluate, at offset
/// `at` within a window of `window` samples, the degree-`order` least-squares
/// polynomial through those samples.
inline Vector savgol_weights(int window, int order, int at) {
    Matrix A(window, order + 1);
    for (int i = 0; i < window; ++i) {
        double p = 1.0;
        for (int j = 0; j <= order; ++j) {
            A(i, j) = p;
            p *= static_cast<double>(i - at);
        }
    }
    // Value of the fit at offset 0 is the first coefficient: e0^T (A^T A)^-1 A^T.
    const Matrix coeffs = A.colPivHouseholderQr().solve(Matrix::Identity(window, window));
    return coeffs.row(0).transpose();
}

} // namespace detail

/// Savitzky-Golay smoothing. Interior samples use the centred window; the
/// first and last half-windows are evaluated from the fit over the end windows.
inline Vector savgol_smooth(const Vector& y, int window, int order = 3) {
    if (window < 3 || window % 2 == 0) throw ValidationError("smoothing window must be an odd integer >= 3");
    if (order < 0 || order >= window) throw ValidationError("polynomial order must be below the window length");
    if (y.size() < window) {
        throw ValidationError("smoothing window " + std::to_string(window) + " is longer than the series (" +
                              std::to_string(y.size()) + " samples)");
    }
    const int h = window / 2;
    const auto M = y.size();
    Vector out(M);
    const Vector centre = detail::savgol_weights(window, order, h);
    for (Eigen::Index k = h; k < M - h; ++k) out[k] = centre.dot(y.segment(k - h, window));
    for (int k = 0; k < h; ++k) {
        out[k] = detail::savgol_weights(window, order, k).dot(y.head(window));
        out[M - 1 - k] = detail::savgol_weights(window, order, window - 1 - k).dot(y.tail(window));
    }
    return out;
}

/// Central differences, forward/backward at the two ends.
inline Vector central_difference(const Vector& y, double dt) {
    if (!(dt > 0.0)) throw ValidationError("differentiation step must be positive");
    const auto M = y.size();
    if (M < 2) throw ValidationError("need at least two samples to differentiate");
    Vector d(M);
    d[0] = (y[1] - y[0]) / dt;
    d[M - 1] = (y[M - 1] - y[M - 2]) / dt;
    for (Eigen::Index k = 1; k + 1 < M; ++k) d[k] = (y[k + 1] - y[k - 1]) / (2.0 * dt);
    return d;
}

inline Vector estimate_velocity(const Vector& angle, double dt, int window, int order = 3) {
    return central_difference(savgol_smooth(angle, window, order), dt);
}

struct IngestSpec {
    std::vector<std::filesystem::path> files;
    std::string time_column = "t";
    std::string angle_column = "x1";
    std::string velocity_column = "x2";        ///< used when present in the file
    std::vector<std::string> input_columns{};  ///< empty: every column named u<k>
    int window = 21;
    std::string scheme = "savgol-central";

    void validate() const {
        if (window < 3 || window % 2 == 0) throw ValidationError("smoothing window must be an odd integer >= 3");
        if (scheme != "savgol-central") throw ValidationError("unknown differentiation scheme '" + scheme + "'");
        if (files.empty()) throw ValidationError("no input files given");
    }
};

struct IngestResult {
    std::vector<Trajectory> trajectories;
    nlohmann::json manifest;
};

/// Replaces x2 by the estimate from x1 and returns the raw series that was replaced.
inline Vector reestimate_velocity(Trajectory& traj, int window) {
    if (traj.state_dim() < 2) throw ValidationError("velocity re-estimation needs a two-dimensional state");
    Vector raw = traj.states.row(1).transpose();
    traj.states.row(1) = estimate_velocity(traj.states.row(0).transpose(), traj.dt, window).transpose();
    return raw;
}

inline IngestResult ingest_measurements(const IngestSpec& spec) {
    spec.validate();
    IngestResult result;
    result.manifest = {{"scheme", spec.scheme}, {"window", spec.window}, {"order", 3},
                       {"files", nlohmann::json::array()}};
    for (const auto& path : spec.files) {
        const std::string src = path.string();
        const CsvTable table = read_csv_table(path);
        const int tc = table.column(spec.time_column);
        const int ac = table.column(spec.angle_column);
        if (tc < 0) throw ValidationError(src + ": missing time column '" + spec.time_column + "'");
        if (ac < 0) throw ValidationError(src + ": missing angle column '" + spec.angle_column + "'");
        const int vc = table.column(spec.velocity_column);
        std::vector<int> ucols;
        if (spec.input_columns.empty()) {
            for (std::size_t c = 0; c < table.header.size(); ++c) {
                const auto& h = table.header[c];
                if (h.size() >= 2 && h[0] == 'u' && std::isdigit(static_cast<unsigned char>(h[1]))) {
                    ucols.push_back(static_cast<int>(c));
                }
            }
        } else {
            for (const auto& name : spec.input_columns) {
                const int c = table.column(name);
                if (c < 0) throw ValidationError(src + ": missing input column '" + name + "'");
                ucols.push_back(c);
            }
        }
        Trajectory t;
        t.times = table.data.col(tc);
        if (t.times.size() < 2) throw ValidationError(src + ": need at least two samples");
        t.dt = detail::uniform_step(t.times, src);
        const Vector angle = table.data.col(ac);
        t.states.resize(2, angle.size());
        t.states.row(0) = angle.transpose();
        nlohmann::json entry = {{"file", src}, {"samples", angle.size()}};
        if (vc >= 0) {
            t.states.row(1) = table.data.col(vc).transpose();
            entry["velocity"] = "measured";
        } else {
            if (angle.size() < spec.window) {
                throw ValidationError(src + ": smoothing window " + std::to_string(spec.window) +
                                      " is longer than the series (" + std::to_string(angle.size()) + " samples)");
            }
            const Vector v = estimate_velocity(angle, t.dt, spec.window);
            t.states.row(1) = v.transpose();
            entry["velocity"] = "estimated";
            entry["raw_x1"] = std::vector<double>(angle.data(), angle.data() + angle.size());
            entry["estimated_x2"] = std::vector<double>(v.data(), v.data() + v.size());
        }
        t.inputs.resize(static_cast<Eigen::Index>(ucols.size()), angle.size());
        for (std::size_t i = 0; i < ucols.size(); ++i) {
            t.inputs.row(static_cast<Eigen::Index>(i)) = table.data.col(ucols[i]).transpose();
        }
        t.system = "measured";
        t.signal = {{"kind", "measured"}, {"file", src}};
        result.manifest["files"].push_back(std::move(entry));
        result.trajectories.push_back(std::move(t));
    }
    return result;
}

} // namespace koopman
