#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/dynamics.hpp"

namespace koopman {

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t b = cell.find_first_not_of(' ');
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace detail

/// Writes `t,x1..xn[,u1..up]` with 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << 't';
    for (Eigen::Index i = 0; i < traj.state_dim(); ++i) os << ",x" << i + 1;
    for (Eigen::Index i = 0; i < traj.input_dim(); ++i) os << ",u" << i + 1;
    os << '\n';
    for (Eigen::Index k = 0; k < traj.samples(); ++k) {
        os << detail::format_double(traj.times[k]);
        for (Eigen::Index i = 0; i < traj.state_dim(); ++i) os << ',' << detail::format_double(traj.states(i, k));
        for (Eigen::Index i = 0; i < traj.input_dim(); ++i) os << ',' << detail::format_double(traj.inputs(i, k));
        os << '\n';
    }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path.string() + "' for writing");
    write_trajectory_csv(os, traj);
}

/// Raw numeric table with its header, as read from a CSV file.
struct CsvTable {
    std::vector<std::string> header;
    Matrix data; ///< rows = samples, cols = header entries

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

inline CsvTable read_csv_table(std::istream& is, const std::string& source) {
    CsvTable table;
    std::string line;
    if (!std::getline(is, line)) throw ValidationError(source + ": empty file");
    table.header = detail::split_csv_line(line);
    if (table.header.empty()) throw ValidationError(source + ": empty header");
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != table.header.size()) {
            throw ValidationError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                  " columns, header has " + std::to_string(table.header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::size_t used = 0;
            try {
                row[c] = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size() || !std::isfinite(row[c])) {
                throw ValidationError(source + ": line " + std::to_string(line_no) + ", column " +
                                      std::to_string(c + 1) + " ('" + table.header[c] + "'): bad number '" +
                                      cells[c] + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    table.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            table.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return table;
}

inline CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + path.string() + "'");
    return read_csv_table(is, path.string());
}

namespace detail {

inline double uniform_step(const Vector& t, const std::string& source) {
    if (t.size() < 2) return 0.0;
    const double dt = (t[t.size() - 1] - t[0]) / static_cast<double>(t.size() - 1);
    if (!(dt > 0.0)) throw ValidationError(source + ": time column must be increasing");
    for (Eigen::Index k = 1; k < t.size(); ++k) {
        if (std::fabs((t[k] - t[k - 1]) - dt) > 1e-6 * dt + 1e-12) {
            throw ValidationError(source + ": non-uniform time step at row " + std::to_string(k + 1));
        }
    }
    return dt;
}

} // namespace detail

/// Reads a trajectory in the `t,x1..xn[,u1..up]` format.
inline Trajectory read_trajectory_csv(std::istream& is, const std::string& source = "<stream>") {
    CsvTable table = read_csv_table(is, source);
    if (table.column("t") != 0) throw ValidationError(source + ": first column must be 't'");
    std::vector<int> xs;
    std::vector<int> us;
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        const std::string& h = table.header[c];
        if (h.size() >= 2 && (h[0] == 'x' || h[0] == 'u')) {
            (h[0] == 'x' ? xs : us).push_back(static_cast<int>(c));
        } else {
            throw ValidationError(source + ": unexpected column '" + h + "'");
        }
    }
    if (xs.empty()) throw ValidationError(source + ": no state columns");
    Trajectory traj;
    traj.times = table.data.col(0);
    traj.dt = detail::uniform_step(traj.times, source);
    traj.states.resize(static_cast<Eigen::Index>(xs.size()), table.data.rows());
    traj.inputs.resize(static_cast<Eigen::Index>(us.size()), table.data.rows());
    for (std::size_t i = 0; i < xs.size(); ++i) traj.states.row(static_cast<Eigen::Index>(i)) = table.data.col(xs[i]).transpose();
    for (std::size_t i = 0; i < us.size(); ++i) traj.inputs.row(static_cast<Eigen::Index>(i)) = table.data.col(us[i]).transpose();
    return traj;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + path.string() + "'");
    return read_trajectory_csv(is, path.string());
}

inline nlohmann::json trajectory_metadata(const Trajectory& t, const std::string& file) {
    return {{"file", file},        {"system", t.system}, {"seed", t.seed}, {"dt", t.dt},
            {"samples", t.samples()}, {"signal", t.signal}};
}

/// One CSV per trajectory plus manifest.json in `dir`.
inline void write_trajectory_set(const std::filesystem::path& dir, const std::vector<Trajectory>& set,
                                  const nlohmann::json& extra = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = extra;
    manifest["trajectories"] = nlohmann::json::array();
    for (std::size_t i = 0; i < set.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%04zu.csv", i);
        write_trajectory_csv(dir / name, set[i]);
        manifest["trajectories"].push_back(trajectory_metadata(set[i], name));
    }
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": invalid JSON: " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path.string() + "' for writing");
    os << j.dump(2) << '\n';
}

/// Reads a set written by write_trajectory_set, or a single CSV file.
inline std::vector<Trajectory> read_trajectory_set(const std::filesystem::path& path) {
    if (!std::filesystem::is_directory(path)) return {read_trajectory_csv(path)};
    const auto manifest_path = path / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw ValidationError("'" + path.string() + "' has no manifest.json");
    const nlohmann::json manifest = read_json_file(manifest_path);
    std::vector<Trajectory> out;
    for (const auto& entry : manifest.at("trajectories")) {
        Trajectory t = read_trajectory_csv(path / entry.at("file").get<std::string>());
        t.seed = entry.value("seed", std::uint64_t{0});
        t.system = entry.value("system", std::string());
        if (entry.contains("signal")) t.signal = entry.at("signal");
        out.push_back(std::move(t));
    }
    if (out.empty()) throw ValidationError("'" + path.string() + "' lists no trajectories");
    return out;
}

} // namespace koopman
