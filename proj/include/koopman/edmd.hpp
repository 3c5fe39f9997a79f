#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/dictionary.hpp"
#include "koopman/dynamics.hpp"

namespace koopman {

/// Snapshot pairs (X, X') with optional inputs U, never spanning two trajectories.
struct SnapshotSet {
    Matrix X;
    Matrix Xp;
    Matrix U; ///< p x cols, or 0 x cols
    double dt = 0.0;
    nlohmann::json manifest = nlohmann::json::array();

    Eigen::Index cols() const noexcept { return X.cols(); }
    bool has_inputs() const noexcept { return U.rows() > 0; }
};

inline SnapshotSet assemble(const std::vector<Trajectory>& trajectories) {
    if (trajectories.empty()) throw ValidationError("assemble needs at least one trajectory");
    const Trajectory& first = trajectories.front();
    const Eigen::Index n = first.state_dim();
    const Eigen::Index p = first.input_dim();
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const Trajectory& t = trajectories[i];
        const std::string tag = "trajectory " + std::to_string(i);
        if (t.samples() < 2) throw ValidationError(tag + " has fewer than 2 samples");
        if (t.state_dim() != n) throw ValidationError(tag + " has a different state dimension");
        if (t.input_dim() != p) throw ValidationError(tag + " has a different input dimension");
        if (std::fabs(t.dt - first.dt) > 1e-9 * first.dt) throw ValidationError(tag + " has a different dt");
        if (!t.states.allFinite() || !t.inputs.allFinite()) throw ValidationError(tag + " contains non-finite values");
        total += t.samples() - 1;
    }
    SnapshotSet s;
    s.dt = first.dt;
    s.X.resize(n, total);
    s.Xp.resize(n, total);
    s.U.resize(p, total);
    Eigen::Index col = 0;
    for (const Trajectory& t : trajectories) {
        const Eigen::Index m = t.samples() - 1;
        s.X.middleCols(col, m) = t.states.leftCols(m);
        s.Xp.middleCols(col, m) = t.states.rightCols(m);
        if (p > 0) s.U.middleCols(col, m) = t.inputs.leftCols(m);
        s.manifest.push_back({{"system", t.system}, {"seed", t.seed}, {"pairs", m}, {"signal", t.signal}});
        col += m;
    }
    return s;
}

/// SVD pseudoinverse; singular values below rtol * sigma_max are dropped.
/// rtol < 0 selects max(rows, cols) * eps.
inline Matrix pinv(const Matrix& M, double rtol = -1.0) {
    if (!M.allFinite()) throw NumericalError("pinv: matrix has non-finite entries");
    if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
    if (rtol < 0.0) rtol = static_cast<double>(std::max(M.rows(), M.cols())) * std::numeric_limits<double>::epsilon();
    Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("pinv: SVD failed");
    const Vector& s = svd.singularValues();
    const double cutoff = rtol * (s.size() > 0 ? s[0] : 0.0);
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > cutoff && s[i] > 0.0) inv[i] = 1.0 / s[i];
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

struct KoopmanModel {
    Matrix Kt;
    Matrix Bt; ///< N x p, or N x 0 for autonomous models
    double dt = 0.0;
    Dictionary dictionary{1, {ObservableFn::coordinate(0)}};
    double fit_residual = 0.0;
    nlohmann::json manifest = nlohmann::json::object();
    std::vector<std::string> warnings;

    int N() const noexcept { return static_cast<int>(Kt.rows()); }
    int n() const noexcept { return dictionary.state_dim(); }
    int p() const noexcept { return static_cast<int>(Bt.cols()); }
    bool controlled() const noexcept { return Bt.cols() > 0; }
    ProjectionMatrix projection() const { return ProjectionMatrix(dictionary); }
};

struct FitOptions {
    double rtol = -1.0; ///< pinv tolerance; < 0 selects the default
};

namespace detail {

inline void check_fit_inputs(const SnapshotSet& s, const Dictionary& dict) {
    if (s.X.rows() != dict.state_dim()) {
        throw ValidationError("snapshots have state dimension " + std::to_string(s.X.rows()) +
                              ", dictionary expects " + std::to_string(dict.state_dim()));
    }
    if (s.cols() < 1) throw ValidationError("no snapshot pairs");
    if (!(s.dt > 0.0)) throw ValidationError("snapshot dt must be positive");
}

inline double relative_residual(const Matrix& target, const Matrix& fitted) {
    const double denom = target.norm();
    const double num = (target - fitted).norm();
    return denom > 0.0 ? num / denom : num;
}

inline KoopmanModel make_model(const SnapshotSet& s, const Dictionary& dict) {
    KoopmanModel m;
    m.dt = s.dt;
    m.dictionary = dict;
    m.manifest = {{"pairs", s.cols()}, {"sources", s.manifest}};
    if (s.cols() < dict.size()) {
        m.warnings.push_back("only " + std::to_string(s.cols()) + " snapshot pairs for N = " +
                             std::to_string(dict.size()) + " observables; the fit is underdetermined");
    }
    return m;
}

} // namespace detail

/// K_t = Psi(X') Psi(X)^+.
inline KoopmanModel fit(const SnapshotSet& s, const Dictionary& dict, const FitOptions& opt = {}) {
    detail::check_fit_inputs(s, dict);
    if (s.has_inputs()) throw ValidationError("snapshots carry inputs; use fit_with_control");
    const Matrix PsiX = lift(dict, s.X);
    const Matrix PsiXp = lift(dict, s.Xp);
    KoopmanModel m = detail::make_model(s, dict);
    m.Kt = PsiXp * pinv(PsiX, opt.rtol);
    m.Bt.resize(dict.size(), 0);
    m.fit_residual = detail::relative_residual(PsiXp, m.Kt * PsiX);
    return m;
}

/// (K_t B_t) = Psi(X') (Psi(X); U)^+.
inline KoopmanModel fit_with_control(const SnapshotSet& s, const Dictionary& dict, const FitOptions& opt = {}) {
    detail::check_fit_inputs(s, dict);
    if (!s.has_inputs()) throw ValidationError("fit_with_control needs snapshots with inputs");
    if (s.U.cols() != s.X.cols()) throw ValidationError("input matrix column count does not match snapshots");
    const Eigen::Index N = dict.size();
    const Eigen::Index p = s.U.rows();
    Matrix regressor(N + p, s.cols());
    regressor.topRows(N) = lift(dict, s.X);
    regressor.bottomRows(p) = s.U;
    const Matrix PsiXp = lift(dict, s.Xp);
    const Matrix G = PsiXp * pinv(regressor, opt.rtol);
    KoopmanModel m = detail::make_model(s, dict);
    m.Kt = G.leftCols(N);
    m.Bt = G.rightCols(p);
    m.fit_residual = detail::relative_residual(PsiXp, G * regressor);
    return m;
}

/// Dispatches on whether the snapshots carry inputs.
inline KoopmanModel fit_auto(const SnapshotSet& s, const Dictionary& dict, const FitOptions& opt = {}) {
    return s.has_inputs() ? fit_with_control(s, dict, opt) : fit(s, dict, opt);
}

struct StraightPrediction {
    Matrix lifted; ///< N x (steps+1)
    Matrix states; ///< n x (steps+1)
};

namespace detail {

inline void check_inputs(const KoopmanModel& model, const Matrix* u_seq, std::size_t steps) {
    if (!model.controlled()) return;
    if (u_seq == nullptr) throw ValidationError("controlled model needs an input sequence");
    if (u_seq->rows() != model.p()) throw ValidationError("input sequence has the wrong number of rows");
    if (static_cast<std::size_t>(u_seq->cols()) < steps) {
        throw ValidationError("input sequence has " + std::to_string(u_seq->cols()) + " samples, need " +
                              std::to_string(steps));
    }
}

} // namespace detail

/// Lifts x0 once and iterates z_{k+1} = K_t z_k + B_t u_k.
inline StraightPrediction predict_straight(const KoopmanModel& model, const Vector& x0, const Matrix* u_seq,
                                           std::size_t steps) {
    detail::check_inputs(model, u_seq, steps);
    const ProjectionMatrix P = model.projection();
    StraightPrediction out;
    const auto cols = static_cast<Eigen::Index>(steps) + 1;
    out.lifted.resize(model.N(), cols);
    out.lifted.col(0) = eval(model.dictionary, x0);
    for (Eigen::Index k = 0; k + 1 < cols; ++k) {
        Vector z = model.Kt * out.lifted.col(k);
        if (model.controlled()) z += model.Bt * u_seq->col(k);
        out.lifted.col(k + 1) = z;
    }
    out.states = out.lifted.topRows(P.rows());
    return out;
}

inline StraightPrediction predict_straight(const KoopmanModel& model, const Vector& x0, std::size_t steps) {
    return predict_straight(model, x0, nullptr, steps);
}

/// x_{k+1} = P (K_t Psi(x_k) + B_t u_k), re-lifting every step.
inline Matrix predict_corrected(const KoopmanModel& model, const Vector& x0, const Matrix* u_seq, std::size_t steps) {
    detail::check_inputs(model, u_seq, steps);
    const ProjectionMatrix P = model.projection();
    Matrix states(P.rows(), static_cast<Eigen::Index>(steps) + 1);
    if (x0.size() != P.rows()) throw ValidationError("initial state has the wrong dimension");
    if (!x0.allFinite()) throw ValidationError("initial state contains non-finite values");
    states.col(0) = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Vector z = model.Kt * eval(model.dictionary, states.col(kk));
        if (model.controlled()) z += model.Bt * u_seq->col(kk);
        Vector x = project(P, z);
        if (!x.allFinite()) throw DivergenceError(k + 1, "corrected prediction diverged");
        states.col(kk + 1) = x;
    }
    return states;
}

inline Matrix predict_corrected(const KoopmanModel& model, const Vector& x0, std::size_t steps) {
    return predict_corrected(model, x0, nullptr, steps);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json matrix_to_json(const Matrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", rows}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (r < 0 || c < 0 || static_cast<Eigen::Index>(data.size()) != r) throw ValidationError("matrix: row count mismatch");
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = data.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != c) throw ValidationError("matrix: column count mismatch");
        for (Eigen::Index jj = 0; jj < c; ++jj) M(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
    }
    return M;
}

inline nlohmann::json dictionary_to_json(const Dictionary& dict) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : dict.observables()) {
        obs.push_back({{"kind", to_string(o.kind)}, {"label", o.label}, {"expr", o.expr.str()}});
    }
    return {{"state_dim", dict.state_dim()}, {"observables", obs}};
}

inline Dictionary dictionary_from_json(const nlohmann::json& j) {
    std::vector<ObservableFn> obs;
    for (const auto& o : j.at("observables")) {
        Expr e = parse_expression(o.at("expr").get<std::string>());
        std::string label = o.value("label", e.str());
        ObservableKind kind = parse_observable_kind(o.value("kind", std::string("custom")));
        obs.push_back({kind, std::move(label), std::move(e)});
    }
    return Dictionary(j.at("state_dim").get<int>(), std::move(obs));
}

inline nlohmann::json model_to_json(const KoopmanModel& m) {
    return {{"format", "koopman-model/1"},
            {"dt", m.dt},
            {"N", m.N()},
            {"n", m.n()},
            {"p", m.p()},
            {"Kt", matrix_to_json(m.Kt)},
            {"Bt", matrix_to_json(m.Bt)},
            {"dictionary", dictionary_to_json(m.dictionary)},
            {"fit_residual", m.fit_residual},
            {"warnings", m.warnings},
            {"manifest", m.manifest}};
}

inline KoopmanModel model_from_json(const nlohmann::json& j) {
    try {
        KoopmanModel m;
        m.dt = j.at("dt").get<double>();
        m.dictionary = dictionary_from_json(j.at("dictionary"));
        m.Kt = matrix_from_json(j.at("Kt"));
        m.Bt = j.contains("Bt") ? matrix_from_json(j.at("Bt")) : Matrix(m.Kt.rows(), 0);
        m.fit_residual = j.value("fit_residual", 0.0);
        if (j.contains("manifest")) m.manifest = j.at("manifest");
        if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
        if (!(m.dt > 0.0)) throw ValidationError("model dt must be positive");
        if (m.Kt.rows() != m.dictionary.size() || m.Kt.cols() != m.dictionary.size()) {
            throw ValidationError("model K_t does not match the dictionary size");
        }
        if (m.Bt.rows() != m.Kt.rows()) throw ValidationError("model B_t has the wrong number of rows");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

} // namespace koopman
