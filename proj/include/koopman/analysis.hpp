#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "koopman/edmd.hpp"

namespace koopman {

struct Spectrum {
    std::vector<Complex> discrete;   ///< mu_i, eigenvalues of K_t
    std::vector<Complex> continuous; ///< lambda_i = log(mu_i) / dt; -inf real part when mu_i = 0
    double dt = 0.0;
    bool has_zero_eigenvalue = false;
};

/// Principal-branch spectrum. Entries are ordered by descending continuous
/// real part, then descending imaginary part, so reports are reproducible.
inline Spectrum spectrum(const Matrix& Kt, double dt) {
    if (Kt.rows() != Kt.cols() || Kt.rows() == 0) throw ValidationError("spectrum needs a non-empty square matrix");
    if (!(dt > 0.0)) throw ValidationError("spectrum needs dt > 0");
    if (!Kt.allFinite()) throw NumericalError("spectrum: K_t has non-finite entries");
    Eigen::EigenSolver<Matrix> es(Kt, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    const ComplexVector mu = es.eigenvalues();
    struct Entry {
        Complex mu, lambda;
    };
    std::vector<Entry> entries;
    Spectrum s;
    s.dt = dt;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        Complex lambda;
        if (mu[i] == Complex(0.0, 0.0)) {
            lambda = Complex(-std::numeric_limits<double>::infinity(), 0.0);
            s.has_zero_eigenvalue = true;
        } else {
            lambda = Complex(std::log(std::abs(mu[i])), std::arg(mu[i])) / dt;
        }
        entries.push_back({mu[i], lambda});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() > b.lambda.real();
        return a.lambda.imag() > b.lambda.imag();
    });
    for (const auto& e : entries) {
        s.discrete.push_back(e.mu);
        s.continuous.push_back(e.lambda);
    }
    return s;
}

inline Spectrum spectrum(const KoopmanModel& model) { return spectrum(model.Kt, model.dt); }

/// Eigenvector matrices with condition number above this are rejected.
inline constexpr double kMaxEigenvectorCondition = 1e12;

/// K = V diag(log mu) V^-1 / dt on the principal branch.
inline Matrix generator(const Matrix& Kt, double dt) {
    if (Kt.rows() != Kt.cols() || Kt.rows() == 0) throw ValidationError("generator needs a non-empty square matrix");
    if (!(dt > 0.0)) throw ValidationError("generator needs dt > 0");
    if (!Kt.allFinite()) throw NumericalError("generator: K_t has non-finite entries");
    Eigen::EigenSolver<Matrix> es(Kt, true);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    const ComplexVector mu = es.eigenvalues();
    const ComplexMatrix V = es.eigenvectors();
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu[i].imag() == 0.0 && mu[i].real() <= 0.0) {
            throw NoPrincipalLogError("K_t has eigenvalue " + std::to_string(mu[i].real()) +
                                      " on the closed negative real axis; no principal logarithm");
        }
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(V);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    const double cond = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
    if (!(cond <= kMaxEigenvectorCondition)) {
        throw IllConditionedError("eigenvector matrix of K_t has condition number " + std::to_string(cond) +
                                  "; K_t is not safely diagonalizable");
    }
    ComplexVector logmu(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) logmu[i] = std::log(mu[i]);
    const ComplexMatrix Kc = V * logmu.asDiagonal() * V.inverse() / dt;
    const double scale = std::max(1.0, Kc.cwiseAbs().maxCoeff());
    const double residue = Kc.imag().cwiseAbs().maxCoeff();
    if (residue > 1e-8 * scale) {
        throw IllConditionedError("matrix logarithm left an imaginary residue of " + std::to_string(residue));
    }
    return Kc.real();
}

inline Matrix generator(const KoopmanModel& model) { return generator(model.Kt, model.dt); }

/// Continuous input matrix under zero-order hold: B_c = K (K_t - I)^-1 B_t.
inline Matrix continuous_input_matrix(const Matrix& K, const Matrix& Kt, const Matrix& Bt) {
    const Eigen::Index N = Kt.rows();
    Eigen::FullPivLU<Matrix> lu(Kt - Matrix::Identity(N, N));
    if (!lu.isInvertible()) throw NumericalError("K_t - I is singular; cannot invert the zero-order hold");
    return K * lu.solve(Bt);
}

inline double default_rank_rtol(Eigen::Index N) {
    return static_cast<double>(N) * std::numeric_limits<double>::epsilon();
}

/// Dimension of the Krylov space span(B, KB, ..., K^{N-1}B), built as an
/// orthonormal staircase. Each new block is orthogonalised against the basis
/// so far (twice) and deflated by SVD at rtol * max(||K||_2, ||B||_2). In exact
/// arithmetic this equals rank (B KB ... K^{N-1}B) without forming the powers.
inline int controllability_rank(const Matrix& K, const Matrix& B, double rtol = -1.0) {
    const Eigen::Index N = K.rows();
    if (K.cols() != N) throw ValidationError("controllability_rank: K must be square");
    if (B.rows() != N) throw ValidationError("controllability_rank: B must have N rows");
    if (!K.allFinite() || !B.allFinite()) throw ValidationError("controllability_rank: non-finite input");
    if (N == 0 || B.cols() == 0) return 0;
    if (rtol < 0.0) rtol = default_rank_rtol(N);
    auto norm2 = [](const Matrix& M) {
        return M.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(M).singularValues()[0];
    };
    const double tol = rtol * std::max(norm2(K), norm2(B));
    Matrix Q(N, 0);
    Matrix Z = B;
    for (Eigen::Index iter = 0; iter < N && Q.cols() < N; ++iter) {
        for (int pass = 0; pass < 2; ++pass) Z -= Q * (Q.transpose() * Z);
        Eigen::JacobiSVD<Matrix> svd(Z, Eigen::ComputeThinU);
        const Vector& s = svd.singularValues();
        Eigen::Index r = 0;
        while (r < s.size() && s[r] > tol) ++r;
        r = std::min(r, N - Q.cols());
        if (r == 0) break;
        const Matrix Qn = svd.matrixU().leftCols(r);
        Matrix grown(N, Q.cols() + r);
        grown << Q, Qn;
        Q = std::move(grown);
        Z = K * Qn;
    }
    return static_cast<int>(Q.cols());
}

/// Rank of (C; CK; ...; CK^{N-1}) via the dual pair (K^T, C^T).
inline int observability_rank(const Matrix& K, const Matrix& C, double rtol = -1.0) {
    if (C.cols() != K.rows()) throw ValidationError("observability_rank: C must have N columns");
    return controllability_rank(K.transpose(), C.transpose(), rtol);
}

/// Explicit block matrix (B, KB, ..., K^{blocks-1}B).
inline Matrix controllability_matrix(const Matrix& K, const Matrix& B, Eigen::Index blocks = -1) {
    if (blocks < 0) blocks = K.rows();
    Matrix out(K.rows(), B.cols() * blocks);
    Matrix block = B;
    for (Eigen::Index i = 0; i < blocks; ++i) {
        out.middleCols(i * B.cols(), B.cols()) = block;
        block = K * block;
    }
    return out;
}

inline Matrix observability_matrix(const Matrix& K, const Matrix& C, Eigen::Index blocks = -1) {
    return controllability_matrix(K.transpose(), C.transpose(), blocks).transpose();
}

/// Count of singular values above rtol * sigma_max; rtol < 0 selects max(rows, cols) * eps.
inline int numerical_rank(const Matrix& M, double rtol = -1.0) {
    if (M.size() == 0) return 0;
    if (rtol < 0.0) rtol = static_cast<double>(std::max(M.rows(), M.cols())) * std::numeric_limits<double>::epsilon();
    Eigen::BDCSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > rtol * s[0] && s[i] > 0.0) ++r;
    }
    return r;
}

struct AnalysisOptions {
    bool use_continuous = true;
    double rank_rtol = -1.0;    ///< < 0 selects N * eps
    std::optional<Matrix> C;    ///< output matrix; defaults to the first row of P
    double unit_circle_tol = 1e-12;
};

struct AnalysisReport {
    Spectrum spectrum;
    bool stable_continuous = false;
    bool stable_discrete = false;
    std::optional<int> ctrb_rank;
    std::optional<int> obsv_rank;
    int N = 0;
    double rank_rtol = 0.0;
    std::string rank_domain; ///< "continuous" or "discrete"
    bool continuous_fallback = false;
    std::string fallback_reason;
    bool on_unit_circle = false;
    double fit_residual = 0.0;
};

inline AnalysisReport analyze(const KoopmanModel& model, const AnalysisOptions& opt = {}) {
    AnalysisReport r;
    r.N = model.N();
    r.fit_residual = model.fit_residual;
    r.rank_rtol = opt.rank_rtol < 0.0 ? default_rank_rtol(r.N) : opt.rank_rtol;
    r.spectrum = spectrum(model);
    r.stable_continuous = true;
    r.stable_discrete = true;
    for (std::size_t i = 0; i < r.spectrum.discrete.size(); ++i) {
        const double mag = std::abs(r.spectrum.discrete[i]);
        if (!(mag < 1.0)) r.stable_discrete = false;
        if (!(r.spectrum.continuous[i].real() < 0.0)) r.stable_continuous = false;
        if (std::fabs(mag - 1.0) <= opt.unit_circle_tol) r.on_unit_circle = true;
    }
    Matrix C;
    if (opt.C) {
        C = *opt.C;
        if (C.cols() != r.N) throw ValidationError("output matrix C must have N columns");
    } else {
        C = Matrix::Zero(1, r.N);
        C(0, 0) = 1.0;
    }
    Matrix K = model.Kt;
    Matrix B = model.Bt;
    r.rank_domain = "discrete";
    if (opt.use_continuous) {
        try {
            Matrix Kc = generator(model);
            Matrix Bc = model.controlled() ? continuous_input_matrix(Kc, model.Kt, model.Bt) : model.Bt;
            K = std::move(Kc);
            B = std::move(Bc);
            r.rank_domain = "continuous";
        } catch (const NumericalError& e) {
            r.continuous_fallback = true;
            r.fallback_reason = e.what();
        }
    }
    if (model.controlled()) r.ctrb_rank = controllability_rank(K, B, r.rank_rtol);
    r.obsv_rank = observability_rank(K, C, r.rank_rtol);
    return r;
}

inline nlohmann::json complex_list_json(const std::vector<Complex>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& z : v) {
        if (std::isinf(z.real())) {
            out.push_back({"-inf", 0.0});
        } else {
            out.push_back({z.real(), z.imag()});
        }
    }
    return out;
}

inline nlohmann::json report_to_json(const AnalysisReport& r) {
    nlohmann::json j = {{"N", r.N},
                        {"dt", r.spectrum.dt},
                        {"discrete_eigenvalues", complex_list_json(r.spectrum.discrete)},
                        {"continuous_eigenvalues", complex_list_json(r.spectrum.continuous)},
                        {"zero_eigenvalue", r.spectrum.has_zero_eigenvalue},
                        {"stable_continuous", r.stable_continuous},
                        {"stable_discrete", r.stable_discrete},
                        {"on_unit_circle", r.on_unit_circle},
                        {"rank_rtol", r.rank_rtol},
                        {"rank_domain", r.rank_domain},
                        {"continuous_fallback", r.continuous_fallback},
                        {"fit_residual", r.fit_residual}};
    j["ctrb_rank"] = r.ctrb_rank ? nlohmann::json(*r.ctrb_rank) : nlohmann::json(nullptr);
    j["obsv_rank"] = r.obsv_rank ? nlohmann::json(*r.obsv_rank) : nlohmann::json(nullptr);
    if (r.continuous_fallback) j["fallback_reason"] = r.fallback_reason;
    return j;
}

/// e_k = sum_{m <= k} (measured_m - predicted_m)^2.
inline Vector cumulative_error(const Vector& measured, const Vector& predicted) {
    if (measured.size() != predicted.size()) {
        throw ValidationError("cumulative_error: series lengths differ (" + std::to_string(measured.size()) + " vs " +
                              std::to_string(predicted.size()) + ")");
    }
    Vector out(measured.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < measured.size(); ++k) {
        const double d = measured[k] - predicted[k];
        acc += d * d;
        out[k] = acc;
    }
    return out;
}

} // namespace koopman
