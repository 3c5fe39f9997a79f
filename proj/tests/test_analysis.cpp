#include <cmath>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "koopman/analysis.hpp"

using namespace koopman;

namespace {

KoopmanModel model_of(const Matrix& Kt, double dt, const Matrix& Bt = Matrix()) {
    KoopmanModel m;
    m.Kt = Kt;
    m.Bt = Bt.size() ? Bt : Matrix(Kt.rows(), 0);
    m.dt = dt;
    std::vector<ObservableFn> obs;
    for (int i = 0; i < Kt.rows(); ++i) obs.push_back(ObservableFn::coordinate(i));
    m.dictionary = Dictionary(static_cast<int>(Kt.rows()), obs);
    return m;
}

Matrix random_matrix(rng::Stream& s, Eigen::Index r, Eigen::Index c) {
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = s.uniform(-1, 1);
    return M;
}

/// Real matrix V diag(mu) V^-1 with conjugate pairs in the open right half of the unit disk.
Matrix random_stable_kt(rng::Stream& s, int pairs, int reals) {
    const int n = 2 * pairs + reals;
    Matrix D = Matrix::Zero(n, n);
    for (int p = 0; p < pairs; ++p) {
        const double r = s.uniform(0.3, 0.95);
        const double th = s.uniform(0.05, 1.2);
        D.block(2 * p, 2 * p, 2, 2) << r * std::cos(th), -r * std::sin(th), r * std::sin(th), r * std::cos(th);
    }
    for (int k = 0; k < reals; ++k) D(2 * pairs + k, 2 * pairs + k) = s.uniform(0.1, 0.95);
    Matrix V = random_matrix(s, n, n) + 2.0 * Matrix::Identity(n, n);
    return V * D * V.inverse();
}

} // namespace

TEST(Spectrum, Examples) {
    const Spectrum id = spectrum(Matrix::Identity(3, 3), 0.37);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(id.discrete[i], Complex(1, 0));
        EXPECT_EQ(id.continuous[i], Complex(0, 0));
    }
    const Spectrum d = spectrum(0.99 * Matrix::Identity(2, 2), 0.01);
    EXPECT_NEAR(d.continuous[0].real(), std::log(0.99) / 0.01, 1e-12);
    EXPECT_NEAR(d.continuous[0].real(), -1.00503, 1e-5);
    Matrix z = Matrix::Identity(2, 2);
    z(1, 1) = 0.0;
    const Spectrum zs = spectrum(z, 0.1);
    EXPECT_TRUE(zs.has_zero_eigenvalue);
    EXPECT_TRUE(std::isinf(zs.continuous[1].real()));
}

TEST(Spectrum, RotationUsesPrincipalBranch) {
    const double th = 0.3;
    Matrix R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Spectrum s = spectrum(0.9 * R, 0.1);
    EXPECT_NEAR(s.continuous[0].imag(), 3.0, 1e-12);
    EXPECT_NEAR(s.continuous[1].imag(), -3.0, 1e-12);
    EXPECT_NEAR(s.continuous[0].real(), std::log(0.9) / 0.1, 1e-12);
}

TEST(Spectrum, ConsistencyProperty) {
    rng::Stream s(1);
    for (int k = 0; k < 50; ++k) {
        const Matrix Kt = 0.6 * random_matrix(s, 6, 6);
        const Spectrum sp = spectrum(Kt, 0.05);
        for (std::size_t i = 0; i < sp.discrete.size(); ++i) {
            EXPECT_EQ(std::abs(sp.discrete[i]) < 1.0, sp.continuous[i].real() < 0.0);
        }
    }
}

TEST(Generator, ExponentialRoundTripOracle) {
    Matrix A(2, 2);
    A << 0, 1, -1, -0.1;
    const double dt = 0.01;
    const Matrix Kt = (A * dt).exp();
    EXPECT_LT((generator(Kt, dt) - A).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(generator(Matrix::Identity(3, 3), 0.1).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Generator, RandomStableRoundTrip) {
    rng::Stream s(2);
    for (int k = 0; k < 30; ++k) {
        const Matrix Kt = random_stable_kt(s, 2, 2);
        const double dt = 0.05;
        const Matrix K = generator(Kt, dt);
        EXPECT_LT(((K * dt).exp() - Kt).norm() / Kt.norm(), 1e-6);
    }
}

TEST(Generator, Errors) {
    Matrix neg = Matrix::Identity(2, 2);
    neg(1, 1) = -0.5;
    EXPECT_THROW(generator(neg, 0.1), NoPrincipalLogError);
    Matrix zero = Matrix::Identity(2, 2);
    zero(0, 0) = 0.0;
    EXPECT_THROW(generator(zero, 0.1), NoPrincipalLogError);
    Matrix jordan(2, 2);
    jordan << 0.9, 1.0, 0.0, 0.9;
    EXPECT_THROW(generator(jordan, 0.1), IllConditionedError);
}

TEST(Rank, Examples) {
    Matrix K(2, 2);
    K << 0, 1, 0, 0;
    EXPECT_EQ(controllability_rank(K, (Matrix(2, 1) << 0, 1).finished()), 2);
    EXPECT_EQ(controllability_rank(Matrix::Identity(2, 2), (Matrix(2, 1) << 1, 0).finished()), 1);
    EXPECT_EQ(observability_rank(K, (Matrix(1, 2) << 1, 0).finished()), 2);
    EXPECT_EQ(observability_rank(K, Matrix::Zero(1, 2)), 0);
    EXPECT_THROW(controllability_rank(K, Matrix::Ones(3, 1)), ValidationError);
}

TEST(Rank, AgreesWithExplicitKrylovMatrix) {
    rng::Stream s(3);
    for (int k = 0; k < 40; ++k) {
        const int n = 2 + k % 5;
        const Matrix K = random_matrix(s, n, n);
        Matrix B = random_matrix(s, n, 1);
        if (k % 3 == 0) {
            // Uncontrollable: B inside an invariant subspace.
            const Matrix V = random_matrix(s, n, n);
            Matrix D = Matrix::Zero(n, n);
            for (int i = 0; i < n; ++i) D(i, i) = 0.2 + 0.1 * i;
            const Matrix Kd = V * D * V.inverse();
            const Matrix Bd = V.col(0) + V.col(1);
            EXPECT_EQ(controllability_rank(Kd, Bd), numerical_rank(controllability_matrix(Kd, Bd), 1e-9));
            EXPECT_EQ(controllability_rank(Kd, Bd), 2);
            continue;
        }
        EXPECT_EQ(controllability_rank(K, B), numerical_rank(controllability_matrix(K, B)));
        const Matrix C = random_matrix(s, 1, n);
        EXPECT_EQ(observability_rank(K, C), numerical_rank(observability_matrix(K, C)));
    }
}

TEST(Rank, ZeroPaddingAndCayleyHamilton) {
    rng::Stream s(4);
    for (int k = 0; k < 20; ++k) {
        const int n = 3 + k % 4;
        const Matrix K = random_matrix(s, n, n);
        const Matrix B = random_matrix(s, n, 1);
        Matrix Bpad(n, 3);
        Bpad << B, Matrix::Zero(n, 2);
        EXPECT_EQ(controllability_rank(K, Bpad), controllability_rank(K, B));
        const Matrix C = random_matrix(s, 1, n);
        Matrix Cpad(2, n);
        Cpad << C, Matrix::Zero(1, n);
        EXPECT_EQ(observability_rank(K, Cpad), observability_rank(K, C));
        EXPECT_EQ(numerical_rank(controllability_matrix(K, B, n + 3)), numerical_rank(controllability_matrix(K, B, n)));
    }
}

TEST(Analyze, ContinuousReportAndJson) {
    Matrix A(2, 2);
    A << 0, 1, -1, -0.1;
    const double dt = 0.01;
    const Matrix Kt = (A * dt).exp();
    const Matrix Bt = (Matrix(2, 1) << 0.0, dt).finished();
    const AnalysisReport r = analyze(model_of(Kt, dt, Bt));
    EXPECT_TRUE(r.stable_continuous);
    EXPECT_TRUE(r.stable_discrete);
    EXPECT_EQ(r.rank_domain, "continuous");
    EXPECT_FALSE(r.continuous_fallback);
    EXPECT_EQ(*r.ctrb_rank, 2);
    EXPECT_EQ(*r.obsv_rank, 2);
    EXPECT_DOUBLE_EQ(r.rank_rtol, 2 * std::numeric_limits<double>::epsilon());
    const nlohmann::json j = report_to_json(r);
    EXPECT_EQ(j.at("continuous_eigenvalues").size(), 2u);
    EXPECT_EQ(j.at("ctrb_rank"), 2);
    EXPECT_TRUE(j.contains("rank_rtol"));
}

TEST(Analyze, FallsBackToDiscrete) {
    Matrix Kt = Matrix::Identity(2, 2) * 0.5;
    Kt(1, 1) = -0.5;
    Kt(0, 1) = 1.0;
    const AnalysisReport r = analyze(model_of(Kt, 0.1, (Matrix(2, 1) << 0, 1).finished()));
    EXPECT_TRUE(r.continuous_fallback);
    EXPECT_EQ(r.rank_domain, "discrete");
    EXPECT_EQ(*r.ctrb_rank, 2);
    EXPECT_FALSE(r.fallback_reason.empty());
}

TEST(Analyze, StabilityVerdictsAgree) {
    rng::Stream s(5);
    for (int k = 0; k < 30; ++k) {
        const Matrix Kt = random_stable_kt(s, 1, 2) * s.uniform(0.5, 1.4);
        const AnalysisReport r = analyze(model_of(Kt, 0.1));
        if (!r.on_unit_circle) EXPECT_EQ(r.stable_continuous, r.stable_discrete);
        EXPECT_FALSE(r.ctrb_rank.has_value());
    }
}

TEST(CumulativeError, ExamplesAndMonotonicity) {
    const Vector a = (Vector(3) << 1, 2, 3).finished();
    EXPECT_EQ(cumulative_error(a, a), Vector::Zero(3));
    EXPECT_EQ(cumulative_error(Vector::Ones(2), Vector::Zero(2)), (Vector(2) << 1, 2).finished());
    EXPECT_THROW(cumulative_error(a, Vector::Zero(2)), ValidationError);
    rng::Stream s(6);
    for (int k = 0; k < 20; ++k) {
        Vector m(100), p(100);
        for (int i = 0; i < 100; ++i) {
            m[i] = s.uniform(-5, 5);
            p[i] = s.uniform(-5, 5);
        }
        const Vector e = cumulative_error(m, p);
        for (int i = 1; i < 100; ++i) EXPECT_GE(e[i], e[i - 1]);
    }
}
