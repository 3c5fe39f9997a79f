#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "koopman/edmd.hpp"

using namespace koopman;

namespace {

Matrix linear_A() { return (Matrix(2, 2) << 0.9, 0.1, 0.0, 0.8).finished(); }
Matrix linear_B() { return (Matrix(2, 1) << 0.0, 1.0).finished(); }

Dictionary identity2() {
    DictionarySpec s;
    s.system = SystemTag::Identity;
    s.state_dim = 2;
    return build_dictionary(s);
}

Dictionary pendulum(int n) {
    DictionarySpec s;
    s.system = SystemTag::Pendulum;
    s.size = n;
    return build_dictionary(s);
}

Trajectory from_states(const Matrix& X, double dt, const Matrix& U = Matrix()) {
    Trajectory t;
    t.dt = dt;
    t.states = X;
    t.times.resize(X.cols());
    for (Eigen::Index k = 0; k < X.cols(); ++k) t.times[k] = static_cast<double>(k) * dt;
    t.inputs = U.size() ? U : Matrix(0, X.cols());
    return t;
}

/// Random snapshot pairs of x+ = A x (+ B u), one pair per trajectory.
SnapshotSet linear_pairs(int count, bool control, std::uint64_t seed) {
    rng::Stream s(seed);
    SnapshotSet out;
    out.dt = 0.1;
    out.X.resize(2, count);
    out.Xp.resize(2, count);
    out.U.resize(control ? 1 : 0, count);
    for (int k = 0; k < count; ++k) {
        Vector x(2);
        x << s.uniform(-1, 1), s.uniform(-1, 1);
        out.X.col(k) = x;
        out.Xp.col(k) = linear_A() * x;
        if (control) {
            out.U(0, k) = s.uniform(-1, 1);
            out.Xp.col(k) += linear_B() * out.U(0, k);
        }
    }
    return out;
}

} // namespace

TEST(Assemble, ColumnCountsAndBoundaries) {
    const auto set = generate_training_set(SystemTag::Pendulum, 1, 3.0, 0.01, InputSignal{}, 0);
    EXPECT_EQ(assemble(set).cols(), 300);

    Matrix A(2, 3), B(2, 3);
    A << 1, 2, 3, 1, 2, 3;
    B << 10, 20, 30, 10, 20, 30;
    const SnapshotSet s = assemble({from_states(A, 0.1), from_states(B, 0.1)});
    ASSERT_EQ(s.cols(), 4);
    Matrix expect_X(2, 4), expect_Xp(2, 4);
    expect_X << 1, 2, 10, 20, 1, 2, 10, 20;
    expect_Xp << 2, 3, 20, 30, 2, 3, 20, 30;
    EXPECT_EQ(s.X, expect_X);
    EXPECT_EQ(s.Xp, expect_Xp);
    for (Eigen::Index j = 0; j < s.cols(); ++j) EXPECT_FALSE(s.X(0, j) == 3 && s.Xp(0, j) == 10);

    const auto hundred = generate_training_set(SystemTag::Pendulum, 100, 3.0, 0.01, InputSignal{}, 0);
    EXPECT_EQ(assemble(hundred).cols(), 30000);
}

TEST(Assemble, Errors) {
    Matrix X = Matrix::Ones(2, 3);
    EXPECT_THROW(assemble({}), ValidationError);
    EXPECT_THROW(assemble({from_states(X, 0.1), from_states(X, 0.2)}), ValidationError);
    EXPECT_THROW(assemble({from_states(X, 0.1), from_states(Matrix::Ones(3, 3), 0.1)}), ValidationError);
    EXPECT_THROW(assemble({from_states(Matrix::Ones(2, 1), 0.1)}), ValidationError);
    EXPECT_THROW(assemble({from_states(X, 0.1), from_states(X, 0.1, Matrix::Ones(1, 3))}), ValidationError);
}

TEST(Pinv, Examples) {
    EXPECT_EQ(pinv(Matrix::Identity(3, 3)), Matrix::Identity(3, 3));
    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = 2.0;
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 0.5;
    EXPECT_LT((pinv(D) - expect).norm(), 1e-15);
    Matrix bad = Matrix::Ones(2, 2);
    bad(1, 1) = NAN;
    EXPECT_THROW(pinv(bad), NumericalError);
}

TEST(Pinv, PenroseConditions) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        rng::Stream s(seed);
        Matrix M(5, 3);
        for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = s.uniform(-1, 1);
        if (seed % 4 == 0) M.col(2) = M.col(0) - 2.0 * M.col(1); // rank deficient
        const Matrix P = pinv(M);
        EXPECT_LT((M * P * M - M).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((P * M * P - P).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(((M * P).transpose() - M * P).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(((P * M).transpose() - P * M).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Fit, RecoversLinearMap) {
    const KoopmanModel m = fit(linear_pairs(200, false, 1), identity2());
    EXPECT_LT((m.Kt - linear_A()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(m.fit_residual, 1e-12);
    EXPECT_FALSE(m.controlled());
}

TEST(Fit, RankOneFixedPoint) {
    SnapshotSet s;
    s.dt = 0.1;
    s.X = (Matrix(2, 1) << 1.0, 2.0).finished();
    s.Xp = s.X;
    s.U.resize(0, 1);
    const KoopmanModel m = fit(s, identity2());
    const Matrix expect = s.X * pinv(s.X);
    EXPECT_LT((m.Kt - expect).norm(), 1e-14);
    EXPECT_LT((m.Kt * s.X - s.X).norm(), 1e-14);
    ASSERT_EQ(m.warnings.size(), 1u);
}

TEST(Fit, Errors) {
    SnapshotSet s = linear_pairs(10, false, 0);
    const Dictionary three(3, {ObservableFn::coordinate(0), ObservableFn::coordinate(1), ObservableFn::coordinate(2)});
    EXPECT_THROW(fit(s, three), ValidationError);
    EXPECT_THROW(fit(linear_pairs(10, true, 0), identity2()), ValidationError);
    EXPECT_THROW(fit_with_control(s, identity2()), ValidationError);
}

TEST(FitWithControl, RecoversLinearSystem) {
    const KoopmanModel m = fit_with_control(linear_pairs(500, true, 2), identity2());
    EXPECT_LT((m.Kt - linear_A()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((m.Bt - linear_B()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitWithControl, ZeroInputMatchesAutonomousFit) {
    SnapshotSet s = linear_pairs(300, false, 3);
    s.Xp += Matrix::Constant(2, s.cols(), 0.0);
    for (Eigen::Index j = 0; j < s.cols(); ++j) s.Xp.col(j) += 0.05 * Vector::Constant(2, std::sin(s.X(0, j) * 3.0));
    const KoopmanModel a = fit(s, identity2());
    s.U = Matrix::Zero(1, s.cols());
    const KoopmanModel c = fit_with_control(s, identity2());
    EXPECT_LT((a.Kt - c.Kt).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Predict, StepsZero) {
    const KoopmanModel m = fit(assemble(generate_training_set(SystemTag::Pendulum, 20, 3.0, 0.01, InputSignal{}, 1)), pendulum(6));
    const Vector x0 = (Vector(2) << 0.4, -0.2).finished();
    const StraightPrediction s = predict_straight(m, x0, 0);
    EXPECT_EQ(s.lifted.col(0), eval(m.dictionary, x0));
    EXPECT_EQ(s.states.col(0), x0);
    EXPECT_EQ(predict_corrected(m, x0, 0).col(0), x0);
}

TEST(Predict, ExactLinearSystem) {
    const KoopmanModel m = fit(linear_pairs(100, false, 4), identity2());
    const Vector x0 = (Vector(2) << 1.0, -1.0).finished();
    const StraightPrediction s = predict_straight(m, x0, 100);
    const Matrix c = predict_corrected(m, x0, 100);
    Vector x = x0;
    for (int k = 0; k <= 100; ++k) {
        EXPECT_LT((s.states.col(k) - x).cwiseAbs().maxCoeff(), 1e-8);
        x = linear_A() * x;
    }
    EXPECT_LT((s.states - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, ControlledNeedsInputs) {
    const KoopmanModel m = fit_with_control(linear_pairs(100, true, 5), identity2());
    const Vector x0 = Vector::Ones(2);
    EXPECT_THROW(predict_straight(m, x0, 10), ValidationError);
    const Matrix short_u = Matrix::Zero(1, 5);
    EXPECT_THROW(predict_corrected(m, x0, &short_u, 10), ValidationError);
    const Matrix u = Matrix::Ones(1, 10);
    const StraightPrediction s = predict_straight(m, x0, &u, 10);
    Vector x = x0;
    for (int k = 0; k < 10; ++k) x = linear_A() * x + linear_B() * u(0, k);
    EXPECT_LT((s.states.col(10) - x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Predict, FirstStepAgreementAndProjection) {
    const auto set = generate_training_set(SystemTag::Pendulum, 30, 3.0, 0.01, InputSignal{RandomSignal{}}, 6);
    const KoopmanModel m = fit_with_control(assemble(set), pendulum(12));
    rng::Stream s(6);
    for (int k = 0; k < 20; ++k) {
        const Vector x0 = (Vector(2) << s.uniform(-2, 2), s.uniform(-1, 1)).finished();
        const Matrix u = Matrix::Constant(1, 50, s.uniform(-1, 1));
        const StraightPrediction a = predict_straight(m, x0, &u, 50);
        const Matrix b = predict_corrected(m, x0, &u, 50);
        EXPECT_LT((a.states.col(1) - b.col(1)).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_EQ(a.lifted.topRows(2), a.states);
    }
}

TEST(Predict, CorrectedDivergenceCarriesStep) {
    KoopmanModel m = fit(linear_pairs(50, false, 7), identity2());
    m.Kt *= 1e200;
    try {
        predict_corrected(m, Vector::Ones(2), 10);
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.step(), 2u);
    }
}

TEST(Fit, LeastSquaresOptimality) {
    const auto set = generate_training_set(SystemTag::Pendulum, 20, 3.0, 0.01, InputSignal{}, 8);
    const SnapshotSet snaps = assemble(set);
    const KoopmanModel m = fit(snaps, pendulum(6));
    const Matrix PX = lift(m.dictionary, snaps.X);
    const Matrix PY = lift(m.dictionary, snaps.Xp);
    const double base = (PY - m.Kt * PX).norm();
    rng::Stream s(8);
    for (int k = 0; k < 20; ++k) {
        Matrix dK(6, 6);
        for (Eigen::Index i = 0; i < dK.size(); ++i) dK.data()[i] = s.uniform(-1, 1);
        dK *= 1e-3 / dK.norm();
        EXPECT_GE((PY - (m.Kt + dK) * PX).norm(), base);
    }
}

TEST(ModelJson, RoundTrip) {
    const auto set = generate_training_set(SystemTag::Pendulum, 10, 3.0, 0.01, InputSignal{RandomSignal{}}, 9);
    const KoopmanModel m = fit_with_control(assemble(set), pendulum(12));
    const KoopmanModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    EXPECT_EQ(back.Kt, m.Kt);
    EXPECT_EQ(back.Bt, m.Bt);
    EXPECT_EQ(back.dt, m.dt);
    EXPECT_EQ(back.fit_residual, m.fit_residual);
    ASSERT_EQ(back.dictionary.size(), m.dictionary.size());
    const Vector x0 = (Vector(2) << 2.748, 0.0).finished();
    const Matrix u = Matrix::Constant(1, 200, 0.3);
    EXPECT_EQ(predict_corrected(back, x0, &u, 200), predict_corrected(m, x0, &u, 200));
    EXPECT_THROW(model_from_json({{"dt", 0.1}}), ValidationError);
}
