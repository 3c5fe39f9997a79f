#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "koopman/dictionary.hpp"
#include "koopman/rng.hpp"

using namespace koopman;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Dictionary dict(SystemTag tag, int n) {
    DictionarySpec s;
    s.system = tag;
    s.size = n;
    return build_dictionary(s);
}

} // namespace

TEST(Expression, ParsePrintRoundTrip) {
    for (const char* text : {"x1", "sin(x1)*cos(x1)*x2^2", "x1-x2*x1^3", "-(x1+x2)", "sgn(x2)*abs(0.5*x2^2+2.5*cos(x1))",
                             "(x1+x2)^3", "-2*x1", "x1*(-2)"}) {
        const Expr e = parse_expression(text);
        const Expr again = parse_expression(e.str());
        EXPECT_EQ(again.str(), e.str()) << text;
        const Vector x = vec({0.3, -1.7});
        EXPECT_EQ(again.eval(x), e.eval(x)) << text;
    }
}

TEST(Expression, Evaluation) {
    const Vector x = vec({0.5, -2.0});
    EXPECT_DOUBLE_EQ(parse_expression("x1^3*x2").eval(x), 0.125 * -2.0);
    EXPECT_DOUBLE_EQ(parse_expression("x1-x2-x1").eval(x), 2.0);
    EXPECT_DOUBLE_EQ(parse_expression("sgn(x2)").eval(x), -1.0);
    EXPECT_DOUBLE_EQ(parse_expression("sgn(x1-x1)").eval(x), 0.0);
    EXPECT_DOUBLE_EQ(parse_expression("abs(x2)*sin(x1)").eval(x), 2.0 * std::sin(0.5));
}

TEST(Expression, RejectsMalformedInput) {
    EXPECT_THROW(parse_expression("x1+"), ValidationError);
    EXPECT_THROW(parse_expression("tan(x1)"), ValidationError);
    EXPECT_THROW(parse_expression("x0"), ValidationError);
    EXPECT_THROW(parse_expression("x1^-2"), ValidationError);
    EXPECT_THROW(parse_expression("(x1"), ValidationError);
}

TEST(Dictionary, PendulumPrefix) {
    const Dictionary d = dict(SystemTag::Pendulum, 6);
    ASSERT_EQ(d.size(), 6);
    EXPECT_EQ(d[0].expr.str(), "x1");
    EXPECT_EQ(d[1].expr.str(), "x2");
    EXPECT_EQ(d[2].expr.str(), "sin(x1)");
    EXPECT_EQ(d[3].expr.str(), "cos(x1)*x2");
    EXPECT_TRUE(d.identity_prefix());
}

TEST(Dictionary, PendulumEvalExamples) {
    const Dictionary d = dict(SystemTag::Pendulum, 6);
    EXPECT_EQ(eval(d, vec({0.0, 0.0})), Vector::Zero(6));
    const Vector z = eval(d, vec({std::numbers::pi / 2, 1.0}));
    EXPECT_DOUBLE_EQ(z[0], std::numbers::pi / 2);
    EXPECT_DOUBLE_EQ(z[1], 1.0);
    EXPECT_DOUBLE_EQ(z[2], 1.0);
    EXPECT_NEAR(z[3], 0.0, 1e-15);
}

TEST(Dictionary, DuffingEvalExample) {
    const Dictionary d = dict(SystemTag::Duffing, 6);
    EXPECT_EQ(eval(d, vec({2.0, -1.0})), vec({2, -1, 8, -4, 32, 2}));
}

TEST(Dictionary, GolfObservables) {
    const Dictionary d = dict(SystemTag::Golf, 4);
    ASSERT_EQ(d.size(), 4);
    const GolfParameters p;
    for (const Vector& x : {vec({0.3, 1.2}), vec({-1.0, -0.4}), vec({0.2, 0.0})}) {
        const double s = x[1] > 0 ? 1.0 : (x[1] < 0 ? -1.0 : 0.0);
        const double friction = s * std::fabs(p.m * x[1] * x[1] * p.a + p.m * p.g * std::cos(x[0]));
        const Vector z = eval(d, x);
        EXPECT_EQ(z[0], x[0]);
        EXPECT_EQ(z[1], x[1]);
        EXPECT_DOUBLE_EQ(z[2], std::sin(x[0]));
        EXPECT_NEAR(z[3], friction, 1e-12);
    }
    EXPECT_THROW(dict(SystemTag::Golf, 5), ValidationError);
}

TEST(Dictionary, IdentityAndErrors) {
    DictionarySpec s;
    s.system = SystemTag::Identity;
    s.state_dim = 3;
    const Dictionary d = build_dictionary(s);
    EXPECT_EQ(d.size(), 3);
    EXPECT_TRUE(d.identity_prefix());
    EXPECT_THROW(dict(SystemTag::Pendulum, 1), ValidationError);
    EXPECT_THROW(parse_system_tag("lorenz"), ValidationError);
    EXPECT_THROW(eval(d, vec({1.0, 2.0})), ValidationError);
    EXPECT_THROW(eval(d, vec({1.0, NAN, 2.0})), ValidationError);
}

TEST(Dictionary, LiftMatchesEvalColumnwise) {
    const Dictionary d = dict(SystemTag::Pendulum, 12);
    Matrix X(2, 3);
    X << 0.1, -2.0, 3.0, 0.5, 1.5, -0.25;
    const Matrix Z = lift(d, X);
    ASSERT_EQ(Z.rows(), 12);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const Vector z = eval(d, X.col(j));
        for (Eigen::Index i = 0; i < 12; ++i) EXPECT_EQ(Z(i, j), z[i]);
    }
    const Dictionary id = dict(SystemTag::Identity, 2);
    EXPECT_EQ(lift(id, X), X);
    X(1, 2) = INFINITY;
    try {
        lift(d, X);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
    }
}

TEST(Projection, Examples) {
    const ProjectionMatrix P(2, 6);
    EXPECT_EQ(project(P, vec({1, 2, 3, 4, 5, 6})), vec({1, 2}));
    const ProjectionMatrix Pid(2, 2);
    EXPECT_EQ(project(Pid, vec({7, 8})), vec({7, 8}));
    EXPECT_THROW(project(P, vec({1, 2, 3})), ValidationError);
    Matrix dense = P.dense();
    EXPECT_EQ(dense.leftCols(2), Matrix::Identity(2, 2));
    EXPECT_EQ(dense.rightCols(4), Matrix::Zero(2, 4));
}

TEST(Projection, RoundTripOnRandomStates) {
    rng::Stream s(7);
    for (auto [tag, n] : {std::pair{SystemTag::Pendulum, 24}, {SystemTag::Duffing, 20}, {SystemTag::Golf, 4}}) {
        const Dictionary d = dict(tag, n);
        const ProjectionMatrix P(d);
        for (int k = 0; k < 100; ++k) {
            const Vector x = vec({s.uniform(-3, 3), s.uniform(-3, 3)});
            EXPECT_EQ(project(P, eval(d, x)), x);
            EXPECT_EQ(P.dense() * eval(d, x), x);
        }
    }
}

TEST(Dictionary, GeneratedObservablesAreDistinct) {
    rng::Stream s(11);
    for (auto [tag, n] : {std::pair{SystemTag::Pendulum, 24}, {SystemTag::Duffing, 20}, {SystemTag::Polynomial, 15}}) {
        const Dictionary d = dict(tag, n);
        ASSERT_EQ(d.size(), n);
        Matrix X(2, 3 * n);
        for (Eigen::Index j = 0; j < X.cols(); ++j) X.col(j) = vec({s.uniform(-2, 2), s.uniform(-2, 2)});
        const Matrix Z = lift(d, X);
        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) EXPECT_GT((Z.row(a) - Z.row(b)).norm(), 1e-9) << a << ' ' << b;
        }
        // Distinct and also linearly independent on generic data.
        Eigen::JacobiSVD<Matrix> svd(Z);
        EXPECT_GT(svd.singularValues()[n - 1] / svd.singularValues()[0], 1e-12) << to_string(tag);
    }
}

TEST(Dictionary, Deterministic) {
    for (auto [tag, n] : {std::pair{SystemTag::Pendulum, 24}, {SystemTag::Duffing, 20}}) {
        const Dictionary a = dict(tag, n);
        const Dictionary b = dict(tag, n);
        for (int i = 0; i < n; ++i) EXPECT_EQ(a[static_cast<std::size_t>(i)].expr.str(), b[static_cast<std::size_t>(i)].expr.str());
    }
}

TEST(Dictionary, DuplicateObservablesRejected) {
    std::vector<ObservableFn> obs{ObservableFn::coordinate(0), ObservableFn::coordinate(1),
                                  ObservableFn::custom(parse_expression("sin(x1)")),
                                  ObservableFn::custom(parse_expression("sin(x1)"))};
    EXPECT_THROW(Dictionary(2, obs), ValidationError);
    std::vector<ObservableFn> out_of_range{ObservableFn::coordinate(0), ObservableFn::custom(parse_expression("x3"))};
    EXPECT_THROW(Dictionary(2, out_of_range), ValidationError);
}
