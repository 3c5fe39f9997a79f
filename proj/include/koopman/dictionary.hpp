#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "koopman/expression.hpp"
#include "koopman/systems.hpp"
#include "koopman/types.hpp"

namespace koopman {

enum class ObservableKind { Coordinate, Monomial, TrigMonomial, FrictionTerm, Custom };

inline std::string to_string(ObservableKind kind) {
    switch (kind) {
    case ObservableKind::Coordinate: return "coordinate";
    case ObservableKind::Monomial: return "monomial";
    case ObservableKind::TrigMonomial: return "trig-monomial";
    case ObservableKind::FrictionTerm: return "friction-term";
    case ObservableKind::Custom: return "custom";
    }
    return "custom";
}

inline ObservableKind parse_observable_kind(std::string_view s) {
    if (s == "coordinate") return ObservableKind::Coordinate;
    if (s == "monomial") return ObservableKind::Monomial;
    if (s == "trig-monomial") return ObservableKind::TrigMonomial;
    if (s == "friction-term") return ObservableKind::FrictionTerm;
    if (s == "custom") return ObservableKind::Custom;
    throw ValidationError("unknown observable kind '" + std::string(s) + "'");
}

/// One scalar observable psi(x). Evaluation always goes through the
/// expression tree, so a reloaded dictionary evaluates bit-identically.
struct ObservableFn {
    ObservableKind kind = ObservableKind::Custom;
    std::string label;
    Expr expr;

    double operator()(const Vector& x) const { return expr.eval(x); }

    static ObservableFn coordinate(int i) {
        Expr e = Expr::var(i);
        return {ObservableKind::Coordinate, e.str(), e};
    }
    static ObservableFn custom(Expr e) {
        std::string s = e.str();
        return {ObservableKind::Custom, s, std::move(e)};
    }
};

/// Ordered, immutable list of observables over an n-dimensional state.
class Dictionary {
public:
    Dictionary(int state_dim, std::vector<ObservableFn> observables)
        : state_dim_(state_dim), observables_(std::move(observables)) {
        if (state_dim_ < 1) throw ValidationError("dictionary state dimension must be >= 1");
        if (size() < state_dim_) {
            throw ValidationError("dictionary needs at least n = " + std::to_string(state_dim_) +
                                  " observables, got " + std::to_string(size()));
        }
        std::set<std::string> seen;
        for (const auto& o : observables_) {
            if (o.expr.max_var() >= state_dim_) {
                throw ValidationError("observable '" + o.label + "' references a state beyond x" +
                                      std::to_string(state_dim_));
            }
            if (!seen.insert(o.expr.str()).second) {
                throw ValidationError("duplicate observable '" + o.expr.str() + "'");
            }
        }
        identity_prefix_ = true;
        for (int i = 0; i < state_dim_; ++i) {
            const Expr& e = observables_[static_cast<std::size_t>(i)].expr;
            if (e.op() != Expr::Op::Var || e.index() != i) {
                identity_prefix_ = false;
                break;
            }
        }
    }

    int state_dim() const noexcept { return state_dim_; }
    int size() const noexcept { return static_cast<int>(observables_.size()); }
    bool identity_prefix() const noexcept { return identity_prefix_; }
    const std::vector<ObservableFn>& observables() const noexcept { return observables_; }
    const ObservableFn& operator[](std::size_t i) const { return observables_.at(i); }

private:
    int state_dim_;
    std::vector<ObservableFn> observables_;
    bool identity_prefix_ = false;
};

inline Vector eval(const Dictionary& dict, const Vector& x) {
    if (x.size() != dict.state_dim()) {
        throw ValidationError("state has length " + std::to_string(x.size()) + ", dictionary expects " +
                              std::to_string(dict.state_dim()));
    }
    if (!x.allFinite()) throw ValidationError("state contains non-finite values");
    Vector z(dict.size());
    const auto& obs = dict.observables();
    for (std::size_t i = 0; i < obs.size(); ++i) z[static_cast<Eigen::Index>(i)] = obs[i].expr.eval(x.data());
    return z;
}

/// Column-wise lift of an n x M snapshot matrix to N x M.
inline Matrix lift(const Dictionary& dict, const Matrix& X) {
    if (X.rows() != dict.state_dim()) {
        throw ValidationError("snapshot matrix has " + std::to_string(X.rows()) + " rows, dictionary expects " +
                              std::to_string(dict.state_dim()));
    }
    Matrix Z(dict.size(), X.cols());
    const auto& obs = dict.observables();
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const Vector col = X.col(j);
        if (!col.allFinite()) {
            throw ValidationError("snapshot column " + std::to_string(j) + " contains non-finite values");
        }
        for (std::size_t i = 0; i < obs.size(); ++i) Z(static_cast<Eigen::Index>(i), j) = obs[i].expr.eval(col.data());
    }
    return Z;
}

/// The block (I_n | 0) recovering x from an identity-prefixed lift.
class ProjectionMatrix {
public:
    ProjectionMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
        if (rows < 1 || cols < rows) throw ValidationError("projection needs 1 <= n <= N");
    }

    explicit ProjectionMatrix(const Dictionary& dict) : ProjectionMatrix(dict.state_dim(), dict.size()) {
        if (!dict.identity_prefix()) {
            throw ValidationError("projection requires a dictionary whose first n observables are the states");
        }
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }

    Matrix dense() const {
        Matrix P = Matrix::Zero(rows_, cols_);
        P.leftCols(rows_).setIdentity();
        return P;
    }

private:
    int rows_;
    int cols_;
};

inline Vector project(const ProjectionMatrix& P, const Vector& z) {
    if (z.size() != P.cols()) {
        throw ValidationError("lifted vector has length " + std::to_string(z.size()) + ", projection expects " +
                              std::to_string(P.cols()));
    }
    return z.head(P.rows());
}

struct DictionarySpec {
    SystemTag system = SystemTag::Identity;
    int size = 0;      ///< N; 0 means the system's minimum
    int state_dim = 2; ///< only consulted for identity and polynomial
    std::optional<double> damping; ///< pendulum d or Duffing delta
    GolfParameters golf;
};

namespace detail {

// Lie-derivative closure over monomials in a small set of "atoms" (e.g. sin x1,
// cos x1, x2). Each atom's time derivative along the autonomous vector field is
// a polynomial in the atoms, so d/dt of any monomial is again a polynomial.
// Observables are appended breadth-first in the order their monomials first
// appear in successive derivatives.

using Exponents = std::vector<int>;
using Poly = std::map<Exponents, double>;

struct LieAlgebra {
    std::vector<Poly> atom_derivative;
    std::function<Poly(const Poly&)> reduce; // canonical form, may be empty
};

inline void accumulate(Poly& into, const Exponents& m, double c) {
    auto [it, inserted] = into.emplace(m, c);
    if (!inserted) it->second += c;
}

inline Poly derivative(const LieAlgebra& alg, const Exponents& mono) {
    Poly out;
    for (std::size_t i = 0; i < mono.size(); ++i) {
        if (mono[i] == 0) continue;
        Exponents base = mono;
        --base[i];
        for (const auto& [m, c] : alg.atom_derivative[i]) {
            Exponents prod = base;
            for (std::size_t k = 0; k < prod.size(); ++k) prod[k] += m[k];
            accumulate(out, prod, c * mono[i]);
        }
    }
    return alg.reduce ? alg.reduce(out) : out;
}

inline int degree(const Exponents& m) {
    int d = 0;
    for (int e : m) d += e;
    return d;
}

/// Returns `count` new monomials; `seeds` are the derivatives of the state
/// coordinates and `known` the monomials already represented by coordinates.
inline std::vector<Exponents> lie_closure(const LieAlgebra& alg, std::vector<Poly> seeds, std::set<Exponents> known,
                                          std::size_t count) {
    std::vector<Exponents> out;
    std::vector<Poly> queue = std::move(seeds);
    for (std::size_t head = 0; out.size() < count; ++head) {
        if (head >= queue.size()) throw ValidationError("observable closure terminated before reaching the requested size");
        Poly p = alg.reduce ? alg.reduce(queue[head]) : queue[head];
        std::vector<Exponents> fresh;
        for (const auto& [m, c] : p) {
            if (std::abs(c) <= 1e-12 || degree(m) == 0 || known.count(m) != 0) continue;
            fresh.push_back(m);
        }
        std::sort(fresh.begin(), fresh.end(), [](const Exponents& a, const Exponents& b) {
            if (degree(a) != degree(b)) return degree(a) > degree(b);
            return a > b;
        });
        for (const auto& m : fresh) {
            if (out.size() >= count) break;
            known.insert(m);
            out.push_back(m);
            queue.push_back(derivative(alg, m));
        }
    }
    return out;
}

inline Expr power_factor(Expr base, int e) {
    return Expr::pow(std::move(base), e);
}

inline Expr product_or_one(std::vector<Expr> factors) {
    if (factors.empty()) return Expr::constant(1.0);
    return Expr::mul(std::move(factors));
}

inline Expr monomial_expr(const Exponents& m) {
    std::vector<Expr> f;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] > 0) f.push_back(power_factor(Expr::var(static_cast<int>(i)), m[i]));
    }
    return product_or_one(std::move(f));
}

// Pendulum atoms: (sin x1, cos x1, x2); cos^2 is rewritten as 1 - sin^2 so the
// generated functions stay linearly independent.
inline Expr trig_monomial_expr(const Exponents& m) {
    std::vector<Expr> f;
    if (m[0] > 0) f.push_back(power_factor(Expr::sin(Expr::var(0)), m[0]));
    if (m[1] > 0) f.push_back(power_factor(Expr::cos(Expr::var(0)), m[1]));
    if (m[2] > 0) f.push_back(power_factor(Expr::var(1), m[2]));
    return product_or_one(std::move(f));
}

inline Poly reduce_cos_squared(const Poly& p) {
    Poly cur = p;
    for (;;) {
        bool changed = false;
        Poly next;
        for (const auto& [m, c] : cur) {
            if (m[1] >= 2) {
                changed = true;
                accumulate(next, {m[0], m[1] - 2, m[2]}, c);
                accumulate(next, {m[0] + 2, m[1] - 2, m[2]}, -c);
            } else {
                accumulate(next, m, c);
            }
        }
        cur = std::move(next);
        if (!changed) return cur;
    }
}

inline Dictionary pendulum_dictionary(int size, double damping) {
    if (size < 2) throw ValidationError("pendulum dictionary needs N >= 2");
    LieAlgebra alg;
    alg.atom_derivative = {
        {{{0, 1, 1}, 1.0}},                       // d/dt sin x1 = cos x1 * x2
        {{{1, 0, 1}, -1.0}},                      // d/dt cos x1 = -sin x1 * x2
        {{{1, 0, 0}, -1.0}, {{0, 0, 1}, -damping}}, // d/dt x2 = -sin x1 - d x2
    };
    alg.reduce = reduce_cos_squared;
    std::vector<Poly> seeds = {{{{0, 0, 1}, 1.0}}, alg.atom_derivative[2]};
    auto monos = lie_closure(alg, std::move(seeds), {{0, 0, 1}}, static_cast<std::size_t>(size - 2));
    std::vector<ObservableFn> obs = {ObservableFn::coordinate(0), ObservableFn::coordinate(1)};
    for (const auto& m : monos) {
        Expr e = trig_monomial_expr(m);
        obs.push_back({ObservableKind::TrigMonomial, e.str(), e});
    }
    return Dictionary(2, std::move(obs));
}

inline Dictionary duffing_dictionary(int size, double damping) {
    if (size < 2) throw ValidationError("Duffing dictionary needs N >= 2");
    LieAlgebra alg;
    alg.atom_derivative = {
        {{{0, 1}, 1.0}},                                        // d/dt x1 = x2
        {{{1, 0}, 1.0}, {{3, 0}, -1.0}, {{0, 1}, -damping}},   // d/dt x2 = x1 - x1^3 - delta x2
    };
    std::vector<Poly> seeds = alg.atom_derivative;
    auto monos = lie_closure(alg, std::move(seeds), {{1, 0}, {0, 1}}, static_cast<std::size_t>(size - 2));
    std::vector<ObservableFn> obs = {ObservableFn::coordinate(0), ObservableFn::coordinate(1)};
    for (const auto& m : monos) {
        Expr e = monomial_expr(m);
        obs.push_back({ObservableKind::Monomial, e.str(), e});
    }
    return Dictionary(2, std::move(obs));
}

/// Coordinates followed by all monomials of degree >= 2, graded by degree,
/// descending lexicographic within a degree (x1^2, x1 x2, x2^2, x1^3, ...).
inline Dictionary polynomial_dictionary(int size, int n) {
    if (n < 1) throw ValidationError("polynomial dictionary needs state_dim >= 1");
    if (size < n) throw ValidationError("polynomial dictionary needs N >= n");
    std::vector<ObservableFn> obs;
    for (int i = 0; i < n; ++i) obs.push_back(ObservableFn::coordinate(i));
    for (int deg = 2; static_cast<int>(obs.size()) < size; ++deg) {
        // Enumerate exponent vectors of total degree `deg` in descending lex order.
        Exponents m(static_cast<std::size_t>(n), 0);
        std::function<void(int, int)> rec = [&](int pos, int left) {
            if (static_cast<int>(obs.size()) >= size) return;
            if (pos == n - 1) {
                m[static_cast<std::size_t>(pos)] = left;
                Expr e = monomial_expr(m);
                obs.push_back({ObservableKind::Monomial, e.str(), e});
                return;
            }
            for (int e = left; e >= 0; --e) {
                m[static_cast<std::size_t>(pos)] = e;
                rec(pos + 1, left - e);
            }
        };
        rec(0, deg);
    }
    return Dictionary(n, std::move(obs));
}

/// sgn(x2) * |m a x2^2 + m g cos x1|
inline Expr golf_friction_expr(const GolfParameters& p) {
    Expr x1 = Expr::var(0);
    Expr x2 = Expr::var(1);
    Expr centrifugal = Expr::mul({Expr::constant(p.m), Expr::pow(x2, 2), Expr::constant(p.a)});
    Expr gravity = Expr::mul({Expr::constant(p.m), Expr::constant(p.g), Expr::cos(x1)});
    return Expr::mul({Expr::sgn(x2), Expr::abs(Expr::add({centrifugal, gravity}))});
}

inline Dictionary golf_dictionary(int size, const GolfParameters& p) {
    if (size != 4) throw ValidationError("golf dictionary is fixed at N = 4");
    p.validate();
    Expr s = Expr::sin(Expr::var(0));
    Expr f = golf_friction_expr(p);
    return Dictionary(2, {ObservableFn::coordinate(0), ObservableFn::coordinate(1),
                          {ObservableKind::TrigMonomial, s.str(), s},
                          {ObservableKind::FrictionTerm, "sgn(x2)|m x2^2 a + m g cos x1|", f}});
}

} // namespace detail

/// Builds the prior-knowledge dictionary for a system. Deterministic: the same
/// spec always yields the same ordered list.
inline Dictionary build_dictionary(const DictionarySpec& spec) {
    switch (spec.system) {
    case SystemTag::Pendulum:
        return detail::pendulum_dictionary(spec.size == 0 ? 2 : spec.size, spec.damping.value_or(kPendulumDamping));
    case SystemTag::Duffing:
        return detail::duffing_dictionary(spec.size == 0 ? 2 : spec.size, spec.damping.value_or(kDuffingDamping));
    case SystemTag::Golf: return detail::golf_dictionary(spec.size == 0 ? 4 : spec.size, spec.golf);
    case SystemTag::Identity: {
        if (spec.state_dim < 1) throw ValidationError("identity dictionary needs state_dim >= 1");
        if (spec.size != 0 && spec.size != spec.state_dim) {
            throw ValidationError("identity dictionary has exactly N = n observables");
        }
        std::vector<ObservableFn> obs;
        for (int i = 0; i < spec.state_dim; ++i) obs.push_back(ObservableFn::coordinate(i));
        return Dictionary(spec.state_dim, std::move(obs));
    }
    case SystemTag::Polynomial:
        return detail::polynomial_dictionary(spec.size == 0 ? spec.state_dim : spec.size, spec.state_dim);
    }
    throw ValidationError("unknown system tag");
}

} // namespace koopman
