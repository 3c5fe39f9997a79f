#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "koopman/types.hpp"

namespace koopman {

/// Immutable expression tree over the state variables x1..xn.
///
/// Observables are stored as expressions rather than compiled callables so a
/// fitted model can be written to disk and evaluated again after reloading.
/// `str()` is canonical: `parse_expression(e.str()).str() == e.str()`, and the
/// reparsed tree evaluates bit-identically.
class Expr {
public:
    enum class Op { Const, Var, Add, Mul, Neg, Pow, Sin, Cos, Sgn, Abs };

    static Expr constant(double value) {
        if (!std::isfinite(value)) throw ValidationError("expression constant must be finite");
        return Expr(make(Op::Const, value, 0, {}));
    }
    /// Zero-based state index; printed as x(index+1).
    static Expr var(int index) {
        if (index < 0) throw ValidationError("variable index must be non-negative");
        return Expr(make(Op::Var, 0.0, index, {}));
    }
    static Expr add(std::vector<Expr> terms) { return nary(Op::Add, std::move(terms)); }
    static Expr mul(std::vector<Expr> factors) { return nary(Op::Mul, std::move(factors)); }
    static Expr neg(Expr e) {
        if (e.op() == Op::Const) return constant(-e.value());
        return Expr(make(Op::Neg, 0.0, 0, {std::move(e)}));
    }
    static Expr pow(Expr base, int exponent) {
        if (exponent < 0) throw ValidationError("only non-negative integer powers are supported");
        if (exponent == 1) return base;
        return Expr(make(Op::Pow, 0.0, exponent, {std::move(base)}));
    }
    static Expr sin(Expr e) { return Expr(make(Op::Sin, 0.0, 0, {std::move(e)})); }
    static Expr cos(Expr e) { return Expr(make(Op::Cos, 0.0, 0, {std::move(e)})); }
    /// sgn(0) = 0.
    static Expr sgn(Expr e) { return Expr(make(Op::Sgn, 0.0, 0, {std::move(e)})); }
    static Expr abs(Expr e) { return Expr(make(Op::Abs, 0.0, 0, {std::move(e)})); }

    Op op() const noexcept { return node_->op; }
    double value() const noexcept { return node_->value; }
    int index() const noexcept { return node_->index; }
    const std::vector<Expr>& children() const noexcept { return node_->children; }

    double eval(const double* x) const {
        const Node& n = *node_;
        switch (n.op) {
        case Op::Const: return n.value;
        case Op::Var: return x[n.index];
        case Op::Add: {
            double s = n.children[0].eval(x);
            for (std::size_t i = 1; i < n.children.size(); ++i) s += n.children[i].eval(x);
            return s;
        }
        case Op::Mul: {
            double p = n.children[0].eval(x);
            for (std::size_t i = 1; i < n.children.size(); ++i) p *= n.children[i].eval(x);
            return p;
        }
        case Op::Neg: return -n.children[0].eval(x);
        case Op::Pow: {
            double b = n.children[0].eval(x);
            double r = 1.0;
            for (int i = 0; i < n.index; ++i) r *= b;
            return r;
        }
        case Op::Sin: return std::sin(n.children[0].eval(x));
        case Op::Cos: return std::cos(n.children[0].eval(x));
        case Op::Sgn: {
            double v = n.children[0].eval(x);
            return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        }
        case Op::Abs: return std::fabs(n.children[0].eval(x));
        }
        return 0.0;
    }

    double eval(const Vector& x) const { return eval(x.data()); }

    /// Largest zero-based variable index referenced, or -1.
    int max_var() const {
        if (op() == Op::Var) return index();
        int m = -1;
        for (const auto& c : children()) m = std::max(m, c.max_var());
        return m;
    }

    std::string str() const {
        std::string out;
        print(out);
        return out;
    }

private:
    struct Node {
        Op op;
        double value;
        int index; // variable index, or exponent for Pow
        std::vector<Expr> children;
    };

    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    static std::shared_ptr<const Node> make(Op op, double value, int index, std::vector<Expr> children) {
        return std::make_shared<const Node>(Node{op, value, index, std::move(children)});
    }

    static Expr nary(Op op, std::vector<Expr> items) {
        if (items.empty()) throw ValidationError("empty sum or product");
        if (items.size() == 1) return std::move(items.front());
        return Expr(make(op, 0.0, 0, std::move(items)));
    }

    static void print_number(std::string& out, double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += buf;
    }

    void print_wrapped(std::string& out, bool wrap) const {
        if (wrap) out += '(';
        print(out);
        if (wrap) out += ')';
    }

    void print(std::string& out) const {
        const Node& n = *node_;
        switch (n.op) {
        case Op::Const: print_number(out, n.value); return;
        case Op::Var:
            out += 'x';
            out += std::to_string(n.index + 1);
            return;
        case Op::Add:
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                const Expr& c = n.children[i];
                bool negative = c.op() == Op::Neg || (c.op() == Op::Const && std::signbit(c.value()));
                if (i > 0 && !negative) out += '+';
                // Nested sums keep their parentheses so the tree shape survives a round trip.
                c.print_wrapped(out, c.op() == Op::Add);
            }
            return;
        case Op::Mul:
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                const Expr& c = n.children[i];
                if (i > 0) out += '*';
                bool wrap = c.op() == Op::Add || c.op() == Op::Mul || c.op() == Op::Neg ||
                            (i > 0 && c.op() == Op::Const && std::signbit(c.value()));
                c.print_wrapped(out, wrap);
            }
            return;
        case Op::Neg: {
            const Expr& c = n.children[0];
            out += '-';
            c.print_wrapped(out, c.op() == Op::Add || c.op() == Op::Mul || c.op() == Op::Neg);
            return;
        }
        case Op::Pow: {
            const Expr& b = n.children[0];
            bool atomic = b.op() == Op::Var || b.op() == Op::Sin || b.op() == Op::Cos || b.op() == Op::Sgn ||
                          b.op() == Op::Abs || (b.op() == Op::Const && !std::signbit(b.value()));
            b.print_wrapped(out, !atomic);
            out += '^';
            out += std::to_string(n.index);
            return;
        }
        case Op::Sin: out += "sin("; break;
        case Op::Cos: out += "cos("; break;
        case Op::Sgn: out += "sgn("; break;
        case Op::Abs: out += "abs("; break;
        }
        n.children[0].print(out);
        out += ')';
    }

    std::shared_ptr<const Node> node_;
};

namespace detail {

class ExprParser {
public:
    explicit ExprParser(std::string_view text) : text_(text) {}

    Expr parse() {
        Expr e = parse_sum();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw ValidationError("cannot parse expression '" + std::string(text_) + "' at offset " +
                              std::to_string(pos_) + ": " + why);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr parse_sum() {
        std::vector<Expr> terms;
        terms.push_back(parse_product());
        for (;;) {
            if (accept('+')) {
                terms.push_back(parse_product());
            } else if (accept('-')) {
                // a-b*c is a+(-(b*c)); the printer always wraps a negated product.
                terms.push_back(Expr::neg(parse_product()));
            } else {
                break;
            }
        }
        return Expr::add(std::move(terms));
    }

    Expr parse_product() {
        std::vector<Expr> factors;
        factors.push_back(parse_unary());
        while (accept('*')) factors.push_back(parse_unary());
        return Expr::mul(std::move(factors));
    }

    Expr parse_unary() {
        if (accept('-')) return Expr::neg(parse_unary());
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (accept('^')) {
            skip_space();
            std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) fail("expected integer exponent");
            return Expr::pow(std::move(base), std::stoi(std::string(text_.substr(start, pos_ - start))));
        }
        return base;
    }

    Expr parse_primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (c == 'x') {
            ++pos_;
            std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) fail("expected variable index after 'x'");
            int idx = std::stoi(std::string(text_.substr(start, pos_ - start)));
            if (idx < 1) fail("variable indices start at x1");
            return Expr::var(idx - 1);
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        if (!accept('(')) fail("expected '(' after function name '" + name + "'");
        Expr arg = parse_sum();
        if (!accept(')')) fail("expected ')'");
        if (name == "sin") return Expr::sin(std::move(arg));
        if (name == "cos") return Expr::cos(std::move(arg));
        if (name == "sgn") return Expr::sgn(std::move(arg));
        if (name == "abs") return Expr::abs(std::move(arg));
        pos_ = start;
        fail("unknown function '" + name + "'");
    }

    Expr parse_number() {
        std::string s(text_.substr(pos_));
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            fail("malformed number");
        }
        pos_ += used;
        return Expr::constant(v);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Expr parse_expression(std::string_view text) {
    return detail::ExprParser(text).parse();
}

} // namespace koopman
