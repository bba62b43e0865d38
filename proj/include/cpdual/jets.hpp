#pragma once

// Second-order forward differentiation and the surface-definition grammar.
//
// JetT<T> carries a truncated Taylor expansion (value, gradient, Hessian) in
// up to three real parameters; arithmetic on jets is exact through second
// order.  Expr is an immutable AST over the declared parameters; a bundle of
// four real coordinate expressions defines a map R^k -> C^2 whose 2-jet is
// assembled by jet2().

#include "core.hpp"

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace cpdual {

// ====== Taylor scalars ======

template <class T>
struct JetT {
    using Grad = Eigen::Matrix<T, 3, 1>;
    using Hess = Eigen::Matrix<T, 3, 3>;

    T val{};
    Grad grad = Grad::Zero();
    Hess hess = Hess::Zero();

    JetT() = default;
    explicit JetT(T v) : val(v) {}

    static JetT variable(T v, int index) {
        JetT j(v);
        j.grad[index] = T(1);
        return j;
    }
};

using Jet = JetT<double>;
using JetC = JetT<cplx>;

namespace jet_detail {

inline bool near_zero(double v) { return std::abs(v) < 1e-14; }
inline bool near_zero(const cplx& v) { return std::abs(v) < 1e-14; }

// real sqrt needs a strictly positive argument; complex uses the principal
// branch away from zero
inline bool outside_sqrt_domain(double v) { return v < 1e-14; }
inline bool outside_sqrt_domain(const cplx& v) { return std::abs(v) < 1e-14; }

}  // namespace jet_detail

template <class T>
JetT<T> operator+(const JetT<T>& a, const JetT<T>& b) {
    JetT<T> r;
    r.val = a.val + b.val;
    r.grad = a.grad + b.grad;
    r.hess = a.hess + b.hess;
    return r;
}

template <class T>
JetT<T> operator-(const JetT<T>& a, const JetT<T>& b) {
    JetT<T> r;
    r.val = a.val - b.val;
    r.grad = a.grad - b.grad;
    r.hess = a.hess - b.hess;
    return r;
}

template <class T>
JetT<T> operator-(const JetT<T>& a) {
    JetT<T> r;
    r.val = -a.val;
    r.grad = -a.grad;
    r.hess = -a.hess;
    return r;
}

template <class T>
JetT<T> operator*(const JetT<T>& a, const JetT<T>& b) {
    JetT<T> r;
    r.val = a.val * b.val;
    r.grad = a.grad * b.val + b.grad * a.val;
    r.hess = a.hess * b.val + b.hess * a.val + a.grad * b.grad.transpose() +
             b.grad * a.grad.transpose();
    return r;
}

// Composition with a scalar function given its first two derivatives at g.val.
template <class T>
JetT<T> jet_chain(const JetT<T>& g, T f, T fp, T fpp) {
    JetT<T> r;
    r.val = f;
    r.grad = fp * g.grad;
    r.hess = fp * g.hess + fpp * (g.grad * g.grad.transpose());
    return r;
}

template <class T>
JetT<T> inv(const JetT<T>& a) {
    if (jet_detail::near_zero(a.val))
        throw geometry_error(errc::domain_error, "division by a value below 1e-14");
    T w = T(1) / a.val;
    return jet_chain(a, w, -w * w, T(2) * w * w * w);
}

template <class T>
JetT<T> operator/(const JetT<T>& a, const JetT<T>& b) {
    return a * inv(b);
}

template <class T>
JetT<T> operator+(const JetT<T>& a, T s) { JetT<T> r = a; r.val += s; return r; }
template <class T>
JetT<T> operator+(T s, const JetT<T>& a) { return a + s; }
template <class T>
JetT<T> operator-(const JetT<T>& a, T s) { JetT<T> r = a; r.val -= s; return r; }
template <class T>
JetT<T> operator-(T s, const JetT<T>& a) { return (-a) + s; }
template <class T>
JetT<T> operator*(const JetT<T>& a, T s) {
    JetT<T> r;
    r.val = a.val * s;
    r.grad = a.grad * s;
    r.hess = a.hess * s;
    return r;
}
template <class T>
JetT<T> operator*(T s, const JetT<T>& a) { return a * s; }
template <class T>
JetT<T> operator/(const JetT<T>& a, T s) {
    if (jet_detail::near_zero(s))
        throw geometry_error(errc::domain_error, "division by a value below 1e-14");
    return a * (T(1) / s);
}
template <class T>
JetT<T> operator/(T s, const JetT<T>& a) { return inv(a) * s; }

template <class T>
JetT<T> sin(const JetT<T>& a) {
    using std::cos;
    using std::sin;
    return jet_chain(a, sin(a.val), cos(a.val), -sin(a.val));
}

template <class T>
JetT<T> cos(const JetT<T>& a) {
    using std::cos;
    using std::sin;
    return jet_chain(a, cos(a.val), -sin(a.val), -cos(a.val));
}

template <class T>
JetT<T> exp(const JetT<T>& a) {
    using std::exp;
    T e = exp(a.val);
    return jet_chain(a, e, e, e);
}

template <class T>
JetT<T> sqrt(const JetT<T>& a) {
    using std::sqrt;
    if (jet_detail::outside_sqrt_domain(a.val))
        throw geometry_error(errc::domain_error, "sqrt argument outside its domain");
    T s = sqrt(a.val);
    T ds = T(0.5) / s;
    return jet_chain(a, s, ds, T(-0.5) * ds / a.val);
}

// Integer powers via repeated multiplication; negative exponents go through
// the guarded inverse.
template <class T>
JetT<T> pow_int(const JetT<T>& a, int n) {
    if (n < 0) return inv(pow_int(a, -n));
    JetT<T> r(T(1));
    JetT<T> base = a;
    for (int m = n; m > 0; m >>= 1) {
        if (m & 1) r = r * base;
        if (m > 1) base = base * base;
    }
    return r;
}

// ====== 2-jets of maps R^k -> C^2 ======
//
// Hessians are stored per real coordinate in the order
// (Re x, Im x, Re y, Im y); rows of the jacobian are the complex coordinates.

struct Jet2 {
    int k = 0;
    Vec2c value = Vec2c::Zero();
    Eigen::Matrix<cplx, 2, 3> jac = Eigen::Matrix<cplx, 2, 3>::Zero();
    std::array<Eigen::Matrix3d, 4> hess{Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero(),
                                        Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero()};
};

inline Jet2 make_jet2(const JetC& x, const JetC& y, int k) {
    Jet2 j;
    j.k = k;
    j.value = Vec2c(x.val, y.val);
    for (int c = 0; c < 3; ++c) {
        j.jac(0, c) = x.grad[c];
        j.jac(1, c) = y.grad[c];
    }
    j.hess[0] = x.hess.real();
    j.hess[1] = x.hess.imag();
    j.hess[2] = y.hess.real();
    j.hess[3] = y.hess.imag();
    return j;
}

// ====== Expressions ======
//
// Immutable AST over declared parameters.  The text grammar is real-valued
// per coordinate; complex constants exist only in assembled trees (the loader
// combines x1 + i x2).  Division nodes carry the nonzero-denominator guard as
// their domain annotation.

enum class ExprKind { constant, param, add, sub, mul, div, neg, pow, call };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    ExprKind kind;
    cplx value{};                // constant
    int param = -1;              // param: index into the bundle's parameter list
    std::string name;            // param or function name
    int exponent = 0;            // pow
    double domain_eps = 0.0;     // div: |denominator| must stay above this
    Expr a, b;
};

inline Expr make_const(cplx v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::constant;
    n->value = v;
    return n;
}

inline Expr make_param(int index, std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::param;
    n->param = index;
    n->name = std::move(name);
    return n;
}

inline Expr make_binary(ExprKind kind, Expr a, Expr b) {
    auto n = std::make_shared<ExprNode>();
    n->kind = kind;
    if (kind == ExprKind::div) n->domain_eps = 1e-14;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

inline Expr make_neg(Expr a) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::neg;
    n->a = std::move(a);
    return n;
}

inline Expr make_pow(Expr a, int e) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::pow;
    n->exponent = e;
    n->a = std::move(a);
    return n;
}

inline Expr make_call(std::string fn, Expr a) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::call;
    n->name = std::move(fn);
    n->a = std::move(a);
    return n;
}

namespace jet_detail {

inline double as_real(const cplx& v) {
    // the text grammar only produces real constants; complex ones are
    // loader-assembled and evaluated as JetC
    return v.real();
}

template <class T>
T const_cast_to(const cplx& v);

template <>
inline double const_cast_to<double>(const cplx& v) { return as_real(v); }
template <>
inline cplx const_cast_to<cplx>(const cplx& v) { return v; }

}  // namespace jet_detail

template <class T>
JetT<T> eval_jet(const Expr& e, const Vec3& point, int k) {
    switch (e->kind) {
        case ExprKind::constant:
            return JetT<T>(jet_detail::const_cast_to<T>(e->value));
        case ExprKind::param:
            return JetT<T>::variable(T(point[e->param]), e->param);
        case ExprKind::add:
            return eval_jet<T>(e->a, point, k) + eval_jet<T>(e->b, point, k);
        case ExprKind::sub:
            return eval_jet<T>(e->a, point, k) - eval_jet<T>(e->b, point, k);
        case ExprKind::mul:
            return eval_jet<T>(e->a, point, k) * eval_jet<T>(e->b, point, k);
        case ExprKind::div:
            return eval_jet<T>(e->a, point, k) / eval_jet<T>(e->b, point, k);
        case ExprKind::neg:
            return -eval_jet<T>(e->a, point, k);
        case ExprKind::pow:
            return pow_int(eval_jet<T>(e->a, point, k), e->exponent);
        case ExprKind::call: {
            JetT<T> g = eval_jet<T>(e->a, point, k);
            if (e->name == "sin") return sin(g);
            if (e->name == "cos") return cos(g);
            if (e->name == "exp") return exp(g);
            return sqrt(g);
        }
    }
    throw std::logic_error("unreachable expression kind");
}

// ====== Canonical printing ======
//
// Parenthesization preserves the tree exactly, so parse(print(e)) rebuilds e
// and printing is a fixed point of print-parse round trips.

namespace jet_detail {

// precedence levels: additive 1, multiplicative 2, unary minus 3, power 4,
// atoms 5; a constant printed with a leading sign behaves like unary minus
inline int precedence(const ExprNode& n) {
    switch (n.kind) {
        case ExprKind::add:
        case ExprKind::sub: return 1;
        case ExprKind::mul:
        case ExprKind::div: return 2;
        case ExprKind::neg: return 3;
        case ExprKind::pow: return 4;
        case ExprKind::constant: return std::signbit(n.value.real()) ? 3 : 5;
        default: return 5;
    }
}

inline void print_rec(const Expr& e, int min_level, std::string& out) {
    const ExprNode& n = *e;
    bool parens = precedence(n) < min_level;
    if (parens) out += '(';
    switch (n.kind) {
        case ExprKind::constant:
            out += fmt_g17(as_real(n.value));
            break;
        case ExprKind::param:
            out += n.name;
            break;
        case ExprKind::add:
            print_rec(n.a, 1, out);
            out += " + ";
            print_rec(n.b, 2, out);
            break;
        case ExprKind::sub:
            print_rec(n.a, 1, out);
            out += " - ";
            print_rec(n.b, 2, out);
            break;
        case ExprKind::mul:
            print_rec(n.a, 2, out);
            out += '*';
            print_rec(n.b, 3, out);
            break;
        case ExprKind::div:
            print_rec(n.a, 2, out);
            out += '/';
            print_rec(n.b, 3, out);
            break;
        case ExprKind::neg:
            out += '-';
            print_rec(n.a, 3, out);
            break;
        case ExprKind::pow:
            print_rec(n.a, 5, out);
            out += '^';
            out += std::to_string(n.exponent);
            break;
        case ExprKind::call:
            out += n.name;
            out += '(';
            print_rec(n.a, 1, out);
            out += ')';
            break;
    }
    if (parens) out += ')';
}

}  // namespace jet_detail

inline std::string print_expr(const Expr& e) {
    std::string out;
    jet_detail::print_rec(e, 1, out);
    return out;
}

// ====== Parsing ======
//
// Line-oriented bundles: a `params:` header, then one assignment per line for
// each of x1, x2, y1, y2.  Later assignments may reference earlier coordinate
// names; references are substituted at parse time so a finished expression's
// free variables are parameters only.  `#` starts a comment.  Errors carry
// 1-based line and column.

struct ExprScope {
    std::vector<std::string> params;
    std::map<std::string, Expr> named;  // earlier coordinates
};

namespace jet_detail {

struct Lexer {
    const std::string& text;
    int line;
    std::size_t pos = 0;

    Lexer(const std::string& t, int line_no) : text(t), line(line_no) {}

    int col() const { return static_cast<int>(pos) + 1; }

    void skip_space() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }

    bool eof() {
        skip_space();
        return pos >= text.size();
    }

    char peek() {
        skip_space();
        return pos < text.size() ? text[pos] : '\0';
    }

    bool accept(char c) {
        skip_space();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& expected) {
        skip_space();
        throw parse_error(line, col(), "expected " + expected);
    }

    std::string ident() {
        skip_space();
        std::size_t start = pos;
        auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
        auto alnum = [&](char c) { return alpha(c) || (c >= '0' && c <= '9'); };
        if (pos < text.size() && alpha(text[pos])) {
            ++pos;
            while (pos < text.size() && alnum(text[pos])) ++pos;
        }
        return text.substr(start, pos - start);
    }

    double number() {
        skip_space();
        std::size_t start = pos;
        while (pos < text.size() && ((text[pos] >= '0' && text[pos] <= '9') || text[pos] == '.')) ++pos;
        if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
            std::size_t mark = pos++;
            if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
            if (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
                while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
            } else {
                pos = mark;  // the 'e' was not an exponent
            }
        }
        if (pos == start) fail("a number");
        try {
            return std::stod(text.substr(start, pos - start));
        } catch (const std::exception&) {
            throw parse_error(line, static_cast<int>(start) + 1, "malformed number");
        }
    }

    int integer() {
        skip_space();
        bool negative = accept('-');
        skip_space();
        std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == start) fail("an integer exponent");
        int v = std::stoi(text.substr(start, pos - start));
        return negative ? -v : v;
    }
};

inline bool is_function_name(const std::string& s) {
    return s == "sin" || s == "cos" || s == "exp" || s == "sqrt";
}

Expr parse_additive(Lexer& lx, const ExprScope& scope);

inline Expr parse_primary(Lexer& lx, const ExprScope& scope) {
    char c = lx.peek();
    if (c == '(') {
        lx.accept('(');
        Expr e = parse_additive(lx, scope);
        if (!lx.accept(')')) lx.fail("')'");
        return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return make_const(lx.number());
    int col = lx.col();
    std::string id = lx.ident();
    if (id.empty()) lx.fail("a number, name or '('");
    if (is_function_name(id)) {
        if (!lx.accept('(')) lx.fail("'(' after function name");
        Expr arg = parse_additive(lx, scope);
        if (!lx.accept(')')) lx.fail("')'");
        return make_call(id, arg);
    }
    if (id == "pi") return make_const(kPi);
    for (std::size_t i = 0; i < scope.params.size(); ++i)
        if (scope.params[i] == id) return make_param(static_cast<int>(i), id);
    auto named = scope.named.find(id);
    if (named != scope.named.end()) return named->second;
    throw parse_error(lx.line, col, "unknown identifier '" + id + "'");
}

inline Expr parse_power(Lexer& lx, const ExprScope& scope) {
    Expr base = parse_primary(lx, scope);
    if (lx.accept('^')) return make_pow(base, lx.integer());
    return base;
}

inline Expr parse_unary(Lexer& lx, const ExprScope& scope) {
    if (lx.accept('-')) return make_neg(parse_unary(lx, scope));
    return parse_power(lx, scope);
}

inline Expr parse_multiplicative(Lexer& lx, const ExprScope& scope) {
    Expr e = parse_unary(lx, scope);
    for (;;) {
        if (lx.accept('*')) e = make_binary(ExprKind::mul, e, parse_unary(lx, scope));
        else if (lx.accept('/')) e = make_binary(ExprKind::div, e, parse_unary(lx, scope));
        else return e;
    }
}

inline Expr parse_additive(Lexer& lx, const ExprScope& scope) {
    Expr e = parse_multiplicative(lx, scope);
    for (;;) {
        if (lx.accept('+')) e = make_binary(ExprKind::add, e, parse_multiplicative(lx, scope));
        else if (lx.accept('-')) e = make_binary(ExprKind::sub, e, parse_multiplicative(lx, scope));
        else return e;
    }
}

}  // namespace jet_detail

inline Expr parse_expression(const std::string& text, const ExprScope& scope, int line_no = 1) {
    jet_detail::Lexer lx(text, line_no);
    Expr e = jet_detail::parse_additive(lx, scope);
    if (!lx.eof()) lx.fail("end of expression");
    return e;
}

// A parsed surface definition: k parameters and the four real coordinates.
struct ExprBundle {
    int k = 0;
    std::vector<std::string> params;
    std::array<Expr, 4> coord;  // x1, x2, y1, y2
};

inline const std::array<std::string, 4>& coord_names() {
    static const std::array<std::string, 4> names{"x1", "x2", "y1", "y2"};
    return names;
}

inline ExprBundle parse_bundle(const std::string& text) {
    ExprBundle bundle;
    ExprScope scope;
    std::array<bool, 4> seen{false, false, false, false};
    bool header_seen = false;

    std::vector<std::string> lines;
    {
        std::string cur;
        for (char c : text) {
            if (c == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        lines.push_back(cur);
    }

    for (std::size_t li = 0; li < lines.size(); ++li) {
        int line_no = static_cast<int>(li) + 1;
        std::string line = lines[li];
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        bool blank = true;
        for (char c : line)
            if (c != ' ' && c != '\t' && c != '\r') blank = false;
        if (blank) continue;

        jet_detail::Lexer lx(line, line_no);
        if (!header_seen) {
            std::string kw = lx.ident();
            if (kw != "params" || !lx.accept(':'))
                throw parse_error(line_no, 1, "expected 'params:' header");
            while (!lx.eof()) {
                int col = lx.col();
                std::string name = lx.ident();
                if (name.empty()) lx.fail("a parameter name");
                if (name == "pi" || jet_detail::is_function_name(name))
                    throw parse_error(line_no, col, "'" + name + "' is reserved");
                for (const auto& cn : coord_names())
                    if (name == cn)
                        throw parse_error(line_no, col, "'" + name + "' is a coordinate name");
                for (const auto& p : scope.params)
                    if (p == name)
                        throw parse_error(line_no, col, "duplicate parameter '" + name + "'");
                scope.params.push_back(name);
            }
            if (scope.params.size() > 3)
                throw parse_error(line_no, 1, "at most 3 parameters are supported");
            header_seen = true;
            continue;
        }

        int col = lx.col();
        std::string target = lx.ident();
        int target_index = -1;
        for (std::size_t i = 0; i < coord_names().size(); ++i)
            if (coord_names()[i] == target) target_index = static_cast<int>(i);
        if (target_index < 0)
            throw parse_error(line_no, col, "assignment target must be one of x1, x2, y1, y2");
        if (seen[target_index])
            throw parse_error(line_no, col, "coordinate '" + target + "' assigned twice");
        if (!lx.accept('=')) lx.fail("'='");
        std::string rest = line.substr(lx.pos);
        Expr e = parse_expression(rest, scope, line_no);
        bundle.coord[target_index] = e;
        seen[target_index] = true;
        scope.named[target] = e;
    }

    if (!header_seen) throw parse_error(1, 1, "expected 'params:' header");
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw parse_error(static_cast<int>(lines.size()), 1,
                              "missing assignment for '" + coord_names()[i] + "'");
    bundle.params = scope.params;
    bundle.k = static_cast<int>(scope.params.size());
    return bundle;
}

inline std::string print_bundle(const ExprBundle& bundle) {
    std::string out = "params:";
    for (const auto& p : bundle.params) {
        out += ' ';
        out += p;
    }
    out += '\n';
    for (std::size_t i = 0; i < bundle.coord.size(); ++i) {
        out += coord_names()[i];
        out += " = ";
        out += print_expr(bundle.coord[i]);
        out += '\n';
    }
    return out;
}

// ====== Bundle evaluation ======

inline Jet2 jet2(const ExprBundle& bundle, const Vec3& point) {
    Jet x1 = eval_jet<double>(bundle.coord[0], point, bundle.k);
    Jet x2 = eval_jet<double>(bundle.coord[1], point, bundle.k);
    Jet y1 = eval_jet<double>(bundle.coord[2], point, bundle.k);
    Jet y2 = eval_jet<double>(bundle.coord[3], point, bundle.k);
    Jet2 j;
    j.k = bundle.k;
    j.value = Vec2c(cplx(x1.val, x2.val), cplx(y1.val, y2.val));
    for (int c = 0; c < 3; ++c) {
        j.jac(0, c) = cplx(x1.grad[c], x2.grad[c]);
        j.jac(1, c) = cplx(y1.grad[c], y2.grad[c]);
    }
    j.hess[0] = x1.hess;
    j.hess[1] = x2.hess;
    j.hess[2] = y1.hess;
    j.hess[3] = y2.hess;
    return j;
}

// Value-only evaluation of the underlying map (used by finite-difference
// checks and by samplers that do not need derivatives).
inline Vec2c eval_bundle(const ExprBundle& bundle, const Vec3& point) {
    double v[4];
    for (int i = 0; i < 4; ++i) v[i] = eval_jet<double>(bundle.coord[i], point, bundle.k).val;
    return Vec2c(cplx(v[0], v[1]), cplx(v[2], v[3]));
}

}  // namespace cpdual
