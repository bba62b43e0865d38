#include <cpdual/jets.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace cpdual;

namespace {

// random expression trees with guarded denominators and sqrt arguments, so
// evaluation is total on [-1, 1]^k
Expr random_expr(Rng& rng, const ExprScope& scope, int depth);

Expr random_leaf(Rng& rng, const ExprScope& scope) {
    if (!scope.params.empty() && rng.uniform() < 0.7) {
        int i = static_cast<int>(rng.uniform() * static_cast<double>(scope.params.size()));
        i = std::min<int>(i, static_cast<int>(scope.params.size()) - 1);
        return make_param(i, scope.params[i]);
    }
    return make_const(rng.uniform(-2.0, 2.0));
}

Expr random_expr(Rng& rng, const ExprScope& scope, int depth) {
    if (depth <= 0) return random_leaf(rng, scope);
    double r = rng.uniform();
    if (r < 0.18)
        return make_binary(ExprKind::add, random_expr(rng, scope, depth - 1),
                           random_expr(rng, scope, depth - 1));
    if (r < 0.36)
        return make_binary(ExprKind::sub, random_expr(rng, scope, depth - 1),
                           random_expr(rng, scope, depth - 1));
    if (r < 0.58)
        return make_binary(ExprKind::mul, random_expr(rng, scope, depth - 1),
                           random_expr(rng, scope, depth - 1));
    if (r < 0.68) {
        // guarded division: denominator b^2 + 1 >= 1
        Expr b = random_expr(rng, scope, depth - 2);
        Expr denom = make_binary(ExprKind::add, make_pow(b, 2), make_const(1.0));
        return make_binary(ExprKind::div, random_expr(rng, scope, depth - 1), denom);
    }
    if (r < 0.76) return make_call("sin", random_expr(rng, scope, depth - 1));
    if (r < 0.84) return make_call("cos", random_expr(rng, scope, depth - 1));
    if (r < 0.90) return make_call("exp", random_expr(rng, scope, depth - 2));
    if (r < 0.96) {
        Expr b = random_expr(rng, scope, depth - 2);
        return make_call("sqrt", make_binary(ExprKind::add, make_pow(b, 2), make_const(0.5)));
    }
    return make_neg(make_pow(random_expr(rng, scope, depth - 1), 2 + (rng.bits() & 1)));
}

ExprScope three_params() {
    ExprScope scope;
    scope.params = {"s", "t", "w"};
    return scope;
}

}  // namespace

TEST_CASE("bundle jets match hand derivatives on reference maps") {
    SECTION("graph with mixed second derivative") {
        ExprBundle b = parse_bundle("params: s t\nx1 = s\nx2 = 0\ny1 = t\ny2 = s*t\n");
        Jet2 j = jet2(b, Vec3(0, 0, 0));
        REQUIRE(j.k == 2);
        CHECK(j.value.norm() == 0.0);
        CHECK(j.jac(0, 0) == cplx(1, 0));
        CHECK(j.jac(0, 1) == cplx(0, 0));
        CHECK(j.jac(1, 0) == cplx(0, 0));
        CHECK(j.jac(1, 1) == cplx(1, 0));
        Eigen::Matrix3d want = Eigen::Matrix3d::Zero();
        want(0, 1) = want(1, 0) = 1.0;
        CHECK((j.hess[3] - want).norm() == 0.0);
        CHECK(j.hess[0].norm() == 0.0);
        CHECK(j.hess[1].norm() == 0.0);
        CHECK(j.hess[2].norm() == 0.0);
    }
    SECTION("graph with pure second derivative") {
        ExprBundle b = parse_bundle("params: s t\nx1 = s\nx2 = 0\ny1 = t\ny2 = s^2/2\n");
        Jet2 j = jet2(b, Vec3(0, 0, 0));
        Eigen::Matrix3d want = Eigen::Matrix3d::Zero();
        want(0, 0) = 1.0;
        CHECK((j.hess[3] - want).norm() < 1e-15);
    }
    SECTION("constant map") {
        ExprBundle b = parse_bundle("params: s t\nx1 = 2\nx2 = -1\ny1 = 0.5\ny2 = pi\n");
        Jet2 j = jet2(b, Vec3(0.3, -0.7, 0));
        CHECK(j.value[0] == cplx(2, -1));
        CHECK(j.value[1].imag() == Catch::Approx(kPi));
        CHECK(j.jac.norm() == 0.0);
        for (const auto& h : j.hess) CHECK(h.norm() == 0.0);
    }
}

TEST_CASE("parser handles products, trig evaluation and coordinate reuse") {
    ExprBundle b = parse_bundle(
        "# torus-flavoured test input\n"
        "params: s1 s2\n"
        "x1 = cos(s1)\n"
        "x2 = sin(s1)*cos(s2)\n"
        "y1 = s1\n"
        "y2 = x1*y1\n");
    CHECK(eval_bundle(b, Vec3(0, 0, 0))[0] == cplx(1, 0));
    // sin(0)*cos(0) = 0
    CHECK(eval_jet<double>(b.coord[1], Vec3(0, 0, 0), 2).val == 0.0);
    // y2 reuses x1 and y1: cos(s1)*s1
    CHECK(eval_jet<double>(b.coord[3], Vec3(0.5, 0, 0), 2).val ==
          Catch::Approx(std::cos(0.5) * 0.5));
}

TEST_CASE("parser reports positioned diagnostics") {
    SECTION("unknown identifier") {
        try {
            parse_bundle("params: s t\nx1 = s\nx2 = 0\ny1 = t\ny2 = a*x1^2\n");
            FAIL("expected a parse error");
        } catch (const parse_error& e) {
            CHECK(e.line() == 5);
            CHECK(std::string(e.what()).find("unknown identifier 'a'") != std::string::npos);
        }
    }
    SECTION("missing coordinate") {
        CHECK_THROWS_AS(parse_bundle("params: s\nx1 = s\nx2 = 0\ny1 = s\n"), parse_error);
    }
    SECTION("duplicate assignment") {
        CHECK_THROWS_AS(parse_bundle("params: s\nx1 = s\nx1 = 0\nx2 = 0\ny1 = s\ny2 = 0\n"),
                        parse_error);
    }
    SECTION("reserved parameter name") {
        CHECK_THROWS_AS(parse_bundle("params: sin\nx1 = 0\nx2 = 0\ny1 = 0\ny2 = 0\n"),
                        parse_error);
    }
    SECTION("chained exponent needs parentheses") {
        ExprScope scope = three_params();
        CHECK_THROWS_AS(parse_expression("s^2^3", scope), parse_error);
    }
    SECTION("trailing garbage") {
        ExprScope scope = three_params();
        try {
            parse_expression("s + ", scope, 7);
            FAIL("expected a parse error");
        } catch (const parse_error& e) {
            CHECK(e.line() == 7);
            CHECK(e.col() >= 4);
        }
    }
}

TEST_CASE("jet jacobians and hessians match central differences") {
    Rng rng(20240816);
    ExprScope scope = three_params();
    int tested = 0;
    while (tested < 100) {
        Expr e = random_expr(rng, scope, 4);
        Vec3 p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        Jet j;
        try {
            j = eval_jet<double>(e, p, 3);
        } catch (const geometry_error&) {
            continue;  // generator hit an exp overflow guard; draw again
        }
        if (!std::isfinite(j.val) || std::abs(j.val) > 1e6) continue;
        ++tested;
        auto f = [&](Vec3 q) { return eval_jet<double>(e, q, 3).val; };
        for (int i = 0; i < 3; ++i) {
            double fd = oracles::fd_partial(f, p, i);
            double scale = 1.0 + std::abs(j.val) + std::abs(fd) + std::abs(j.grad[i]);
            CHECK(std::abs(j.grad[i] - fd) < 5e-7 * scale);
            for (int l = i; l < 3; ++l) {
                double fd2 = oracles::fd_second(f, p, i, l);
                double hscale = 1.0 + std::abs(j.val) + std::abs(fd2) + std::abs(j.hess(i, l));
                CHECK(std::abs(j.hess(i, l) - fd2) < 5e-4 * hscale);
            }
        }
        CHECK((j.hess - j.hess.transpose()).norm() < 1e-12 * (1.0 + j.hess.norm()));
    }
}

TEST_CASE("quadratic taylor model converges at third order") {
    ExprBundle b = parse_bundle(
        "params: s t\n"
        "x1 = sin(s + 2*t)\n"
        "x2 = exp(s)*cos(t)\n"
        "y1 = s*t*t + cos(s)\n"
        "y2 = 1/(1 + s^2 + t^2)\n");
    Vec3 p(0.3, -0.2, 0);
    Vec3 v(0.8, 0.6, 0);
    Jet2 j = jet2(b, p);

    std::vector<double> hs{1e-2, 1e-3, 1e-4};
    std::vector<double> logh, logr;
    for (double h : hs) {
        Vec3 q = p + h * v;
        Vec2c exact = eval_bundle(b, q);
        Vec2c model = j.value;
        for (int c = 0; c < 2; ++c) {
            cplx lin = 0;
            for (int i = 0; i < 2; ++i) lin += j.jac(c, i) * v[i];
            double qre = v.head<2>().dot(j.hess[2 * c].topLeftCorner<2, 2>() * v.head<2>());
            double qim = v.head<2>().dot(j.hess[2 * c + 1].topLeftCorner<2, 2>() * v.head<2>());
            model[c] += h * lin + 0.5 * h * h * cplx(qre, qim);
        }
        double r = (exact - model).norm();
        REQUIRE(r > 1e-13);  // cubic content keeps the residual above noise
        logh.push_back(std::log(h));
        logr.push_back(std::log(r));
    }
    // least-squares slope of log r against log h
    double mh = 0, mr = 0;
    for (std::size_t i = 0; i < logh.size(); ++i) { mh += logh[i]; mr += logr[i]; }
    mh /= static_cast<double>(logh.size());
    mr /= static_cast<double>(logr.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < logh.size(); ++i) {
        num += (logh[i] - mh) * (logr[i] - mr);
        den += (logh[i] - mh) * (logh[i] - mh);
    }
    CHECK(num / den >= 2.9);
}

TEST_CASE("printing is a fixed point of parse") {
    Rng rng(7);
    ExprScope scope = three_params();
    for (int trial = 0; trial < 200; ++trial) {
        Expr e = random_expr(rng, scope, 4);
        std::string p1 = print_expr(e);
        Expr e2;
        REQUIRE_NOTHROW(e2 = parse_expression(p1, scope));
        std::string p2 = print_expr(e2);
        CHECK(p1 == p2);
        Vec3 at(0.37, -0.81, 0.12);
        try {
            double v1 = eval_jet<double>(e, at, 3).val;
            double v2 = eval_jet<double>(e2, at, 3).val;
            if (std::isfinite(v1)) CHECK(v1 == v2);
        } catch (const geometry_error&) {
        }
    }
    ExprBundle b = parse_bundle("params: u v\nx1 = u\nx2 = -u*v^2\ny1 = v\ny2 = x1*y1 - 1/(1 + u^2)\n");
    std::string c1 = print_bundle(b);
    std::string c2 = print_bundle(parse_bundle(c1));
    CHECK(c1 == c2);
}

TEST_CASE("evaluation guards report domain errors") {
    ExprBundle b = parse_bundle("params: s\nx1 = 1/s\nx2 = 0\ny1 = s\ny2 = 0\n");
    CHECK_THROWS_AS(jet2(b, Vec3(0, 0, 0)), geometry_error);
    try {
        jet2(b, Vec3(0, 0, 0));
    } catch (const geometry_error& e) {
        CHECK(e.code() == errc::domain_error);
    }
    ExprBundle s = parse_bundle("params: s\nx1 = sqrt(s)\nx2 = 0\ny1 = s\ny2 = 0\n");
    CHECK_THROWS_AS(jet2(s, Vec3(-1.0, 0, 0)), geometry_error);
    CHECK_NOTHROW(jet2(s, Vec3(0.25, 0, 0)));
    CHECK(eval_jet<double>(s.coord[0], Vec3(0.25, 0, 0), 1).grad[0] == Catch::Approx(1.0));
}

TEST_CASE("complex jets assemble into 2-jet bundles") {
    // z(s, t) = exp(i s) plus a t-dependent second coordinate
    auto at = [&](double sv, double tv) {
        JetC s = JetC::variable(cplx(sv, 0), 0);
        JetC t = JetC::variable(cplx(tv, 0), 1);
        JetC is = s * cplx(0, 1);
        return make_jet2(exp(is), t * t, 2);
    };
    Jet2 j = at(0.4, -0.3);
    CHECK(std::abs(j.value[0] - std::exp(cplx(0, 0.4))) < 1e-15);
    CHECK(std::abs(j.jac(0, 0) - cplx(0, 1) * std::exp(cplx(0, 0.4))) < 1e-15);
    CHECK(std::abs(j.jac(1, 1) - cplx(-0.6, 0)) < 1e-15);
    CHECK(j.hess[2](1, 1) == Catch::Approx(2.0));
    // hessian of Re exp(is) = -cos(s)
    CHECK(j.hess[0](0, 0) == Catch::Approx(-std::cos(0.4)));
    CHECK(j.hess[1](0, 0) == Catch::Approx(-std::sin(0.4)));
}
