#pragma once

// Parametric real submanifold patches of C^2 and the slope apparatus along
// them: tangent planes, the E-function whose zero set in parameter space is
// the critical curve of a slope, and predictor-corrector tracing of that
// curve.

#include "core.hpp"
#include "jets.hpp"
#include "planes.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace cpdual {

// ====== Parameter domains ======

struct Box {
    int k = 0;
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    static Box cube(int k, double lo_v, double hi_v) {
        Box b;
        b.k = k;
        for (int i = 0; i < k; ++i) {
            b.lo[i] = lo_v;
            b.hi[i] = hi_v;
        }
        return b;
    }

    bool contains(const Vec3& p, double margin = 0.0) const {
        for (int i = 0; i < k; ++i)
            if (p[i] < lo[i] - margin || p[i] > hi[i] + margin) return false;
        return true;
    }

    Vec3 center() const { return 0.5 * (lo + hi); }

    bool empty() const {
        for (int i = 0; i < k; ++i)
            if (hi[i] < lo[i]) return true;
        return false;
    }
};

// ====== Surface patches ======
//
// A patch is a C^2 map from a box in R^k (k <= 3) into C^2, with exact 2-jets.
// Sources are either parsed expression bundles or built-in catalog entries.

class SurfacePatch {
public:
    SurfacePatch() = default;

    static SurfacePatch from_bundle(ExprBundle bundle, Box domain, std::string name = "graph") {
        SurfacePatch s;
        s.k_ = bundle.k;
        s.domain_ = domain;
        s.name_ = std::move(name);
        auto b = std::make_shared<ExprBundle>(std::move(bundle));
        s.jet_fn_ = [b](const Vec3& p) { return jet2(*b, p); };
        return s;
    }

    static SurfacePatch from_function(int k, std::function<Jet2(const Vec3&)> fn, Box domain,
                                      std::string name) {
        SurfacePatch s;
        s.k_ = k;
        s.domain_ = domain;
        s.name_ = std::move(name);
        s.jet_fn_ = std::move(fn);
        return s;
    }

    int k() const { return k_; }
    const Box& domain() const { return domain_; }
    const std::string& name() const { return name_; }
    bool c2() const { return c2_; }

    Jet2 jet(const Vec3& p) const { return jet_fn_(p); }
    Vec2c value(const Vec3& p) const { return jet_fn_(p).value; }

    // real 4 x k jacobian in coordinate order (x1, x2, y1, y2)
    Eigen::Matrix<double, 4, 3> real_jacobian(const Jet2& j) const {
        Eigen::Matrix<double, 4, 3> m = Eigen::Matrix<double, 4, 3>::Zero();
        for (int c = 0; c < k_; ++c) {
            m(0, c) = j.jac(0, c).real();
            m(1, c) = j.jac(0, c).imag();
            m(2, c) = j.jac(1, c).real();
            m(3, c) = j.jac(1, c).imag();
        }
        return m;
    }

    // smallest singular value of the real jacobian restricted to k columns
    double immersion_margin(const Vec3& p) const {
        Jet2 j = jet_fn_(p);
        Eigen::MatrixXd m = real_jacobian(j).leftCols(k_);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        return k_ == 0 ? 1.0 : svd.singularValues()[k_ - 1];
    }

private:
    int k_ = 0;
    Box domain_;
    std::string name_;
    bool c2_ = true;
    std::function<Jet2(const Vec3&)> jet_fn_;
};

// ====== Built-in catalog ======
//
// Names accepted by the CLI: r2, complex-line, complex-conic, clifford-torus,
// p2r-chart, graph:<file>.  Files use the bundle grammar of jets.hpp.

namespace surface_detail {

inline Jet2 jet_r2(const Vec3& p) {
    JetC s = JetC::variable(cplx(p[0], 0), 0);
    JetC t = JetC::variable(cplx(p[1], 0), 1);
    return make_jet2(s, t, 2);
}

inline Jet2 jet_complex_line(const Vec3& p) {
    JetC s = JetC::variable(cplx(p[0], 0), 0);
    JetC t = JetC::variable(cplx(p[1], 0), 1);
    JetC z = s + t * cplx(0, 1);
    return make_jet2(z, JetC(cplx(0, 0)), 2);
}

inline Jet2 jet_complex_conic(const Vec3& p) {
    JetC s = JetC::variable(cplx(p[0], 0), 0);
    JetC t = JetC::variable(cplx(p[1], 0), 1);
    JetC z = s + t * cplx(0, 1);
    return make_jet2(z, z * z, 2);
}

inline Jet2 jet_torus(const Vec3& p) {
    JetC s = JetC::variable(cplx(p[0], 0), 0);
    JetC t = JetC::variable(cplx(p[1], 0), 1);
    return make_jet2(exp(s * cplx(0, 1)), exp(t * cplx(0, 1)), 2);
}

// real projective plane inside P^2(C) meets this affine chart in R^2,
// parametrized by spherical angles: (tan(s) cos(t), tan(s) sin(t))
inline Jet2 jet_p2r_chart(const Vec3& p) {
    Jet s = Jet::variable(p[0], 0);
    Jet t = Jet::variable(p[1], 1);
    Jet tn = sin(s) / cos(s);
    Jet x = tn * cos(t);
    Jet y = tn * sin(t);
    JetC xc, yc;
    xc.val = x.val;
    yc.val = y.val;
    for (int a = 0; a < 3; ++a) {
        xc.grad[a] = x.grad[a];
        yc.grad[a] = y.grad[a];
        for (int b = 0; b < 3; ++b) {
            xc.hess(a, b) = x.hess(a, b);
            yc.hess(a, b) = y.hess(a, b);
        }
    }
    return make_jet2(xc, yc, 2);
}

}  // namespace surface_detail

// Loads a `params:` bundle file; the parameter domain defaults to the unit
// box and can be overridden by the caller afterwards.
inline SurfacePatch load_graph_surface(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error(0, 0, "cannot open surface file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ExprBundle bundle = parse_bundle(text);
    Box domain = Box::cube(bundle.k, -1.0, 1.0);
    return SurfacePatch::from_bundle(std::move(bundle), domain, "graph:" + path);
}

inline SurfacePatch make_catalog_surface(const std::string& name) {
    using surface_detail::jet_complex_conic;
    using surface_detail::jet_complex_line;
    using surface_detail::jet_p2r_chart;
    using surface_detail::jet_r2;
    using surface_detail::jet_torus;
    if (name == "r2")
        return SurfacePatch::from_function(2, jet_r2, Box::cube(2, -1.0, 1.0), name);
    if (name == "complex-line")
        return SurfacePatch::from_function(2, jet_complex_line, Box::cube(2, -1.0, 1.0), name);
    if (name == "complex-conic")
        return SurfacePatch::from_function(2, jet_complex_conic, Box::cube(2, -1.0, 1.0), name);
    if (name == "clifford-torus")
        return SurfacePatch::from_function(2, jet_torus, Box::cube(2, 0.0, 2.0 * kPi), name);
    if (name == "p2r-chart") {
        Box b;
        b.k = 2;
        b.lo = Vec3(-1.2, 0.0, 0.0);
        b.hi = Vec3(1.2, 2.0 * kPi, 0.0);
        return SurfacePatch::from_function(2, jet_p2r_chart, b, name);
    }
    if (name.rfind("graph:", 0) == 0) return load_graph_surface(name.substr(6));
    throw geometry_error(errc::domain_error, "unknown catalog surface '" + name + "'");
}

// ====== Tangent planes ======

inline RealPlane2 tangent_plane(const SurfacePatch& s, const Vec3& param) {
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "tangent_plane needs a 2-parameter patch");
    Jet2 j = s.jet(param);
    Eigen::Matrix<double, 4, 3> m = s.real_jacobian(j);
    Vec4 j1 = m.col(0), j2 = m.col(1);
    Eigen::Matrix<double, 4, 2> cols;
    cols.col(0) = j1;
    cols.col(1) = j2;
    Eigen::JacobiSVD<Eigen::Matrix<double, 4, 2>> svd(cols);
    if (svd.singularValues()[1] < 1e-8)
        throw geometry_error(errc::immersion_failure, "jacobian rank below 2 at the parameter");
    return RealPlane2::from_frame(j1, j2);
}

// ====== E-function ======
//
// E(param, lambda) = det[J1, J2, g1, g2] / (|J1| |J2|) with columns in the
// direct coordinate order; g1, g2 are the unit real generators of the slope
// line.  Zero iff the slope line meets the tangent plane.

struct EValue {
    double value = 0.0;
    Vec2 gradient = Vec2::Zero();  // parameter-space gradient (k = 2)
};

namespace surface_detail {

inline Vec4 real_column(const Jet2& j, int param_index) {
    return Vec4(j.jac(0, param_index).real(), j.jac(0, param_index).imag(),
                j.jac(1, param_index).real(), j.jac(1, param_index).imag());
}

// derivative of tangent column m with respect to parameter q, from the
// four coordinate Hessians
inline Vec4 column_derivative(const Jet2& j, int m, int q) {
    return Vec4(j.hess[0](m, q), j.hess[1](m, q), j.hess[2](m, q), j.hess[3](m, q));
}

}  // namespace surface_detail

inline double e_function(const SurfacePatch& s, const Vec3& param, const Slope& lam) {
    Jet2 j = s.jet(param);
    Vec4 j1 = surface_detail::real_column(j, 0);
    Vec4 j2 = surface_detail::real_column(j, 1);
    double n1 = j1.norm(), n2 = j2.norm();
    if (n1 < 1e-8 || n2 < 1e-8)
        throw geometry_error(errc::immersion_failure, "degenerate jacobian column");
    Eigen::Matrix4d m;
    m.col(0) = j1;
    m.col(1) = j2;
    m.col(2) = lam.generator1();
    m.col(3) = lam.generator2();
    return m.determinant() / (n1 * n2);
}

// E together with its exact parameter gradient (product rule over columns).
inline EValue e_function_gradient(const SurfacePatch& s, const Vec3& param, const Slope& lam) {
    Jet2 j = s.jet(param);
    Vec4 j1 = surface_detail::real_column(j, 0);
    Vec4 j2 = surface_detail::real_column(j, 1);
    double n1 = j1.norm(), n2 = j2.norm();
    if (n1 < 1e-8 || n2 < 1e-8)
        throw geometry_error(errc::immersion_failure, "degenerate jacobian column");
    Eigen::Matrix4d m;
    m.col(0) = j1;
    m.col(1) = j2;
    m.col(2) = lam.generator1();
    m.col(3) = lam.generator2();
    double det = m.determinant();

    EValue out;
    out.value = det / (n1 * n2);
    for (int q = 0; q < 2; ++q) {
        Vec4 d1 = surface_detail::column_derivative(j, 0, q);
        Vec4 d2 = surface_detail::column_derivative(j, 1, q);
        Eigen::Matrix4d a = m, b = m;
        a.col(0) = d1;
        b.col(1) = d2;
        double ddet = a.determinant() + b.determinant();
        double dn = j1.dot(d1) / (n1 * n1) + j2.dot(d2) / (n2 * n2);
        out.gradient[q] = ddet / (n1 * n2) - out.value * dn;
    }
    return out;
}

// Slope-chart gradient (dE/d lambda1, dE/d lambda2) at a chart-finite slope.
// With unnormalized chart generators a = (1, 0, l1, l2), b = (0, 1, -l2, l1)
// the determinant Q(lambda) = det[J1, J2, a, b] satisfies
// E = Q / ((1 + |lambda|^2) |J1| |J2|), so the gradient is one column
// replacement per generator plus the quotient correction.
inline Vec2 e_function_slope_gradient(const SurfacePatch& s, const Vec3& param, const Slope& lam) {
    if (lam.is_infinite(1e-6))
        throw geometry_error(errc::domain_error, "slope gradient needs a chart-finite slope");
    cplx l = lam.chart();
    double l1 = l.real(), l2 = l.imag();
    double nl = 1.0 + std::norm(l);
    Jet2 j = s.jet(param);
    Vec4 j1 = surface_detail::real_column(j, 0);
    Vec4 j2 = surface_detail::real_column(j, 1);
    double n1 = j1.norm(), n2 = j2.norm();
    if (n1 < 1e-8 || n2 < 1e-8)
        throw geometry_error(errc::immersion_failure, "degenerate jacobian column");
    Eigen::Matrix4d m;
    m.col(0) = j1;
    m.col(1) = j2;
    m.col(2) = Vec4(1.0, 0.0, l1, l2);
    m.col(3) = Vec4(0.0, 1.0, -l2, l1);
    double e = m.determinant() / (nl * n1 * n2);

    Vec2 out;
    const Vec4 d3[2] = {Vec4(0, 0, 1, 0), Vec4(0, 0, 0, 1)};   // da/dl1, da/dl2
    const Vec4 d4[2] = {Vec4(0, 0, 0, 1), Vec4(0, 0, -1, 0)};  // db/dl1, db/dl2
    for (int q = 0; q < 2; ++q) {
        Eigen::Matrix4d a = m, b = m;
        a.col(2) = d3[q];
        b.col(3) = d4[q];
        double dq = a.determinant() + b.determinant();
        double lq = (q == 0) ? l1 : l2;
        out[q] = dq / (nl * n1 * n2) - 2.0 * lq * e / nl;
    }
    return out;
}

// Unit tangent vector v with R v = D_lambda intersect T_p S, available exactly
// when the slope is critical at the point.
inline Vec4 critical_direction(const SurfacePatch& s, const Vec3& param, const Slope& lam,
                               const Tolerances& tol = default_tols()) {
    Jet2 j = s.jet(param);
    Vec4 j1 = surface_detail::real_column(j, 0);
    Vec4 j2 = surface_detail::real_column(j, 1);
    Eigen::Matrix4d m;
    m.col(0) = j1.normalized();
    m.col(1) = j2.normalized();
    m.col(2) = lam.generator1();
    m.col(3) = lam.generator2();
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(m, Eigen::ComputeFullV);
    if (svd.singularValues()[3] > 100.0 * tol.critical)
        throw geometry_error(errc::not_critical, "slope is transverse at the parameter");
    Vec4 null = svd.matrixV().col(3);
    Vec4 v = null[0] * m.col(0) + null[1] * m.col(1);
    double n = v.norm();
    if (n < 1e-10)
        throw geometry_error(errc::not_critical, "critical direction collapsed");
    return v / n;
}

// ====== Critical curve tracing ======

struct TracedCurve {
    std::vector<Vec2> samples;  // parameter points
    Slope lambda = Slope(cplx(1, 0), cplx(0, 0));
    bool closed = false;
};

namespace surface_detail {

// Newton correction back to {E = 0} along the gradient direction.
inline bool correct_onto_curve(const SurfacePatch& s, Vec2& p, const Slope& lam,
                               const Tolerances& tol) {
    for (int it = 0; it < 12; ++it) {
        EValue e = e_function_gradient(s, Vec3(p[0], p[1], 0), lam);
        if (std::abs(e.value) < tol.critical) return true;
        double g2 = e.gradient.squaredNorm();
        if (g2 < 1e-16) return false;
        p -= e.value * e.gradient / g2;
    }
    return false;
}

}  // namespace surface_detail

// Detects a neighbourhood where E vanishes identically (e.g. totally real
// planes at real slopes); such loci are reported, never traced.
inline bool degenerate_locus(const SurfacePatch& s, const Vec3& param, const Slope& lam,
                             double radius = 1e-3, const Tolerances& tol = default_tols()) {
    static const double offsets[9][2] = {{0, 0}, {1, 0},   {-1, 0}, {0, 1},    {0, -1},
                                         {0.7, 0.7}, {0.7, -0.7}, {-0.7, 0.7}, {-0.7, -0.7}};
    for (const auto& o : offsets) {
        Vec3 q = param + Vec3(o[0] * radius, o[1] * radius, 0.0);
        if (std::abs(e_function(s, q, lam)) > 100.0 * tol.critical) return false;
    }
    return true;
}

inline TracedCurve trace_c_lambda(const SurfacePatch& s, const Slope& lam, const Vec2& seed,
                                  const Tolerances& tol = default_tols(),
                                  std::size_t max_steps = 20000) {
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "curve tracing needs a 2-parameter patch");
    Vec2 p = seed;
    if (!surface_detail::correct_onto_curve(s, p, lam, tol))
        throw geometry_error(errc::not_critical, "seed does not correct onto the curve");
    if (degenerate_locus(s, Vec3(p[0], p[1], 0), lam, 1e-3, tol))
        throw geometry_error(errc::degenerate_locus,
                             "the slope is critical on a whole neighbourhood");
    {
        EValue e0 = e_function_gradient(s, Vec3(p[0], p[1], 0), lam);
        if (e0.gradient.norm() < 1e-6)
            throw geometry_error(errc::singular_start, "curve gradient vanishes at the seed");
    }

    TracedCurve curve;
    curve.lambda = lam;

    auto tangent = [&](const Vec2& q) -> Vec2 {
        EValue e = e_function_gradient(s, Vec3(q[0], q[1], 0), lam);
        Vec2 t(-e.gradient[1], e.gradient[0]);
        double n = t.norm();
        if (n < 1e-10) throw geometry_error(errc::singular_start, "singular point on the curve");
        return t / n;
    };

    auto run_dir = [&](Vec2 start, Vec2 dir0, std::vector<Vec2>& out, bool& hit_boundary,
                       bool& closed) {
        Vec2 q = start;
        Vec2 dir = dir0;
        double arc = 0.0;
        hit_boundary = false;
        closed = false;
        for (std::size_t step = 0; step < max_steps; ++step) {
            double h = tol.step;
            Vec2 next;
            bool ok = false;
            for (int halve = 0; halve < 8; ++halve) {
                next = q + h * dir;
                Vec2 corrected = next;
                if (surface_detail::correct_onto_curve(s, corrected, lam, tol) &&
                    (corrected - q).norm() < 3.0 * h) {
                    next = corrected;
                    ok = true;
                    break;
                }
                h *= 0.5;
            }
            if (!ok) throw geometry_error(errc::trace_failure, "corrector failed to converge");
            if (!s.domain().contains(Vec3(next[0], next[1], 0))) {
                hit_boundary = true;
                return;
            }
            Vec2 t = tangent(next);
            if (t.dot(dir) < 0) t = -t;
            dir = t;
            arc += (next - q).norm();
            q = next;
            out.push_back(q);
            if (arc > 4.0 * tol.step && (q - start).norm() < std::max(tol.dedup, 0.6 * h)) {
                closed = true;
                return;
            }
        }
        throw geometry_error(errc::budget_exceeded, "curve exceeded the step budget");
    };

    Vec2 dir = tangent(p);
    std::vector<Vec2> forward, backward;
    bool hit_f = false, closed_f = false;
    run_dir(p, dir, forward, hit_f, closed_f);
    if (closed_f) {
        curve.samples.push_back(p);
        curve.samples.insert(curve.samples.end(), forward.begin(), forward.end());
        curve.closed = true;
        return curve;
    }
    bool hit_b = false, closed_b = false;
    run_dir(p, -dir, backward, hit_b, closed_b);
    std::reverse(backward.begin(), backward.end());
    curve.samples = std::move(backward);
    curve.samples.push_back(p);
    curve.samples.insert(curve.samples.end(), forward.begin(), forward.end());
    curve.closed = false;
    return curve;
}

// ====== Critical pairs ======

struct CriticalPair {
    Vec2c point = Vec2c::Zero();
    Slope lambda = Slope(cplx(1, 0), cplx(0, 0));
    bool exceptional = false;
    double e_value = 0.0;
    double de_value = 0.0;  // |dE(v)| normalized; the exceptionality margin
};

}  // namespace cpdual
