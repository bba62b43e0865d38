#pragma once

// Oriented real 2-planes in C^2, complex line slopes, the holomorphic
// (Wirtinger) angle, and the circle of non-transverse slopes attached to a
// plane.  Everything here is exact linear algebra on 4x4 / 2x2 problems.

#include "cpdual/core.hpp"

#include <optional>

namespace cpdual {

// ====== Slope ======
//
// Direction of a complex line through the origin, kept as a unit homogeneous
// pair (u, v); the affine slope is v/u (lines {y = (v/u) x}), u = 0 is the
// vertical line {x = 0}.  All comparisons are projective.

class Slope {
public:
    Slope() : u_(1.0), v_(0.0) {}

    Slope(cplx u, cplx v) : u_(u), v_(v) {
        double n = std::sqrt(std::norm(u_) + std::norm(v_));
        if (n < 1e-300) throw geometry_error(errc::domain_error, "zero homogeneous slope");
        u_ /= n;
        v_ /= n;
    }

    static Slope from_chart(cplx lambda) { return Slope(1.0, lambda); }
    static Slope infinity() { return Slope(0.0, 1.0); }

    cplx u() const { return u_; }
    cplx v() const { return v_; }

    bool is_infinite(double tol = 1e-12) const { return std::abs(u_) < tol; }

    // Affine slope; +/-inf magnitude when the line is vertical.
    cplx chart() const { return v_ / u_; }

    // |u1 v2 - u2 v1| for unit pairs: the chordal distance on P^1, in [0, 1].
    double proj_distance(const Slope& o) const { return std::abs(u_ * o.v_ - v_ * o.u_); }

    // Real span of the line direction: t = 1 and t = i applied to (u, v).
    Vec4 generator1() const { return to_real(Vec2c(u_, v_)); }
    Vec4 generator2() const { return to_real(Vec2c(cplx(0, 1) * u_, cplx(0, 1) * v_)); }

private:
    cplx u_, v_;
};

// ====== RealPlane2 ======
//
// A 2-plane P in R^4 carried in two synchronized forms: an orthonormal frame
// (t1, t2) spanning P, and unit covectors (f1, f2) with P = ker f1 ^ ker f2.
// Frames are oriented; covector input is unoriented and gets canonicalized.

class RealPlane2 {
public:
    // Frame input fixes the orientation (t1 ^ t2).
    static RealPlane2 from_frame(const Vec4& a, const Vec4& b) {
        RealPlane2 p;
        p.set_frame(a, b);
        p.covectors_from_frame();
        return p;
    }

    // Covector input is unoriented; the stored frame is flipped if needed so
    // the holomorphic angle lands in [0, pi/2], and the flip is recorded.
    static RealPlane2 from_covectors(const Vec4& f1, const Vec4& f2) {
        RealPlane2 p;
        p.set_covectors(f1, f2);
        p.frame_from_covectors();
        double c = j_mul(p.t1_).dot(p.t2_);
        if (c < 0.0) {
            p.t2_ = -p.t2_;
            p.flipped_ = true;
        }
        return p;
    }

    const Vec4& t1() const { return t1_; }
    const Vec4& t2() const { return t2_; }
    const Vec4& f1() const { return f1_; }
    const Vec4& f2() const { return f2_; }
    bool orientation_flipped() const { return flipped_; }

    bool contains(const Vec4& v, double tol = 1e-9) const {
        return std::abs(f1_.dot(v)) < tol && std::abs(f2_.dot(v)) < tol;
    }

private:
    RealPlane2() = default;

    void set_frame(const Vec4& a, const Vec4& b) {
        t1_ = a;
        double na = t1_.norm();
        if (na < 1e-12) throw geometry_error(errc::domain_error, "degenerate frame vector");
        t1_ /= na;
        t2_ = b - b.dot(t1_) * t1_;
        double nb = t2_.norm();
        if (nb < 1e-12) throw geometry_error(errc::domain_error, "frame vectors are parallel");
        t2_ /= nb;
    }

    void set_covectors(const Vec4& f1, const Vec4& f2) {
        f1_ = f1;
        double n1 = f1_.norm();
        if (n1 < 1e-12) throw geometry_error(errc::domain_error, "degenerate covector");
        f1_ /= n1;
        f2_ = f2 - f2.dot(f1_) * f1_;
        double n2 = f2_.norm();
        if (n2 < 1e-12) throw geometry_error(errc::domain_error, "covectors are parallel");
        f2_ /= n2;
    }

    // Null space of [f1; f2] via full SVD; right singular vectors 3, 4.
    void frame_from_covectors() {
        Eigen::Matrix<double, 2, 4> F;
        F.row(0) = f1_.transpose();
        F.row(1) = f2_.transpose();
        Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(F, Eigen::ComputeFullV);
        t1_ = svd.matrixV().col(2);
        t2_ = svd.matrixV().col(3);
    }

    void covectors_from_frame() {
        Eigen::Matrix<double, 2, 4> T;
        T.row(0) = t1_.transpose();
        T.row(1) = t2_.transpose();
        Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(T, Eigen::ComputeFullV);
        f1_ = svd.matrixV().col(2);
        f2_ = svd.matrixV().col(3);
    }

    Vec4 t1_, t2_, f1_, f2_;
    bool flipped_ = false;
};

// ====== Wirtinger angle ======
//
// theta in [0, pi] with J t1 = cos(theta) t2 + sin(theta) n, n normal to the
// plane.  0 = complex line, pi/2 = totally real, pi = complex line with the
// reversed orientation.  Independent of the oriented orthonormal frame.

inline double wirtinger_angle(const RealPlane2& p) {
    double c = j_mul(p.t1()).dot(p.t2());
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

// ====== SphereCircle ======
//
// Hermitian 2x2 form H = [[A, B], [conj B, D]] on homogeneous slope pairs;
// value(u, v) = A|u|^2 + 2 Re(conj(B) conj(u) v) + D|v|^2, and the zero set
// {value = 0} on P^1 is the circle of non-transverse slopes.  det = AD - |B|^2
// is < 0 for a genuine circle and ~ 0 for a point circle (complex tangent).
// Stored normalized: Frobenius norm 1, sign fixed by A >= 0, ties broken by
// the first nonzero of (Re B, Im B, D) positive.

class SphereCircle {
public:
    SphereCircle(double A, cplx B, double D) : A_(A), B_(B), D_(D) { normalize(); }

    double A() const { return A_; }
    cplx B() const { return B_; }
    double D() const { return D_; }

    double det() const { return A_ * D_ - std::norm(B_); }

    // Frobenius norm of the 2x2 Hermitian matrix; 1 after normalization.
    double frob() const { return std::sqrt(A_ * A_ + 2.0 * std::norm(B_) + D_ * D_); }

    double eval(const Slope& s) const {
        cplx u = s.u(), v = s.v();
        return A_ * std::norm(u) + 2.0 * std::real(std::conj(B_) * std::conj(u) * v) +
               D_ * std::norm(v);
    }

    double eval_chart(cplx lambda) const {
        return A_ + 2.0 * std::real(std::conj(B_) * lambda) + D_ * std::norm(lambda);
    }

    Mat2c matrix() const {
        Mat2c m;
        m << cplx(A_, 0), std::conj(B_), B_, cplx(D_, 0);
        return m;
    }

    static SphereCircle from_matrix(const Mat2c& m) {
        return SphereCircle(m(0, 0).real(), m(1, 0), m(1, 1).real());
    }

    // Projective distance between the normalized forms (min over sign).
    double distance(const SphereCircle& o) const {
        double dplus = std::sqrt((A_ - o.A_) * (A_ - o.A_) + 2.0 * std::norm(B_ - o.B_) +
                                 (D_ - o.D_) * (D_ - o.D_));
        double dminus = std::sqrt((A_ + o.A_) * (A_ + o.A_) + 2.0 * std::norm(B_ + o.B_) +
                                  (D_ + o.D_) * (D_ + o.D_));
        return std::min(dplus, dminus);
    }

    // A genuine circle has two eigenvalues of opposite sign.
    bool is_point_circle(double tol = 1e-12) const { return det() > -tol; }

    // Parametrization by the intrinsic angle: diagonalize H = V diag(d+, d-) V*
    // and sweep w(phi) = V (sqrt(-d-) e^{i phi}, sqrt(d+)).  Uniform phi is the
    // Moebius-normalized uniform sampling of the circle.
    Slope point_at(double phi) const {
        Eigen::SelfAdjointEigenSolver<Mat2c> es(matrix());
        double dlo = es.eigenvalues()[0], dhi = es.eigenvalues()[1];
        if (!(dlo < 0.0 && dhi > 0.0))
            throw geometry_error(errc::complex_tangent, "degenerate slope circle");
        Vec2c w = std::sqrt(dhi) * cplx(std::cos(phi), std::sin(phi)) * es.eigenvectors().col(0) +
                  std::sqrt(-dlo) * es.eigenvectors().col(1);
        return Slope(w[0], w[1]);
    }

private:
    void normalize() {
        double n = frob();
        if (n < 1e-300) throw geometry_error(errc::domain_error, "zero Hermitian form");
        A_ /= n;
        B_ /= n;
        D_ /= n;
        double lead = A_;
        if (std::abs(lead) < 1e-15) lead = B_.real();
        if (std::abs(lead) < 1e-15) lead = B_.imag();
        if (std::abs(lead) < 1e-15) lead = D_;
        if (lead < 0.0) {
            A_ = -A_;
            B_ = -B_;
            D_ = -D_;
        }
    }

    double A_;
    cplx B_;
    double D_;
};

// ====== Critical circle ======
//
// For P = {f1 = 0, f2 = 0}, f_i = a_i x1 + b_i x2 + c_i y1 + d_i y2, restrict
// (f1, f2) to the line of slope lambda with real generators g1 = re(w),
// g2 = re(iw), w = (1, lambda); the line is non-transverse iff the 2x2
// restriction is singular:
//   0 = det [f_i(g_j)]
//     = (a1 b2 - a2 b1) + l1 (a1 d2 - a2 d1 - b1 c2 + b2 c1)
//                       - l2 (b1 d2 - b2 d1 + a1 c2 - a2 c1)
//                       + |lambda|^2 (c1 d2 - c2 d1),
// which is the Hermitian form A = c0, B = (c1 - i c2)/2, D = c3.  The same
// coefficients fall out of the 4-form (df1 ^ df2) ^ (-1/2i)(dy - lambda dx) ^
// conj(dy - lambda dx); both routes were checked numerically against each
// other and against brute-force determinants.

inline SphereCircle critical_circle(const RealPlane2& p) {
    const Vec4& f = p.f1();
    const Vec4& g = p.f2();
    double a1 = f[0], b1 = f[1], c1 = f[2], d1 = f[3];
    double a2 = g[0], b2 = g[1], c2 = g[2], d2 = g[3];
    double k0 = a1 * b2 - a2 * b1;
    double k1 = a1 * d2 - a2 * d1 - (b1 * c2 - b2 * c1);
    double k2 = b1 * d2 - b2 * d1 + a1 * c2 - a2 * c1;
    double k3 = c1 * d2 - c2 * d1;
    return SphereCircle(k0, cplx(0.5 * k1, -0.5 * k2), k3);
}

struct TransversalityResult {
    bool transverse;
    double margin;  // |normalized form value| at the slope
};

inline TransversalityResult is_transverse(const RealPlane2& p, const Slope& s,
                                          const Tolerances& tol = default_tols()) {
    double value = critical_circle(p).eval(s);
    return {std::abs(value) > tol.transverse, std::abs(value)};
}

// ====== Moebius transport ======
//
// A C-linear unitary U maps line directions w to Uw; the slope circle of the
// image plane is the transported form U H U*.

inline SphereCircle mobius_apply(const SphereCircle& c, const Mat2c& u) {
    return SphereCircle::from_matrix(u * c.matrix() * u.adjoint());
}

inline Slope slope_apply(const Slope& s, const Mat2c& u) {
    Vec2c w = u * Vec2c(s.u(), s.v());
    return Slope(w[0], w[1]);
}

inline Vec4 apply_unitary(const Mat2c& u, const Vec4& v) { return to_real(u * to_complex(v)); }

inline RealPlane2 plane_apply(const RealPlane2& p, const Mat2c& u) {
    return RealPlane2::from_frame(apply_unitary(u, p.t1()), apply_unitary(u, p.t2()));
}

// ====== Normal form ======
//
// Unitary U with U(P) = {y2 = 0, cos(theta) y1 + sin(theta) x2 = 0}, the
// model plane spanned by dx1 and cos(theta) dx2 - sin(theta) dy1.  Built from
// t1 and the unit vector m in the C-orthogonal complement of C t1 fixed by
// t2 = cos(theta) J t1 - sin(theta) m.  Fails on (anti)complex planes.

struct NormalForm {
    Mat2c unitary;
    double theta;
};

inline NormalForm normal_form(const RealPlane2& p, const Tolerances& tol = default_tols()) {
    double theta = wirtinger_angle(p);
    double s = std::sin(theta);
    if (s < tol.angle)
        throw geometry_error(errc::complex_tangent, "plane is a complex line; no normal form");
    Vec4 m = -(p.t2() - std::cos(theta) * j_mul(p.t1())) / s;
    Vec2c tau = to_complex(p.t1());
    Vec2c mu = to_complex(m);
    // Columns (tau, mu) are C-orthonormal; U is the adjoint of that basis.
    Mat2c basis;
    basis.col(0) = tau;
    basis.col(1) = mu;
    NormalForm nf;
    nf.unitary = basis.adjoint();
    nf.theta = theta;
    return nf;
}

// The model plane of angle theta and its slope circle cos|l|^2 = sin l2,
// through lambda = 0 and lambda = i tan(theta).
inline RealPlane2 model_plane(double theta) {
    Vec4 f1(0, 0, 0, 1);
    Vec4 f2(0, std::sin(theta), std::cos(theta), 0);
    return RealPlane2::from_covectors(f1, f2);
}

}  // namespace cpdual
