#pragma once

// Contact chart (C^2 x P^1, omega = dy - lambda dx) over the base plane:
// contact elements, the semi-legendrian defect, stratified lifts by base
// dimension, projection consistency checks, and the crease-section report
// for creased spheres.  Two affine charts cover the slope sphere; swapping
// exchanges x with y and inverts the slope, rescaling omega by -1/lambda, so
// every reported quantity is either chart-local and flagged or chart-free.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "exceptional.hpp"

namespace cpdual {

// ====== contact elements ======

// Point of the flag space: a base point z = (x, y) together with the slope
// of a pointed line.  The swapped element lives in the chart where the two
// coordinates trade places and the slope inverts.
struct ContactElement {
    Vec2c z = Vec2c::Zero();
    Slope lambda;

    ContactElement swapped() const {
        return ContactElement{Vec2c(z[1], z[0]), Slope(lambda.v(), lambda.u())};
    }
};

// omega = dy - lambda dx on a tangent triple (dx, dy, dlambda).  At an
// infinite slope the value is taken in the swapped chart, dx - (1/lambda) dy,
// which has the same kernel; the lambda component never enters.
inline cplx contact_form_eval(const ContactElement& w, const Vec3c& v) {
    if (w.lambda.is_infinite()) return v[0] - (w.lambda.u() / w.lambda.v()) * v[1];
    return v[1] - w.lambda.chart() * v[0];
}

// Same patch with the two complex coordinates exchanged; jets swap rows and
// the coordinate Hessian pairs.
inline SurfacePatch swap_coordinates(const SurfacePatch& s) {
    auto jet_fn = [s](const Vec3& p) {
        Jet2 j = s.jet(p);
        Jet2 o = j;
        o.value = Vec2c(j.value[1], j.value[0]);
        o.jac.row(0) = j.jac.row(1);
        o.jac.row(1) = j.jac.row(0);
        o.hess = {j.hess[2], j.hess[3], j.hess[0], j.hess[1]};
        return o;
    };
    return SurfacePatch::from_function(s.k(), jet_fn, s.domain(), s.name() + ":swapped");
}

// ====== tangent samples and the semi-legendrian defect ======

// One sampled point of a lifted set: the element, a tangent frame of triples
// (dx, dy, dlambda), and the chart the pair lives in.  When swapped is set,
// z, lambda, and the frame are all swapped-chart quantities.
struct LiftSample {
    Vec3 base_param = Vec3::Zero();
    ContactElement w;
    Eigen::Matrix<cplx, 3, Eigen::Dynamic> frame;
    bool swapped = false;
};

// Base point in the original coordinates regardless of the sample's chart.
inline Vec2c projected(const LiftSample& s) {
    return s.swapped ? Vec2c(s.w.z[1], s.w.z[0]) : s.w.z;
}

// Slope in the original chart regardless of the sample's chart.
inline Slope base_slope(const LiftSample& s) {
    return s.swapped ? Slope(s.w.lambda.v(), s.w.lambda.u()) : s.w.lambda;
}

namespace contact_detail {

inline Eigen::Matrix<double, 6, 1> real_triple(const Vec3c& v) {
    Eigen::Matrix<double, 6, 1> r;
    r << v[0].real(), v[0].imag(), v[1].real(), v[1].imag(), v[2].real(), v[2].imag();
    return r;
}

inline Vec3c complex_triple(const Eigen::Matrix<double, 6, 1>& r) {
    return Vec3c(cplx(r[0], r[1]), cplx(r[2], r[3]), cplx(r[4], r[5]));
}

// Orthonormal basis of the frame span over R^6; throws on a rank-deficient
// frame.
inline Eigen::MatrixXd orthonormal_frame(const LiftSample& s) {
    int d = static_cast<int>(s.frame.cols());
    Eigen::MatrixXd f(6, d);
    for (int c = 0; c < d; ++c) f.col(c) = real_triple(s.frame.col(c));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(f);
    Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
    if (diag.minCoeff() < 1e-10 * std::max(1.0, diag.maxCoeff()))
        throw geometry_error(errc::immersion_failure, "degenerate tangent frame");
    return qr.householderQ() * Eigen::MatrixXd::Identity(6, d);
}

// omega evaluated on the orthonormalized frame, stacked as a real 2 x d
// matrix (rows: real part, imaginary part).
inline Eigen::MatrixXd omega_matrix(const LiftSample& s) {
    Eigen::MatrixXd q = orthonormal_frame(s);
    int d = static_cast<int>(q.cols());
    Eigen::MatrixXd w(2, d);
    for (int c = 0; c < d; ++c) {
        cplx val = contact_form_eval(s.w, complex_triple(q.col(c)));
        w(0, c) = val.real();
        w(1, c) = val.imag();
    }
    return w;
}

}  // namespace contact_detail

// Rank deficiency of omega restricted to a tangent 3-frame, as the ratio of
// the second to the first singular value of the omega matrix over the
// orthonormalized frame.  Zero iff the contact plane meets the tangent space
// in dimension >= 2; the ratio is chart-invariant because a chart swap only
// rescales omega.
inline double semi_legendrian_defect(const LiftSample& s) {
    if (s.frame.cols() != 3)
        throw geometry_error(errc::domain_error, "semi-legendrian defect needs a 3-frame");
    Eigen::MatrixXd w = contact_detail::omega_matrix(s);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
    double s0 = svd.singularValues()[0];
    if (s0 < 1e-14) return 0.0;
    return svd.singularValues()[1] / s0;
}

// Largest |omega| over the orthonormalized frame; zero iff the whole tangent
// space lies in the contact plane.  The annihilation test for frames of any
// dimension, used for curve fibers and legendrian 2-frames.
inline double omega_annihilation(const LiftSample& s) {
    if (s.frame.cols() < 1)
        throw geometry_error(errc::domain_error, "empty tangent frame");
    Eigen::MatrixXd w = contact_detail::omega_matrix(s);
    double worst = 0.0;
    for (int c = 0; c < w.cols(); ++c)
        worst = std::max(worst, std::hypot(w(0, c), w(1, c)));
    return worst;
}

// ====== lifts ======

// Shape of the lift over a patch of base dimension k: a section of slopes
// for k = 3, the bundle of critical circles for k = 2, and the full slope
// sphere over each base point for k <= 1.
enum class LiftKind { Section, CircleBundle, FullFiber };

inline const char* lift_kind_name(LiftKind k) {
    switch (k) {
        case LiftKind::Section: return "section";
        case LiftKind::CircleBundle: return "circle-bundle";
        default: return "full-fiber";
    }
}

// Deterministic sample set of a lift with the per-sample exclusions that
// occurred while sweeping (complex tangents, stationary slope rows).
struct LiftSweep {
    struct Exclusion {
        Vec3 base = Vec3::Zero();
        double fiber = 0.0;
        errc code = errc::domain_error;
        std::string what;
    };
    std::vector<LiftSample> samples;
    std::vector<Exclusion> excluded;
};

namespace contact_detail {

// Normal to three columns in R^4 by Laplace cofactors; orthogonal to all
// three inputs for any sign convention.
inline Vec4 hodge_normal(const Vec4& a, const Vec4& b, const Vec4& c) {
    Vec4 n;
    double sign = 1.0;
    for (int i = 0; i < 4; ++i) {
        Eigen::Matrix3d m;
        int r = 0;
        for (int row = 0; row < 4; ++row) {
            if (row == i) continue;
            m(r, 0) = a[row];
            m(r, 1) = b[row];
            m(r, 2) = c[row];
            ++r;
        }
        n[i] = sign * m.determinant();
        sign = -sign;
    }
    return n;
}

// Slope sphere sample j of n: Fibonacci points on the unit sphere sent
// through the stereographic chart, as homogeneous pairs (1 - z, x + i y).
// Never exactly vertical or horizontal, spread over both charts.
inline Slope sphere_slope(int j, int n) {
    double golden = kPi * (3.0 - std::sqrt(5.0));
    double zc = 1.0 - (2.0 * j + 1.0) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - zc * zc));
    double th = golden * j;
    return Slope(cplx(1.0 - zc, 0.0), cplx(r * std::cos(th), r * std::sin(th)));
}

}  // namespace contact_detail

// Lift of a base patch into the flag space.  Samples carry exact tangent
// frames; the chart for each sample is picked so the slope stays bounded.
class LiftedPatch {
public:
    explicit LiftedPatch(SurfacePatch source, int fiber_samples = 64)
        : source_(std::move(source)),
          swapped_source_(swap_coordinates(source_)),
          fiber_samples_(fiber_samples) {
        kind_ = source_.k() == 3   ? LiftKind::Section
                : source_.k() == 2 ? LiftKind::CircleBundle
                                   : LiftKind::FullFiber;
    }

    LiftKind kind() const { return kind_; }
    const SurfacePatch& source() const { return source_; }
    int fiber_samples() const { return fiber_samples_; }

    // k = 3: the slope of the unique complex line inside the tangent
    // hyperplane, with its exact parameter derivatives from the jet Hessians.
    LiftSample section_sample(const Vec3& p) const {
        if (kind_ != LiftKind::Section)
            throw geometry_error(errc::domain_error, "section sample on a non-section lift");
        Jet2 j = source_.jet(p);
        Vec4 t[3];
        for (int c = 0; c < 3; ++c) t[c] = surface_detail::real_column(j, c);
        Vec4 nu = contact_detail::hodge_normal(t[0], t[1], t[2]);
        double scale = t[0].norm() * t[1].norm() * t[2].norm();
        if (nu.norm() < 1e-10 * std::max(1.0, scale))
            throw geometry_error(errc::immersion_failure, "tangent 3-frame is degenerate");

        Vec4 dnu[3];
        for (int q = 0; q < 3; ++q) {
            Vec4 d0 = surface_detail::column_derivative(j, 0, q);
            Vec4 d1 = surface_detail::column_derivative(j, 1, q);
            Vec4 d2 = surface_detail::column_derivative(j, 2, q);
            dnu[q] = contact_detail::hodge_normal(d0, t[1], t[2]) +
                     contact_detail::hodge_normal(t[0], d1, t[2]) +
                     contact_detail::hodge_normal(t[0], t[1], d2);
        }

        cplx nux(nu[0], nu[1]), nuy(nu[2], nu[3]);
        cplx u = -std::conj(nuy), v = std::conj(nux);
        LiftSample out;
        out.base_param = p;
        out.frame.resize(3, 3);
        out.swapped = std::abs(u) < std::abs(v);
        for (int q = 0; q < 3; ++q) {
            cplx dnux(dnu[q][0], dnu[q][1]), dnuy(dnu[q][2], dnu[q][3]);
            cplx du = -std::conj(dnuy), dv = std::conj(dnux);
            if (!out.swapped)
                out.frame.col(q) = Vec3c(j.jac(0, q), j.jac(1, q), (dv * u - v * du) / (u * u));
            else
                out.frame.col(q) = Vec3c(j.jac(1, q), j.jac(0, q), (du * v - u * dv) / (v * v));
        }
        out.w = out.swapped ? ContactElement{Vec2c(j.value[1], j.value[0]), Slope(v, u)}
                            : ContactElement{j.value, Slope(u, v)};
        return out;
    }

    // k = 2: point of the critical-circle bundle at the given intrinsic
    // angle of the fiber circle.
    LiftSample bundle_sample(const Vec3& p, double phi) const {
        Slope lam = critical_circle(tangent_plane(source_, p)).point_at(phi);
        return bundle_sample_at(p, lam);
    }

    // k = 2 at a prescribed fiber slope; the chart is picked by magnitude.
    LiftSample bundle_sample_at(const Vec3& p, const Slope& lam) const {
        return bundle_sample_in_chart(p, lam, std::abs(lam.v()) > std::abs(lam.u()));
    }

    // k = 2 with the chart forced, for cross-chart consistency checks.  The
    // tangent frame is the kernel of the derivative of the incidence
    // function over (parameters, slope chart).
    LiftSample bundle_sample_in_chart(const Vec3& p, const Slope& lam, bool swapped) const {
        if (kind_ != LiftKind::CircleBundle)
            throw geometry_error(errc::domain_error, "bundle sample on a non-bundle lift");
        const SurfacePatch& s = swapped ? swapped_source_ : source_;
        Slope chart_lam = swapped ? Slope(lam.v(), lam.u()) : lam;
        tangent_plane(s, p);  // complex-tangent gate
        if (chart_lam.is_infinite(1e-6))
            throw geometry_error(errc::domain_error, "slope outside the working chart");

        EValue ev = e_function_gradient(s, p, chart_lam);
        if (std::abs(ev.value) > 100.0 * default_tols().critical)
            throw geometry_error(errc::not_critical, "slope is not on the fiber circle");
        Vec2 gl = e_function_slope_gradient(s, p, chart_lam);
        Eigen::Matrix<double, 4, 1> row;
        row << ev.gradient[0], ev.gradient[1], gl[0], gl[1];
        if (row.norm() < 1e-8)
            throw geometry_error(errc::singular_start, "stationary incidence row");

        Eigen::HouseholderQR<Eigen::Matrix<double, 4, 1>> qr(row);
        Eigen::Matrix4d full = qr.householderQ();

        Jet2 j = s.jet(p);
        LiftSample out;
        out.base_param = p;
        out.swapped = swapped;
        out.w = ContactElement{j.value, chart_lam};
        out.frame.resize(3, 3);
        for (int c = 1; c < 4; ++c) {
            Vec4 kv = full.col(c);
            cplx dx = j.jac(0, 0) * kv[0] + j.jac(0, 1) * kv[1];
            cplx dy = j.jac(1, 0) * kv[0] + j.jac(1, 1) * kv[1];
            out.frame.col(c - 1) = Vec3c(dx, dy, cplx(kv[2], kv[3]));
        }
        return out;
    }

    // k <= 1: element of the full fiber at a prescribed slope.  The fiber
    // directions always lie in the contact plane.
    LiftSample fiber_sample(const Vec3& p, const Slope& lam) const {
        if (kind_ != LiftKind::FullFiber)
            throw geometry_error(errc::domain_error, "fiber sample on a non-fiber lift");
        Jet2 j = source_.jet(p);
        int k = source_.k();
        LiftSample out;
        out.base_param = p;
        out.swapped = std::abs(lam.v()) > std::abs(lam.u());
        out.w = out.swapped ? ContactElement{Vec2c(j.value[1], j.value[0]), Slope(lam.v(), lam.u())}
                            : ContactElement{j.value, lam};
        out.frame.resize(3, k + 2);
        for (int q = 0; q < k; ++q) {
            cplx dx = j.jac(0, q), dy = j.jac(1, q);
            out.frame.col(q) = out.swapped ? Vec3c(dy, dx, 0.0) : Vec3c(dx, dy, 0.0);
        }
        out.frame.col(k) = Vec3c(0.0, 0.0, cplx(1.0, 0.0));
        out.frame.col(k + 1) = Vec3c(0.0, 0.0, cplx(0.0, 1.0));
        return out;
    }

    // Deterministic sweep: a centered grid over the base parameters crossed
    // with the fiber sampling of the kind.  Per-sample failures are recorded
    // as exclusions, never silently dropped.
    LiftSweep sweep(int base_grid = 5) const {
        LiftSweep out;
        for (const Vec3& p : base_points(base_grid)) {
            switch (kind_) {
                case LiftKind::Section: {
                    try {
                        out.samples.push_back(section_sample(p));
                    } catch (const geometry_error& e) {
                        out.excluded.push_back({p, 0.0, e.code(), e.what()});
                    }
                    break;
                }
                case LiftKind::CircleBundle: {
                    try {
                        SphereCircle circle = critical_circle(tangent_plane(source_, p));
                        for (int f = 0; f < fiber_samples_; ++f) {
                            double phi = 2.0 * kPi * f / fiber_samples_;
                            try {
                                out.samples.push_back(bundle_sample_at(p, circle.point_at(phi)));
                            } catch (const geometry_error& e) {
                                out.excluded.push_back({p, phi, e.code(), e.what()});
                            }
                        }
                    } catch (const geometry_error& e) {
                        out.excluded.push_back({p, -1.0, e.code(), e.what()});
                    }
                    break;
                }
                case LiftKind::FullFiber: {
                    for (int f = 0; f < fiber_samples_; ++f) {
                        try {
                            out.samples.push_back(
                                fiber_sample(p, contact_detail::sphere_slope(f, fiber_samples_)));
                        } catch (const geometry_error& e) {
                            out.excluded.push_back(
                                {p, static_cast<double>(f), e.code(), e.what()});
                        }
                    }
                    break;
                }
            }
        }
        return out;
    }

    std::vector<Vec3> base_points(int grid) const {
        std::vector<Vec3> pts;
        int k = source_.k();
        if (k == 0) {
            pts.push_back(Vec3::Zero());
            return pts;
        }
        const Box& dom = source_.domain();
        std::vector<int> idx(k, 0);
        while (true) {
            Vec3 p = Vec3::Zero();
            for (int d = 0; d < k; ++d)
                p[d] = dom.lo[d] + (idx[d] + 0.5) / grid * (dom.hi[d] - dom.lo[d]);
            pts.push_back(p);
            int d = 0;
            while (d < k && ++idx[d] == grid) idx[d++] = 0;
            if (d == k) break;
        }
        return pts;
    }

private:
    SurfacePatch source_;
    SurfacePatch swapped_source_;
    int fiber_samples_;
    LiftKind kind_;
};

inline LiftedPatch lift(const SurfacePatch& s, int fiber_samples = 64) {
    return LiftedPatch(s, fiber_samples);
}

// ====== projection checks ======

// Sampled verification of the projection structure of a lift.  dp_rank is
// the constant rank of the base projection on tangent frames (a rank change
// across samples throws mixed_rank).  max_residual is the kind's incidence
// residual: slope match for sections, criticality of the slope for circle
// bundles, fiber annihilation for full fibers; it bounds how far any sample
// sits from the full lift of the projected base.  max_roundtrip is the
// distance between projected samples and the base patch.
struct ProjectionReport {
    LiftKind kind = LiftKind::FullFiber;
    int dp_rank = -1;
    int samples = 0;
    double max_defect = 0.0;
    double max_residual = 0.0;
    double max_roundtrip = 0.0;
    std::vector<LiftSweep::Exclusion> excluded;
};

// Sample-level worker: checks a prepared sample set against the source.
// Used directly by tests that need hand-built samples; lift users go through
// verify_projection_lemmas below.
inline ProjectionReport verify_projection_samples(const SurfacePatch& source, LiftKind kind,
                                                  const std::vector<LiftSample>& samples) {
    ProjectionReport rep;
    rep.kind = kind;

    for (const LiftSample& s : samples) {
        Eigen::MatrixXd q;
        try {
            q = contact_detail::orthonormal_frame(s);
        } catch (const geometry_error& e) {
            rep.excluded.push_back({s.base_param, 0.0, e.code(), e.what()});
            continue;
        }
        ++rep.samples;
        Eigen::MatrixXd zpart = q.topRows(4);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(zpart);
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > 1e-6) ++rank;
        if (rep.dp_rank < 0) rep.dp_rank = rank;
        else if (rank != rep.dp_rank)
            throw geometry_error(errc::mixed_rank, "projection rank changes across samples");

        double defect = s.frame.cols() == 3 ? semi_legendrian_defect(s) : omega_annihilation(s);
        rep.max_defect = std::max(rep.max_defect, defect);

        double residual = 0.0;
        switch (kind) {
            case LiftKind::Section: {
                Vec4 a = contact_detail::real_triple(s.frame.col(0)).head<4>();
                Vec4 b = contact_detail::real_triple(s.frame.col(1)).head<4>();
                Vec4 c = contact_detail::real_triple(s.frame.col(2)).head<4>();
                Vec4 nu = contact_detail::hodge_normal(a, b, c);
                cplx nux(nu[0], nu[1]), nuy(nu[2], nu[3]);
                Slope recomputed(-std::conj(nuy), std::conj(nux));
                residual = recomputed.proj_distance(s.w.lambda);
                break;
            }
            case LiftKind::CircleBundle:
                residual = std::abs(e_function(source, s.base_param, base_slope(s)));
                break;
            case LiftKind::FullFiber: {
                for (int c = source.k(); c < s.frame.cols(); ++c)
                    residual = std::max(residual,
                                        std::abs(contact_form_eval(s.w, s.frame.col(c))));
                break;
            }
        }
        rep.max_residual = std::max(rep.max_residual, residual);
        rep.max_roundtrip = std::max(
            rep.max_roundtrip, (projected(s) - source.value(s.base_param)).norm());
    }
    return rep;
}

inline ProjectionReport verify_projection_lemmas(const LiftedPatch& m, int base_grid = 5) {
    LiftSweep sw = m.sweep(base_grid);
    ProjectionReport rep = verify_projection_samples(m.source(), m.kind(), sw.samples);
    rep.excluded.insert(rep.excluded.end(), sw.excluded.begin(), sw.excluded.end());
    return rep;
}

// ====== legendrian curves ======

// 1-jet of a parametrized patch in the contact chart: value (x, y, lambda)
// and the derivative columns for the first two parameters.
struct ContactJet {
    Vec3c value = Vec3c::Zero();
    Eigen::Matrix<cplx, 3, 3> jac = Eigen::Matrix<cplx, 3, 3>::Zero();
};

// Verdict for a dim-2 patch in the contact chart: it is a holomorphic
// legendrian curve iff the tangent planes are complex lines and omega
// annihilates them.  residual is the larger of the two failures.
struct LegendrianReport {
    double omega_residual = 0.0;
    double linearity_residual = 0.0;
    double residual = 0.0;
    bool legendrian = false;
    int samples = 0;
};

inline LegendrianReport legendrian_curve_test(const std::function<ContactJet(const Vec3&)>& fn,
                                              const Box& domain, int grid = 7) {
    LegendrianReport rep;
    for (int i = 0; i < grid; ++i) {
        for (int jj = 0; jj < grid; ++jj) {
            Vec3 p(domain.lo[0] + (i + 0.5) / grid * (domain.hi[0] - domain.lo[0]),
                   domain.lo[1] + (jj + 0.5) / grid * (domain.hi[1] - domain.lo[1]), 0.0);
            ContactJet cj = fn(p);
            LiftSample s;
            s.base_param = p;
            s.w = ContactElement{Vec2c(cj.value[0], cj.value[1]), Slope::from_chart(cj.value[2])};
            s.frame.resize(3, 2);
            s.frame.col(0) = cj.jac.col(0);
            s.frame.col(1) = cj.jac.col(1);

            Eigen::MatrixXd q = contact_detail::orthonormal_frame(s);
            for (int c = 0; c < 2; ++c) {
                Vec3c qc = contact_detail::complex_triple(q.col(c));
                rep.omega_residual =
                    std::max(rep.omega_residual, std::abs(contact_form_eval(s.w, qc)));
                Eigen::Matrix<double, 6, 1> rot =
                    contact_detail::real_triple(Vec3c(cplx(0, 1) * qc[0], cplx(0, 1) * qc[1],
                                                      cplx(0, 1) * qc[2]));
                Eigen::Matrix<double, 6, 1> rem = rot - q * (q.transpose() * rot);
                rep.linearity_residual = std::max(rep.linearity_residual, rem.norm());
            }
            ++rep.samples;
        }
    }
    rep.residual = std::max(rep.omega_residual, rep.linearity_residual);
    rep.legendrian = rep.residual < 1e-10;
    return rep;
}

// ====== creased spheres ======

// Cap of the creased sphere of radius R whose centers sit at y2 = -side * a:
// the hypersurface {|x|^2 + (y2 + side * a)^2 = R^2} parametrized by
// (angle, y1, y2), with y2 on the side of the crease.  y1 runs free: the
// figure is a hypersurface of rotation times a line.
inline SurfacePatch make_lens_cap(double R, double a, int side) {
    if (!(R > 0.0) || !(a > 0.0) || a >= R)
        throw geometry_error(errc::domain_error, "cap needs 0 < a < R");
    double span = 0.2 * R;
    Box dom;
    dom.k = 3;
    dom.lo = Vec3(0.0, -0.5, side > 0 ? 0.0 : -span);
    dom.hi = Vec3(2.0 * kPi, 0.5, side > 0 ? span : 0.0);
    double off = side > 0 ? a : -a;
    auto fn = [R, off](const Vec3& p) {
        JetC th = JetC::variable(cplx(p[0], 0.0), 0);
        JetC t = JetC::variable(cplx(p[1], 0.0), 1);
        JetC w = JetC::variable(cplx(p[2], 0.0), 2);
        JetC shifted = w + JetC(cplx(off, 0.0));
        JetC rad = sqrt(JetC(cplx(R * R, 0.0)) - shifted * shifted);
        JetC i(cplx(0.0, 1.0));
        JetC x = rad * (cos(th) + i * sin(th));
        JetC y = t + i * w;
        return make_jet2(x, y, 3);
    };
    return SurfacePatch::from_function(3, fn, dom,
                                       side > 0 ? "lens-cap-upper" : "lens-cap-lower");
}

// The crease stratum {|x| = rho, y2 = 0}, rho = sqrt(R^2 - a^2): the surface
// where the two caps meet at an angle.
inline SurfacePatch make_lens_crease(double R, double a) {
    if (!(R > 0.0) || !(a > 0.0) || a >= R)
        throw geometry_error(errc::domain_error, "crease needs 0 < a < R");
    double rho = std::sqrt(R * R - a * a);
    Box dom;
    dom.k = 2;
    dom.lo = Vec3(0.0, -0.5, 0.0);
    dom.hi = Vec3(2.0 * kPi, 0.5, 0.0);
    auto fn = [rho](const Vec3& p) {
        JetC th = JetC::variable(cplx(p[0], 0.0), 0);
        JetC t = JetC::variable(cplx(p[1], 0.0), 1);
        JetC i(cplx(0.0, 1.0));
        JetC x = JetC(cplx(rho, 0.0)) * (cos(th) + i * sin(th));
        return make_jet2(x, t, 2);
    };
    return SurfacePatch::from_function(2, fn, dom, "lens-crease");
}

// Behaviour of the cap lifts along the crease: the limit slopes from the two
// sides, their agreement with the closed-form section -/+ i (rho / a)
// exp(-i angle), their membership in the crease stratum's critical circles,
// the chordal gap between the two sections, the tangent-convergence defect
// of the stratified pair, and the tail of approach sequences shrinking into
// the crease.
struct CreaseSectionReport {
    double max_slope_residual = 0.0;
    double max_circle_residual = 0.0;
    double min_separation = 1e300;
    double max_condition_c = 0.0;
    double max_sequence_tail = 0.0;
    int samples = 0;
};

inline CreaseSectionReport crease_section_report(double R = 1.0, double a = 0.6,
                                                 int crease_samples = 12,
                                                 const Tolerances& tol = default_tols()) {
    CreaseSectionReport rep;
    double rho = std::sqrt(R * R - a * a);
    SurfacePatch caps[2] = {make_lens_cap(R, a, +1), make_lens_cap(R, a, -1)};
    SurfacePatch crease = make_lens_crease(R, a);
    LiftedPatch lifts[2] = {LiftedPatch(caps[0]), LiftedPatch(caps[1])};

    for (int i = 0; i < crease_samples; ++i) {
        double th = 2.0 * kPi * (i + 0.3) / crease_samples;
        double t = -0.4 + 0.8 * i / std::max(1, crease_samples - 1);
        Vec3 edge(th, t, 0.0);
        SphereCircle circle = critical_circle(tangent_plane(crease, Vec3(th, t, 0.0)));

        Slope measured[2];
        for (int side = 0; side < 2; ++side) {
            double sgn = side == 0 ? -1.0 : 1.0;
            Slope pred = Slope::from_chart(cplx(0.0, sgn * rho / a) *
                                           std::exp(cplx(0.0, -th)));
            measured[side] = base_slope(lifts[side].section_sample(edge));
            rep.max_slope_residual =
                std::max(rep.max_slope_residual, measured[side].proj_distance(pred));
            rep.max_circle_residual =
                std::max(rep.max_circle_residual, std::abs(circle.eval(measured[side])));

            ApproachSequence seq;
            seq.limit = Vec3(th, t, 0.0);
            for (int n = 4; n <= 20; ++n)
                seq.params.push_back(Vec3(th, t, sgn * -1.0 * std::pow(0.5, n)));
            rep.max_condition_c = std::max(
                rep.max_condition_c, condition_c_defect(crease, caps[side], seq, tol));

            for (int n = 23; n <= 40; ++n) {
                Vec3 inside(th, t, sgn * -1.0 * std::pow(0.5, n));
                Slope along = base_slope(lifts[side].section_sample(inside));
                rep.max_sequence_tail =
                    std::max(rep.max_sequence_tail, along.proj_distance(pred));
            }
        }
        rep.min_separation =
            std::min(rep.min_separation, measured[0].proj_distance(measured[1]));
        ++rep.samples;
    }
    return rep;
}

}  // namespace cpdual
