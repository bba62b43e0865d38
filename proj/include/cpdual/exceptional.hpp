#pragma once

// Exceptional critical pairs: a critical slope at a point is exceptional when
// the critical curve is tangent to the line foliation of that slope.  Four
// equivalent characterizations are computed by independent routes, each with
// a dimensionless margin:
//   (1) curvature of the surface curve cut in the critical direction stays in
//       the complex line,
//   (2) the directional derivative of the E-function in the critical
//       direction vanishes,
//   (3) the line intercept is stationary along the critical curve,
//   (4) the slope is a first-order fixed point of the moving circle family.
// The header also hosts the whole-surface classifier and the tangent-fitting
// defect for stratified limits.

#include "core.hpp"
#include "surfaces.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cpdual {

// ====== Four-way exceptionality test ======

struct ExceptionalReport {
    std::array<bool, 4> condition{};
    std::array<double, 4> margin{};
    Vec4 direction = Vec4::Zero();  // unit v with R v + R Jv = D_lambda cap T S
    double e_value = 0.0;
    double grad_norm = 0.0;         // parameter-space |grad E|; ~0 on degenerate loci
    bool all() const { return condition[0] && condition[1] && condition[2] && condition[3]; }
};

namespace exc_detail {

// distance from w to the real 2-plane spanned by the complex line of z
inline double line_distance(const Vec4& w, const Vec2c& z) {
    Vec4 g1 = to_real(z).normalized();
    Vec4 g2 = to_real(cplx(0, 1) * z).normalized();
    Vec4 r = w - g1.dot(w) * g1 - g2.dot(w) * g2;
    return r.norm();
}

}  // namespace exc_detail

inline ExceptionalReport exceptional_tests(const SurfacePatch& s, const Vec3& param,
                                           const Slope& lam,
                                           const Tolerances& tol = default_tols()) {
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "exceptional tests need a 2-parameter patch");
    RealPlane2 tp = tangent_plane(s, param);
    double theta = wirtinger_angle(tp);
    if (theta < tol.angle || theta > kPi - tol.angle)
        throw geometry_error(errc::complex_tangent, "tangent plane is a complex line");
    double e0 = e_function(s, param, lam);
    if (std::abs(e0) > 100.0 * tol.critical)
        throw geometry_error(errc::not_critical, "slope is not critical at the point");

    Jet2 j = s.jet(param);
    Vec4 v = critical_direction(s, param, lam, tol);

    // parameter direction w with (chart jacobian) w = v
    Eigen::Matrix<double, 4, 3> jr = s.real_jacobian(j);
    Eigen::Matrix<double, 4, 2> jc = jr.leftCols<2>();
    Vec2 w = jc.colPivHouseholderQr().solve(v);

    ExceptionalReport rep;
    rep.direction = v;
    rep.e_value = e0;

    // (1) curvature of c(t) = chart(param + t w): k = c''/2 componentwise from
    // the Hessians; test distance of k to the complex line of v
    Vec2c vz = to_complex(v);
    Vec4 acc;
    for (int c = 0; c < 4; ++c) acc[c] = 0.5 * w.dot(j.hess[c].topLeftCorner<2, 2>() * w);
    rep.margin[0] = exc_detail::line_distance(acc, vz) / (1.0 + acc.norm());

    // (2) normalized directional derivative of E along w
    EValue ev = e_function_gradient(s, param, lam);
    double gn = ev.gradient.norm();
    double wn = w.norm();
    rep.grad_norm = gn;
    rep.margin[1] = gn < 1e-10 ? 0.0 : std::abs(ev.gradient.dot(w)) / (gn * wn);

    // (3) intercept derivative along the critical curve: singular curves pass
    // by convention, regular ones use the curve tangent pushed to C^2
    if (gn < 1e-10) {
        rep.margin[2] = 0.0;
    } else {
        Vec2 tau(-ev.gradient[1], ev.gradient[0]);
        tau /= tau.norm();
        Vec4 cdot = jc * tau;
        Vec2c cz = to_complex(cdot);
        // intercept of u y = v x + mu along the curve: mu' = u y' - v x'
        cplx mup = lam.u() * cz[1] - lam.v() * cz[0];
        rep.margin[2] = std::abs(mup) / cdot.norm();
    }

    // (4) first-order fixity of the slope in the moving circle family along
    // c(t); central difference on the sign-aligned normalized circle value
    {
        double h = 1e-5;
        Vec2 wh = w / wn;
        SphereCircle base = critical_circle(tp);
        auto value_at = [&](double t) {
            Vec3 q = param + Vec3(t * wh[0], t * wh[1], 0.0);
            RealPlane2 tq = tangent_plane(s, q);
            SphereCircle c = critical_circle(tq);
            Mat2c mb = base.matrix(), mc = c.matrix();
            double sign = ((mb.adjoint() * mc).trace().real() >= 0.0) ? 1.0 : -1.0;
            return sign * c.eval(lam);
        };
        rep.margin[3] = std::abs((value_at(h) - value_at(-h)) / (2.0 * h));
    }

    for (int i = 0; i < 4; ++i) rep.condition[i] = rep.margin[i] < tol.exceptional;
    return rep;
}

inline CriticalPair make_critical_pair(const SurfacePatch& s, const Vec3& param, const Slope& lam,
                                       const Tolerances& tol = default_tols()) {
    ExceptionalReport rep = exceptional_tests(s, param, lam, tol);
    CriticalPair pair;
    pair.point = s.value(param);
    pair.lambda = lam;
    pair.e_value = rep.e_value;
    pair.de_value = rep.margin[1];
    pair.exceptional = pair.de_value < tol.exceptional;
    return pair;
}

// ====== Whole-surface classification ======
//
// Priority cascade over a sampled grid:
//   ComplexCurve      tangent plane complex everywhere;
//   RealAffinePlane   constant critical circle and vanishing second
//                     fundamental form (every critical pair exceptional);
//   PencilProduct     two slopes critical at every sample whose leaf families
//                     both curve inside their lines: the two line families
//                     are parallel pencils, centers on the infinity line;
//   LeviFlatFamily    a regular exceptional slope at every probe point (one
//                     family of leaves inside complex lines, slope varying);
//   Generic           a confident non-exceptional critical pair (witness).
// A globally critical slope whose leaves are straight is the affine-direction
// degeneracy: it supports no product structure, so it never promotes a patch
// to PencilProduct (only curved families count).

enum class SurfaceClass {
    ComplexCurve,
    RealAffinePlane,
    PencilProduct,
    LeviFlatFamily,
    Generic,
};

inline const char* surface_class_name(SurfaceClass c) {
    switch (c) {
        case SurfaceClass::ComplexCurve: return "ComplexCurve";
        case SurfaceClass::RealAffinePlane: return "RealAffinePlane";
        case SurfaceClass::PencilProduct: return "PencilProduct";
        case SurfaceClass::LeviFlatFamily: return "LeviFlatFamily";
        case SurfaceClass::Generic: return "Generic";
    }
    return "?";
}

struct ClassifyEvidence {
    SurfaceClass kind = SurfaceClass::Generic;
    std::optional<CriticalPair> witness;  // Generic: a non-exceptional pair
    std::vector<Vec3c> pencil_centers;    // PencilProduct: homogeneous centers
    int exceptional_families = 0;         // curved line families detected
    std::string detail;
};

namespace exc_detail {

// projective line through the affine point z with direction slope (u, v),
// as a homogeneous covector L with L . (x, y, 1) = 0
inline Vec3c line_through(const Vec2c& z, const Slope& lam) {
    cplx u = lam.u(), v = lam.v();
    Vec3c line(v, -u, u * z[1] - v * z[0]);
    return line / line.norm();
}

// golden-section minimization of fn on [lo, hi]
inline double refine_minimum(const std::function<double(double)>& fn, double lo, double hi,
                             int iters) {
    const double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = fn(c), fd = fn(d);
    for (int i = 0; i < iters; ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = fn(d);
        }
    }
    return fc <= fd ? c : d;
}

// indices j with g[j] a strict-ish local minimum below cap, on a circular grid
inline std::vector<int> circular_minima(const std::vector<double>& g, double cap) {
    int n = static_cast<int>(g.size());
    std::vector<int> out;
    for (int j = 0; j < n; ++j) {
        double prev = g[(j + n - 1) % n], next = g[(j + 1) % n];
        if (g[j] < cap && g[j] <= prev && g[j] <= next) out.push_back(j);
    }
    return out;
}

struct DegenerateFamily {
    Slope lambda;
    bool curved = false;
    Vec3c center = Vec3c::Zero();
};

// geodesic curvature of the leaf cut in the critical direction of lam at p
inline double leaf_curvature(const SurfacePatch& s, const Vec3& p, const Slope& lam,
                             const Tolerances& tol) {
    Vec4 v = critical_direction(s, p, lam, tol);
    Jet2 j = s.jet(p);
    Eigen::Matrix<double, 4, 2> jc = s.real_jacobian(j).leftCols<2>();
    Vec2 w = jc.colPivHouseholderQr().solve(v);
    w /= w.norm();
    Vec4 vel = jc * w;
    Vec4 acc;
    for (int c = 0; c < 4; ++c) acc[c] = w.dot(j.hess[c].topLeftCorner<2, 2>() * w);
    Vec4 vh = vel / vel.norm();
    Vec4 perp = acc - vh.dot(acc) * vh;
    return perp.norm() / vel.squaredNorm();
}

}  // namespace exc_detail

inline ClassifyEvidence classify_exceptional_surface(const SurfacePatch& s,
                                                     const Tolerances& tol = default_tols(),
                                                     int grid = 5) {
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "classification needs a 2-parameter patch");
    ClassifyEvidence ev;
    const Box& box = s.domain();

    std::vector<Vec3> samples;
    for (int i = 0; i < grid; ++i)
        for (int l = 0; l < grid; ++l) {
            double a = (i + 0.5) / grid, b = (l + 0.5) / grid;
            samples.emplace_back(box.lo[0] + a * (box.hi[0] - box.lo[0]),
                                 box.lo[1] + b * (box.hi[1] - box.lo[1]), 0.0);
        }

    // complex curve: tangent plane complex at every sample
    std::vector<Vec3> usable;
    std::size_t degenerate = 0;
    for (const auto& p : samples) {
        double theta;
        try {
            theta = wirtinger_angle(tangent_plane(s, p));
        } catch (const geometry_error&) {
            ++degenerate;  // parametrization-degenerate sample, not evidence
            continue;
        }
        if (std::min(theta, kPi - theta) > tol.angle) usable.push_back(p);
    }
    if (degenerate * 2 > samples.size())
        throw geometry_error(errc::inconclusive_sampling,
                             "jacobian degenerate at most classification samples");
    if (usable.empty()) {
        ev.kind = SurfaceClass::ComplexCurve;
        ev.detail = "tangent plane complex at all samples";
        return ev;
    }
    if (usable.size() * 2 < samples.size())
        throw geometry_error(errc::inconclusive_sampling,
                             "tangent planes complex at most samples but not all");

    // real affine plane: second fundamental form vanishes and the critical
    // circle is the same at every usable sample
    {
        bool affine = true;
        SphereCircle first = critical_circle(tangent_plane(s, usable.front()));
        for (const auto& p : usable) {
            Jet2 j = s.jet(p);
            RealPlane2 tp = tangent_plane(s, p);
            for (int a = 0; a < 2 && affine; ++a)
                for (int b = 0; b < 2 && affine; ++b) {
                    Vec4 h(j.hess[0](a, b), j.hess[1](a, b), j.hess[2](a, b), j.hess[3](a, b));
                    Vec4 n = h - tp.t1().dot(h) * tp.t1() - tp.t2().dot(h) * tp.t2();
                    if (n.norm() > 1e-8 * (1.0 + h.norm())) affine = false;
                }
            if (!affine) break;
            if (first.distance(critical_circle(tp)) > 1e-7) {
                affine = false;
                break;
            }
        }
        if (affine) {
            ev.kind = SurfaceClass::RealAffinePlane;
            ev.detail = "vanishing second fundamental form and constant critical circle";
            return ev;
        }
    }

    std::vector<Vec3> probes(usable.begin(),
                             usable.begin() + std::min<std::size_t>(9, usable.size()));

    // slopes critical at every sample: common points of the sampled critical
    // circles, found by a scan of the base circle plus golden refinement
    std::vector<exc_detail::DegenerateFamily> families;
    {
        std::optional<SphereCircle> base;
        for (const auto& p : usable) {
            SphereCircle c = critical_circle(tangent_plane(s, p));
            if (!c.is_point_circle(1e-9)) {
                base = c;
                break;
            }
        }
        if (base) {
            auto global_residual = [&](double phi) {
                Slope lam = base->point_at(phi);
                double worst = 0.0;
                for (const auto& q : usable)
                    worst = std::max(worst, std::abs(e_function(s, q, lam)));
                return worst;
            };
            const int nscan = 384;
            std::vector<double> g(nscan);
            for (int i = 0; i < nscan; ++i) g[i] = global_residual(2.0 * kPi * i / nscan);
            for (int j : exc_detail::circular_minima(g, 1e-3)) {
                double lo = 2.0 * kPi * (j - 1) / nscan, hi = 2.0 * kPi * (j + 1) / nscan;
                double phi = exc_detail::refine_minimum(global_residual, lo, hi, 48);
                if (global_residual(phi) > 1e-8) continue;
                Slope lam = base->point_at(phi);
                bool dup = false;
                for (const auto& f : families)
                    if (f.lambda.proj_distance(lam) < 1e-3) dup = true;
                if (dup || families.size() >= 4) continue;
                exc_detail::DegenerateFamily fam;
                fam.lambda = lam;
                fam.curved = true;
                bool valid = true;
                for (const auto& p : probes) {
                    try {
                        if (exc_detail::leaf_curvature(s, p, lam, tol) < 1e-3) fam.curved = false;
                    } catch (const geometry_error&) {
                        valid = false;
                        break;
                    }
                }
                if (!valid) continue;
                Eigen::MatrixXcd rows(usable.size(), 3);
                for (std::size_t r = 0; r < usable.size(); ++r)
                    rows.row(r) = exc_detail::line_through(s.value(usable[r]), lam).transpose();
                Eigen::JacobiSVD<Eigen::MatrixXcd> svd(rows, Eigen::ComputeFullV);
                if (svd.singularValues()[2] > 1e-6) continue;
                fam.center = svd.matrixV().col(2);
                families.push_back(fam);
            }
        }
    }

    {
        std::vector<const exc_detail::DegenerateFamily*> curved;
        for (const auto& f : families)
            if (f.curved) curved.push_back(&f);
        if (curved.size() >= 2) {
            ev.kind = SurfaceClass::PencilProduct;
            ev.pencil_centers = {curved[0]->center, curved[1]->center};
            ev.exceptional_families = static_cast<int>(curved.size());
            ev.detail = "two curved leaf families inside concurrent line pencils";
            return ev;
        }
    }

    // one regular exceptional slope at every probe: a single family of leaves
    // inside complex lines with pointwise-varying slope
    bool straddle = false;
    {
        bool everywhere = true;
        for (const auto& p : probes) {
            SphereCircle circle = critical_circle(tangent_plane(s, p));
            if (circle.is_point_circle(1e-9)) {
                everywhere = false;
                break;
            }
            auto margin_at = [&](double phi) {
                Slope lam = circle.point_at(phi);
                for (const auto& f : families)
                    if (f.lambda.proj_distance(lam) < 3e-2) return 1.0;
                try {
                    ExceptionalReport rep = exceptional_tests(s, p, lam, tol);
                    if (rep.grad_norm < 1e-6) return 1.0;
                    return rep.margin[1];
                } catch (const geometry_error&) {
                    return 1.0;
                }
            };
            const int nscan = 96;
            std::vector<double> m(nscan);
            for (int i = 0; i < nscan; ++i) m[i] = margin_at(2.0 * kPi * i / nscan);
            bool found = false;
            for (int j : exc_detail::circular_minima(m, 0.1)) {
                double lo = 2.0 * kPi * (j - 1) / nscan, hi = 2.0 * kPi * (j + 1) / nscan;
                double phi = exc_detail::refine_minimum(margin_at, lo, hi, 40);
                double mm = margin_at(phi);
                if (mm < tol.exceptional) {
                    found = true;
                    break;
                }
                if (mm < 10.0 * tol.exceptional) straddle = true;
            }
            if (!found) {
                everywhere = false;
                break;
            }
        }
        if (everywhere && !probes.empty()) {
            ev.kind = SurfaceClass::LeviFlatFamily;
            ev.exceptional_families = 1;
            ev.detail = "a regular exceptional slope found at every probe point";
            return ev;
        }
    }

    // generic: find a confidently non-exceptional critical pair as witness
    for (const auto& p : usable) {
        SphereCircle circle = critical_circle(tangent_plane(s, p));
        if (circle.is_point_circle(1e-9)) continue;
        for (int i = 0; i < 32; ++i) {
            Slope lam = circle.point_at(2.0 * kPi * i / 32.0);
            ExceptionalReport rep;
            try {
                rep = exceptional_tests(s, p, lam, tol);
            } catch (const geometry_error&) {
                continue;
            }
            if (rep.margin[1] > 10.0 * tol.exceptional) {
                ev.kind = SurfaceClass::Generic;
                CriticalPair pair;
                pair.point = s.value(p);
                pair.lambda = lam;
                pair.e_value = rep.e_value;
                pair.de_value = rep.margin[1];
                pair.exceptional = false;
                ev.witness = pair;
                ev.exceptional_families = static_cast<int>(families.size());
                ev.detail = "non-exceptional critical pair found";
                return ev;
            }
            if (rep.margin[1] > tol.exceptional) straddle = true;
        }
    }

    (void)straddle;
    throw geometry_error(errc::inconclusive_sampling,
                         "no classification criterion reached a confident margin");
}

// ====== Stratified tangent fitting (condition-style defect) ======
//
// Fixed lower stratum tangent A at a limit point; moving tangents B_n along a
// sequence on the higher stratum.  defect_n = sin of the largest principal
// angle needed to fit A inside B_n; the result is the tail limsup.  Sequences
// whose tangents keep oscillating are reported, not averaged.

struct ApproachSequence {
    std::vector<Vec3> params;   // points on Y_j
    Vec3 limit = Vec3::Zero();  // point on Y_i (its own parameters)
};

inline double condition_c_defect(const SurfacePatch& yi, const SurfacePatch& yj,
                                 const ApproachSequence& seq,
                                 const Tolerances& tol = default_tols()) {
    if (yi.k() >= yj.k())
        throw geometry_error(errc::domain_error, "the first stratum must have lower dimension");
    if (seq.params.size() < 4)
        throw geometry_error(errc::domain_error, "approach sequence too short");

    auto frame_of = [](const SurfacePatch& s, const Vec3& p) {
        Jet2 j = s.jet(p);
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, s.k());
        for (int c = 0; c < s.k(); ++c) {
            m(0, c) = j.jac(0, c).real();
            m(1, c) = j.jac(0, c).imag();
            m(2, c) = j.jac(1, c).real();
            m(3, c) = j.jac(1, c).imag();
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(4, s.k());
        return q;
    };

    Eigen::MatrixXd a = frame_of(yi, seq.limit);  // 4 x ki

    std::vector<Eigen::MatrixXd> tail_frames;
    std::vector<double> defects;
    std::size_t tail_count =
        std::min(seq.params.size(), std::max<std::size_t>(5, seq.params.size() / 3));
    std::size_t tail_start = seq.params.size() - tail_count;
    for (std::size_t n = 0; n < seq.params.size(); ++n) {
        Eigen::MatrixXd b = frame_of(yj, seq.params[n]);  // 4 x kj
        double smin = 1.0;  // a point stratum fits in anything
        if (yi.k() > 0) {
            Eigen::MatrixXd overlap = a.transpose() * b;  // ki x kj
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(overlap);
            smin = svd.singularValues()[yi.k() - 1];
        }
        double defect = std::sqrt(std::max(0.0, 1.0 - smin * smin));
        if (n >= tail_start) {
            defects.push_back(defect);
            tail_frames.push_back(b);
        }
    }

    // oscillation of the higher tangents over the tail: largest pairwise
    // subspace gap; an oscillating sequence has no usable limit
    double osc = 0.0;
    for (std::size_t i = 0; i < tail_frames.size(); ++i)
        for (std::size_t l = i + 1; l < tail_frames.size(); ++l) {
            Eigen::MatrixXd overlap = tail_frames[i].transpose() * tail_frames[l];
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(overlap);
            double smin = svd.singularValues()[yj.k() - 1];
            osc = std::max(osc, std::sqrt(std::max(0.0, 1.0 - smin * smin)));
        }
    double spread = *std::max_element(defects.begin(), defects.end()) -
                    *std::min_element(defects.begin(), defects.end());
    if (osc > 1e-2 && spread > 100.0 * tol.defect)
        throw geometry_error(errc::non_convergent, "tangent planes oscillate along the tail");

    return *std::max_element(defects.begin(), defects.end());
}

}  // namespace cpdual
