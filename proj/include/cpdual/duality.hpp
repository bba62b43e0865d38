#pragma once

// Dual side of the line geometry: points of the dual plane are lines of the
// source plane.  The chart (lambda, mu) names the line {y = lambda x + mu};
// a normalized homogeneous covector names every line, vertical ones included.
// Facilities:
//   - pi projection of contact elements to dual points,
//   - dual clouds: the pi image of a lifted patch, each sample annotated with
//     its pushforward tangent data and the rank of the projection there,
//   - moving least squares quadratic fits of hypersurface clouds,
//   - bidual round trips: dual germ, dual-side lift, projection back,
//   - exceptional hypersurface traces: whether the complex tangent line stays
//     tangent along its intersection curve with the hypersurface.

#include "contact.hpp"
#include "exceptional.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cpdual {

// ====== Dual points ======

// A line of the projective plane, i.e. a point of the dual plane.  The
// homogeneous covector t satisfies t . (x, y, 1) = 0 on the line and is kept
// unit-normalized; the chart pair is valid whenever the line is not vertical.
struct DualPoint {
    cplx lam = 0.0;
    cplx mu = 0.0;
    bool chart_valid = true;
    Vec3c triple = Vec3c(0.0, 1.0, 0.0);

    static DualPoint from_chart(const cplx& lam, const cplx& mu) {
        DualPoint d;
        d.lam = lam;
        d.mu = mu;
        d.chart_valid = true;
        d.triple = Vec3c(-lam, 1.0, -mu);
        d.triple /= d.triple.norm();
        return d;
    }

    static DualPoint from_triple(Vec3c t) {
        double n = t.norm();
        if (n < 1e-300) throw geometry_error(errc::domain_error, "zero line covector");
        t /= n;
        DualPoint d;
        d.triple = t;
        d.chart_valid = std::abs(t[1]) > 1e-7;
        if (d.chart_valid) {
            d.lam = -t[0] / t[1];
            d.mu = -t[2] / t[1];
        }
        return d;
    }

    // the same line described in swapped coordinates (x, y) -> (y, x)
    DualPoint swapped() const { return from_triple(Vec3c(triple[1], triple[0], triple[2])); }

    // normalized distance from a point to the line
    double incidence(const Vec2c& z) const {
        cplx r = triple[0] * z[0] + triple[1] * z[1] + triple[2];
        return std::abs(r) / std::sqrt(1.0 + z.squaredNorm());
    }

    // chordal distance between lines as projective points; the projection
    // residual form stays accurate near zero
    double distance(const DualPoint& o) const {
        Vec3c r = o.triple - triple * triple.dot(o.triple);
        return r.norm();
    }

    // residual between the chart pair and the homogeneous covector
    double chart_consistency() const {
        if (!chart_valid) return 0.0;
        Vec3c c(-lam, 1.0, -mu);
        c /= c.norm();
        Vec3c r = triple - c * c.dot(triple);
        return r.norm();
    }
};

// chart coordinates as a real 4-vector (l1, l2, m1, m2)
inline Vec4 dual_chart_vec(const DualPoint& d) {
    if (!d.chart_valid)
        throw geometry_error(errc::domain_error, "vertical line has no chart coordinates");
    return Vec4(d.lam.real(), d.lam.imag(), d.mu.real(), d.mu.imag());
}

// ====== Dual projection ======

// Line through the element's base point in the element's slope direction.
// Total: vertical lines land on the chartless part of the dual plane.
inline DualPoint pi_project(const ContactElement& w) {
    cplx u = w.lambda.u(), v = w.lambda.v();
    return DualPoint::from_triple(Vec3c(v, -u, u * w.z[1] - v * w.z[0]));
}

// Lift samples may live in swapped coordinates; the result is always the
// dual point in primary coordinates.
inline DualPoint pi_project(const LiftSample& s) {
    DualPoint raw = pi_project(s.w);
    return s.swapped ? raw.swapped() : raw;
}

// Dual-side contact form on (dlam, dmu, dfiber) triples at fiber coordinate
// x: the pairing dmu + x dlam.  The fiber component never contributes.
inline cplx dual_contact_form_eval(const cplx& x, const Vec3c& v) { return v[1] + x * v[0]; }

namespace dual_detail {

// Pushforward of a lift frame to the dual chart of the sample: each column
// (dx, dy, dlam) maps to (dlam, dmu) with dmu = dy - lambda dx - x dlam.
// Real 4-rows (l1, l2, m1, m2), all in the sample's own chart.
inline Eigen::Matrix<double, 4, Eigen::Dynamic> pi_pushforward(const LiftSample& s) {
    if (s.w.lambda.is_infinite(1e-9))
        throw geometry_error(errc::domain_error, "pushforward needs a chart-finite slope");
    cplx lam = s.w.lambda.chart();
    cplx x = s.w.z[0];
    Eigen::Index n = s.frame.cols();
    Eigen::Matrix<double, 4, Eigen::Dynamic> out(4, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        cplx dl = s.frame(2, c);
        cplx dm = s.frame(1, c) - lam * s.frame(0, c) - x * dl;
        out.col(c) = Vec4(dl.real(), dl.imag(), dm.real(), dm.imag());
    }
    return out;
}

// rank of a pushforward by relative singular value threshold
struct RankEstimate {
    int rank = 0;
    double sigma_ratio = 0.0;  // smallest over largest singular value
};

inline RankEstimate rank_of(const Eigen::Matrix<double, 4, Eigen::Dynamic>& m,
                            double gate = 1e-6) {
    RankEstimate est;
    if (m.cols() == 0) return est;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    double top = sv[0];
    if (top <= 0.0) return est;
    est.sigma_ratio = sv[sv.size() - 1] / top;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > gate * top) ++est.rank;
    return est;
}

// Gauss-Newton nearest point on a patch, seeded in parameter space
struct NearestPoint {
    Vec3 param = Vec3::Zero();
    double dist = 0.0;
    bool converged = false;
};

inline NearestPoint nearest_point(const SurfacePatch& s, const Vec4& target, Vec3 seed,
                                  int max_iter = 40) {
    NearestPoint out;
    int k = s.k();
    Vec3 p = seed;
    for (int it = 0; it < max_iter && !out.converged; ++it) {
        Jet2 j = s.jet(p);
        Vec4 r = to_real(j.value) - target;
        Eigen::MatrixXd jac = s.real_jacobian(j).leftCols(k);
        Eigen::VectorXd delta = jac.colPivHouseholderQr().solve(-r);
        for (int d = 0; d < k; ++d) p[d] += delta[d];
        if (delta.norm() < 1e-13 * (1.0 + p.norm())) out.converged = true;
    }
    out.param = p;
    out.dist = (to_real(s.value(p)) - target).norm();
    return out;
}

}  // namespace dual_detail

// ====== Dual clouds ======

// One pi-image sample: the dual point in primary coordinates, the producing
// contact element in its own chart, and the pushforward tangent data with the
// rank of the projection there.
struct DualSample {
    DualPoint d;
    ContactElement source;
    Vec3 base_param = Vec3::Zero();
    double fiber = 0.0;
    bool chart_swapped = false;
    bool from_complex_tangent = false;
    Eigen::Matrix<double, 4, Eigen::Dynamic> tangent;  // in the producing chart
    int pi_rank = -1;
    double sigma_ratio = 0.0;
};

struct DualCloud {
    std::string provenance;
    std::vector<DualSample> samples;
    std::vector<LiftSweep::Exclusion> excluded;
};

// base point of the producing element in primary coordinates
inline Vec2c projected_source(const DualSample& s) {
    return s.chart_swapped ? Vec2c(s.source.z[1], s.source.z[0]) : s.source.z;
}

// slope of the producing element in primary coordinates
inline Slope source_slope(const DualSample& s) {
    return s.chart_swapped ? Slope(s.source.lambda.v(), s.source.lambda.u()) : s.source.lambda;
}

namespace dual_detail {

// tangent columns transported to the primary dual chart; the chart swap on
// lines acts as a Moebius map, so its differential is complex-linear
inline Eigen::Matrix<double, 4, Eigen::Dynamic> primary_tangent(const DualSample& s) {
    if (!s.chart_swapped) return s.tangent;
    if (!s.d.chart_valid)
        throw geometry_error(errc::domain_error, "sample has no primary chart");
    DualPoint producing = s.d.swapped();
    cplx lt = producing.lam, mt = producing.mu;
    Eigen::Matrix<double, 4, Eigen::Dynamic> out(4, s.tangent.cols());
    for (Eigen::Index c = 0; c < s.tangent.cols(); ++c) {
        cplx dlt(s.tangent(0, c), s.tangent(1, c));
        cplx dmt(s.tangent(2, c), s.tangent(3, c));
        cplx dl = -dlt / (lt * lt);
        cplx dm = -dmt / lt + mt * dlt / (lt * lt);
        out.col(c) = Vec4(dl.real(), dl.imag(), dm.real(), dm.imag());
    }
    return out;
}

// Tautological dual sample where the tangent plane is a complex line: the
// fiber circle degenerates and the slope is the tangent direction itself.
// The slope derivatives come from the jet Hessians of the dominant column.
inline DualSample complex_tangent_sample(const SurfacePatch& s, const Vec3& p) {
    Jet2 j = s.jet(p);
    int c0 = std::hypot(std::abs(j.jac(0, 0)), std::abs(j.jac(1, 0))) >=
                     std::hypot(std::abs(j.jac(0, 1)), std::abs(j.jac(1, 1)))
                 ? 0
                 : 1;
    cplx dx = j.jac(0, c0), dy = j.jac(1, c0);
    if (std::abs(dx) < 1e-14 && std::abs(dy) < 1e-14)
        throw geometry_error(errc::immersion_failure, "vanishing tangent column");
    bool swapped = std::abs(dy) > std::abs(dx);

    // chart components of the jet, swapped so the slope chart stays bounded
    auto comp = [&](int row, int q) {
        int r = swapped ? 1 - row : row;
        return q < 0 ? j.jac(r, c0)
                     : cplx(j.hess[2 * r](c0, q), j.hess[2 * r + 1](c0, q));
    };
    cplx a = comp(0, -1), b = comp(1, -1);
    cplx l = b / a;
    Vec2c z = swapped ? Vec2c(j.value[1], j.value[0]) : j.value;
    cplx x = z[0], mu = z[1] - l * z[0];

    DualSample out;
    out.base_param = p;
    out.fiber = -1.0;
    out.chart_swapped = swapped;
    out.from_complex_tangent = true;
    out.source = ContactElement{z, Slope::from_chart(l)};
    out.tangent.resize(4, 2);
    for (int q = 0; q < 2; ++q) {
        cplx da = comp(0, q), db = comp(1, q);
        cplx dl = (db * a - b * da) / (a * a);
        cplx dz0 = swapped ? j.jac(1, q) : j.jac(0, q);
        cplx dz1 = swapped ? j.jac(0, q) : j.jac(1, q);
        cplx dm = dz1 - l * dz0 - x * dl;
        out.tangent.col(q) = Vec4(dl.real(), dl.imag(), dm.real(), dm.imag());
    }
    DualPoint raw = DualPoint::from_chart(l, mu);
    out.d = swapped ? raw.swapped() : raw;
    RankEstimate est = rank_of(out.tangent);
    out.pi_rank = est.rank;
    out.sigma_ratio = est.sigma_ratio;
    return out;
}

inline DualSample annotate(const LiftSample& ls, double fiber) {
    DualSample out;
    out.d = pi_project(ls);
    out.source = ls.w;
    out.base_param = ls.base_param;
    out.fiber = fiber;
    out.chart_swapped = ls.swapped;
    out.tangent = pi_pushforward(ls);
    RankEstimate est = rank_of(out.tangent);
    out.pi_rank = est.rank;
    out.sigma_ratio = est.sigma_ratio;
    return out;
}

}  // namespace dual_detail

// Pi image of the lifted patch over a deterministic sampling grid.  Complex
// tangent base points contribute tautological samples and are also listed
// among the exclusions; other per-sample failures are listed only.
inline DualCloud dual_variety(const SurfacePatch& n, int base_grid = 5, int fiber_samples = 32,
                              const Tolerances& tol = default_tols()) {
    LiftedPatch m = lift(n, fiber_samples);
    DualCloud cloud;
    cloud.provenance = n.name();
    for (const Vec3& p : m.base_points(base_grid)) {
        switch (m.kind()) {
            case LiftKind::Section: {
                try {
                    cloud.samples.push_back(dual_detail::annotate(m.section_sample(p), 0.0));
                } catch (const geometry_error& e) {
                    cloud.excluded.push_back({p, 0.0, e.code(), e.what()});
                }
                break;
            }
            case LiftKind::CircleBundle: {
                double theta = 0.0;
                try {
                    theta = wirtinger_angle(tangent_plane(n, p));
                } catch (const geometry_error& e) {
                    cloud.excluded.push_back({p, -1.0, e.code(), e.what()});
                    break;
                }
                if (theta < tol.angle || theta > kPi - tol.angle) {
                    try {
                        cloud.samples.push_back(dual_detail::complex_tangent_sample(n, p));
                        cloud.excluded.push_back({p, -1.0, errc::complex_tangent,
                                                  "complex tangent: tautological dual sample"});
                    } catch (const geometry_error& e) {
                        cloud.excluded.push_back({p, -1.0, e.code(), e.what()});
                    }
                    break;
                }
                try {
                    SphereCircle circle = critical_circle(tangent_plane(n, p));
                    for (int f = 0; f < fiber_samples; ++f) {
                        double phi = 2.0 * kPi * f / fiber_samples;
                        try {
                            cloud.samples.push_back(dual_detail::annotate(
                                m.bundle_sample_at(p, circle.point_at(phi)), phi));
                        } catch (const geometry_error& e) {
                            cloud.excluded.push_back({p, phi, e.code(), e.what()});
                        }
                    }
                } catch (const geometry_error& e) {
                    cloud.excluded.push_back({p, -1.0, e.code(), e.what()});
                }
                break;
            }
            case LiftKind::FullFiber: {
                for (int f = 0; f < fiber_samples; ++f) {
                    try {
                        cloud.samples.push_back(dual_detail::annotate(
                            m.fiber_sample(p, contact_detail::sphere_slope(f, fiber_samples)),
                            static_cast<double>(f)));
                    } catch (const geometry_error& e) {
                        cloud.excluded.push_back({p, static_cast<double>(f), e.code(), e.what()});
                    }
                }
                break;
            }
        }
    }
    return cloud;
}

// smallest chart distance from a point to the cloud's chart-valid samples
inline double cloud_chart_distance(const DualCloud& cloud, const Vec4& at) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : cloud.samples) {
        if (!s.d.chart_valid) continue;
        best = std::min(best, (dual_chart_vec(s.d) - at).norm());
    }
    return best;
}

// ====== Moving least squares fits ======

// Local quadratic model of a hypersurface cloud: orthonormal tangent frame,
// unit normal, and a quadratic height function over tangent coordinates.
struct CloudFit {
    Vec4 center = Vec4::Zero();
    Eigen::Matrix<double, 4, 3> tangent = Eigen::Matrix<double, 4, 3>::Zero();
    Vec4 normal = Vec4::Zero();
    double offset = 0.0;
    Vec3 linear = Vec3::Zero();
    Eigen::Matrix3d quad = Eigen::Matrix3d::Zero();
    double rms = 0.0;
    int support = 0;
    double radius = 0.0;
};

// Weighted quadratic fit around a chart point.  The tangent frame averages
// the sample projectors when pushforward data is present and falls back to
// the position covariance otherwise.
inline CloudFit mls_fit(const DualCloud& cloud, const Vec4& at, double radius,
                        int min_support = 12) {
    std::vector<const DualSample*> near;
    std::vector<double> weight;
    std::vector<Vec4> pos;
    for (const auto& s : cloud.samples) {
        if (!s.d.chart_valid) continue;
        Vec4 v = dual_chart_vec(s.d);
        double r = (v - at).norm();
        if (r > radius) continue;
        near.push_back(&s);
        pos.push_back(v);
        double sg = 0.5 * radius;
        weight.push_back(std::exp(-(r * r) / (sg * sg)));
    }
    if (static_cast<int>(near.size()) < min_support)
        throw geometry_error(errc::inconclusive_sampling,
                             "too few cloud samples inside the fit radius");

    CloudFit fit;
    fit.radius = radius;
    fit.support = static_cast<int>(near.size());
    double wsum = 0.0;
    for (std::size_t i = 0; i < near.size(); ++i) {
        fit.center += weight[i] * pos[i];
        wsum += weight[i];
    }
    fit.center /= wsum;

    // frame: weighted average of tangent projectors, or position covariance
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    double tw = 0.0;
    for (std::size_t i = 0; i < near.size(); ++i) {
        if (near[i]->tangent.cols() < 3) continue;
        Eigen::MatrixXd t;
        try {
            t = dual_detail::primary_tangent(*near[i]);
        } catch (const geometry_error&) {
            continue;
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(t);
        Eigen::MatrixXd q =
            qr.householderQ() * Eigen::MatrixXd::Identity(4, t.cols());
        acc += weight[i] * (q * q.transpose());
        tw += weight[i];
    }
    if (tw < 1e-14) {
        for (std::size_t i = 0; i < near.size(); ++i) {
            Vec4 d = pos[i] - fit.center;
            acc += weight[i] * (d * d.transpose());
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(acc);
    for (int c = 0; c < 3; ++c) fit.tangent.col(c) = eig.eigenvectors().col(3 - c);
    fit.normal = eig.eigenvectors().col(0);

    // weighted least squares for the quadratic height over the tangent frame
    Eigen::MatrixXd rows(near.size(), 10);
    Eigen::VectorXd rhs(near.size());
    for (std::size_t i = 0; i < near.size(); ++i) {
        Vec4 d = pos[i] - fit.center;
        Vec3 q = fit.tangent.transpose() * d;
        double h = fit.normal.dot(d);
        double sw = std::sqrt(weight[i]);
        int col = 0;
        double basis[10] = {1.0,         q[0],        q[1],        q[2],      q[0] * q[0],
                            q[0] * q[1], q[0] * q[2], q[1] * q[1], q[1] * q[2], q[2] * q[2]};
        for (; col < 10; ++col) rows(i, col) = sw * basis[col];
        rhs(i) = sw * h;
    }
    Eigen::VectorXd beta = rows.colPivHouseholderQr().solve(rhs);
    fit.offset = beta[0];
    fit.linear = Vec3(beta[1], beta[2], beta[3]);
    fit.quad << 2.0 * beta[4], beta[5], beta[6], beta[5], 2.0 * beta[7], beta[8], beta[6],
        beta[8], 2.0 * beta[9];
    double sse = 0.0;
    for (std::size_t i = 0; i < near.size(); ++i) {
        double r = rows.row(i).dot(beta) - rhs(i);
        sse += r * r;
    }
    fit.rms = std::sqrt(sse / wsum);
    return fit;
}

inline double fit_predict(const CloudFit& f, const Vec3& q) {
    return f.offset + f.linear.dot(q) + 0.5 * q.dot(f.quad * q);
}

// signed offset of a chart point from the fitted patch
inline double fit_height(const CloudFit& f, const Vec4& p) {
    Vec4 d = p - f.center;
    Vec3 q = f.tangent.transpose() * d;
    return f.normal.dot(d) - fit_predict(f, q);
}

inline Vec4 fit_point(const CloudFit& f, const Vec3& q) {
    return f.center + f.tangent * q + f.normal * fit_predict(f, q);
}

// The fitted quadratic model as a 3-parameter patch with exact jets.
inline SurfacePatch cloud_fit_patch(const CloudFit& f, double box_radius,
                                    const std::string& name = "cloud-fit") {
    Box dom;
    dom.k = 3;
    dom.lo = Vec3(-box_radius, -box_radius, -box_radius);
    dom.hi = Vec3(box_radius, box_radius, box_radius);
    CloudFit fit = f;
    auto jets = [fit](const Vec3& q) {
        Vec4 v = fit_point(fit, q);
        Jet2 j;
        j.k = 3;
        j.value = to_complex(v);
        Vec3 grad = fit.linear + fit.quad * q;
        for (int a = 0; a < 3; ++a) {
            Vec4 col = fit.tangent.col(a) + fit.normal * grad[a];
            j.jac(0, a) = cplx(col[0], col[1]);
            j.jac(1, a) = cplx(col[2], col[3]);
        }
        for (int c = 0; c < 4; ++c) j.hess[c] = fit.normal[c] * fit.quad;
        return j;
    };
    return SurfacePatch::from_function(3, jets, dom, name);
}

// Smallest distance from probe samples of one cloud to the local quadratic
// model of another; distinct germs keep this bounded away from zero.
inline double dual_cloud_separation(const DualCloud& a, const DualCloud& b, int stride = 7,
                                    double radius = 0.2) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.samples.size(); i += std::max(1, stride)) {
        const DualSample& s = a.samples[i];
        if (!s.d.chart_valid) continue;
        Vec4 probe = dual_chart_vec(s.d);
        double d0 = cloud_chart_distance(b, probe);
        if (!std::isfinite(d0)) continue;
        double sep = d0;
        if (d0 < radius) {
            try {
                CloudFit fit = mls_fit(b, probe, radius);
                sep = std::min(d0, std::abs(fit_height(fit, probe)));
            } catch (const geometry_error&) {
                // sparse neighborhood: keep the raw sample distance
            }
        }
        best = std::min(best, sep);
    }
    if (!std::isfinite(best))
        throw geometry_error(errc::inconclusive_sampling, "no chart-valid probe samples");
    return best;
}

// ====== Bidual round trips ======

// Round trip through the dual side around one critical, non-exceptional
// fiber point: dual germ by pushforward frames, dual-side section slope from
// the moving frame, fiber coordinate from the dual contact form, projection
// back, pointwise distance to the source patch.
struct BidualReport {
    DualPoint d0;
    double margin = 0.0;          // strongest non-exceptionality margin at the seed
    bool degenerate_locus = false;  // identically critical neighborhoods
    int samples = 0;
    double max_distance = 0.0;
    double max_fiber_gap = 0.0;
};

namespace dual_detail {

// fiber angle of a slope on a circle, by scan plus golden refinement
inline double circle_angle_of(const SphereCircle& circle, const Slope& lam) {
    auto gap = [&](double phi) { return lam.proj_distance(circle.point_at(phi)); };
    const int nscan = 256;
    double best = 0.0, bestval = gap(0.0);
    for (int i = 1; i < nscan; ++i) {
        double phi = 2.0 * kPi * i / nscan;
        double g = gap(phi);
        if (g < bestval) {
            best = phi;
            bestval = g;
        }
    }
    double lo = best - 2.0 * kPi / nscan, hi = best + 2.0 * kPi / nscan;
    return exc_detail::refine_minimum(gap, lo, hi, 60);
}

// dual-side section data of a pushed 3-frame: the complex line inside the
// span determines the slope, and the contact form pins the fiber coordinate
inline cplx dual_fiber_coordinate(const Eigen::Matrix<double, 4, Eigen::Dynamic>& push,
                                  double* conditioning = nullptr) {
    if (push.cols() != 3)
        throw geometry_error(errc::domain_error, "dual section data needs a 3-frame");
    Vec4 nu = contact_detail::hodge_normal(push.col(0), push.col(1), push.col(2));
    double scale = push.col(0).norm() * push.col(1).norm() * push.col(2).norm();
    if (conditioning) *conditioning = nu.norm() / std::max(scale, 1e-300);
    if (nu.norm() < 1e-8 * std::max(scale, 1e-300))
        throw geometry_error(errc::rank_drop, "dual germ is singular at the sample");
    cplx nl(nu[0], nu[1]), nm(nu[2], nu[3]);
    cplx du = -std::conj(nm), dv = std::conj(nl);
    if (std::abs(du) < 1e-12 * std::abs(dv))
        throw geometry_error(errc::rank_drop, "dual tangent line is fiber-vertical");
    return -dv / du;
}

}  // namespace dual_detail

inline BidualReport bidual_roundtrip(const SurfacePatch& s, const Vec3& base, const Slope& lam,
                                     const Tolerances& tol = default_tols(), int grid = 1,
                                     double step = 5e-3) {
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "round trip needs a 2-parameter patch");
    ExceptionalReport rep = exceptional_tests(s, base, lam, tol);
    LiftedPatch m = lift(s);
    BidualReport out;
    out.d0 = pi_project(m.bundle_sample_at(base, lam));

    if (rep.grad_norm < 1e-10) {
        // identically critical neighborhood: the dual germ is a 2-plane-like
        // set; fit it, lift the fit as a circle bundle, project back
        out.degenerate_locus = true;
        std::vector<Vec4> pts;
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b) {
                Vec3 p = base + Vec3(step * a, step * b, 0.0);
                SphereCircle circle = critical_circle(tangent_plane(s, p));
                for (int f = 0; f < 16; ++f) {
                    try {
                        LiftSample ls = m.bundle_sample_at(p, circle.point_at(2.0 * kPi * f / 16));
                        DualPoint d = pi_project(ls);
                        if (d.chart_valid && std::abs(d.lam) < 1e3 && std::abs(d.mu) < 1e3)
                            pts.push_back(dual_chart_vec(d));
                    } catch (const geometry_error&) {
                        // skipped fiber points keep the cloud clean
                    }
                }
            }
        if (pts.size() < 12)
            throw geometry_error(errc::rank_drop, "degenerate locus left too few dual samples");
        Vec4 c = Vec4::Zero();
        for (const auto& v : pts) c += v;
        c /= static_cast<double>(pts.size());
        Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
        for (const auto& v : pts) cov += (v - c) * (v - c).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(cov);
        if (eig.eigenvalues()[1] > 1e-12 * eig.eigenvalues()[3])
            throw geometry_error(errc::rank_drop, "degenerate locus with a non-planar dual germ");
        Eigen::Matrix<double, 4, 2> t2;
        t2.col(0) = eig.eigenvectors().col(3);
        t2.col(1) = eig.eigenvectors().col(2);
        double rho = 0.0;
        for (const auto& v : pts) rho = std::max(rho, (t2.transpose() * (v - c)).norm());

        auto jets = [c, t2](const Vec3& q) {
            Vec4 v = c + t2 * Eigen::Vector2d(q[0], q[1]);
            Jet2 j;
            j.k = 2;
            j.value = to_complex(v);
            for (int a = 0; a < 2; ++a) {
                j.jac(0, a) = cplx(t2(0, a), t2(1, a));
                j.jac(1, a) = cplx(t2(2, a), t2(3, a));
            }
            return j;
        };
        Box dom;
        dom.k = 2;
        dom.lo = Vec3(-rho, -rho, 0.0);
        dom.hi = Vec3(rho, rho, 0.0);
        SurfacePatch dual_patch =
            SurfacePatch::from_function(2, jets, dom, s.name() + ":dual-germ");

        LiftSweep sweep = lift(dual_patch, 16).sweep(3);
        for (const auto& ds : sweep.samples) {
            Slope sigma = base_slope(ds);
            if (sigma.is_infinite(1e-9)) continue;
            cplx x = -sigma.chart();
            if (std::abs(x) > 1e3) continue;
            Vec2c dpt = projected(ds);
            Vec2c ret(x, dpt[0] * x + dpt[1]);
            dual_detail::NearestPoint np =
                dual_detail::nearest_point(s, to_real(ret), base);
            out.max_distance = std::max(out.max_distance, np.dist);
            ++out.samples;
        }
        if (out.samples == 0)
            throw geometry_error(errc::rank_drop, "dual-side lift produced no usable samples");
        return out;
    }

    out.margin = *std::max_element(rep.margin.begin(), rep.margin.end());
    if (out.margin < 10.0 * tol.exceptional)
        throw geometry_error(errc::exceptional_point,
                             "critical pair is exceptional within margin");

    SphereCircle circle0 = critical_circle(tangent_plane(s, base));
    double phi0 = dual_detail::circle_angle_of(circle0, lam);
    for (int a = -grid; a <= grid; ++a)
        for (int b = -grid; b <= grid; ++b)
            for (int f = -grid; f <= grid; ++f) {
                Vec3 p = base + Vec3(step * a, step * b, 0.0);
                SphereCircle circle = critical_circle(tangent_plane(s, p));
                LiftSample ls =
                    m.bundle_sample_at(p, circle.point_at(phi0 + 2.0 * kPi * step * f));
                auto push = dual_detail::pi_pushforward(ls);
                cplx x = dual_detail::dual_fiber_coordinate(push);
                cplx lc = ls.w.lambda.chart();
                cplx muc = ls.w.z[1] - lc * ls.w.z[0];
                Vec2c ret_chart(x, lc * x + muc);
                Vec2c ret = ls.swapped ? Vec2c(ret_chart[1], ret_chart[0]) : ret_chart;
                dual_detail::NearestPoint np = dual_detail::nearest_point(s, to_real(ret), p);
                out.max_distance = std::max(out.max_distance, np.dist);
                out.max_fiber_gap = std::max(out.max_fiber_gap, std::abs(x - ls.w.z[0]));
                ++out.samples;
            }
    return out;
}

// ====== Exceptional hypersurface traces ======

// A hypersurface is exceptional when, at every sample, the complex tangent
// line meets the hypersurface along a trace on which it stays the complex
// tangent.  Contact type is read off a direction scan inside the tangent
// line: curve-like contact has a direction where the distance to the
// hypersurface collapses, point-like contact grows quadratically every way.
struct TraceOptions {
    int grid = 2;             // base sampling grid per axis
    int rays = 48;            // directions scanned inside the tangent line
    int steps = 4;            // radii along the scan
    double step = 5e-3;       // radius increment
    double ratio_gate = 0.05;   // min/max scan distance below this is curve-like
    double drift_gate = 1e-6;   // max slope drift along an accepted trace
    double sigma_gate = 1e-6;   // rank gate for the pushforward differential
    int max_newton = 40;
    int min_trace = 2;        // accepted radii needed to count as a curve
};

struct TraceWitness {
    Vec3 param = Vec3::Zero();
    Vec2c point = Vec2c::Zero();
    double drift = 0.0;
    bool on_curve = false;
};

struct HypersurfaceReport {
    bool exceptional = false;
    int dual_dimension = 0;     // largest pushforward rank over the samples
    double max_sigma_ratio = 0.0;
    double max_drift = 0.0;     // over accepted trace points
    TraceWitness witness;
    int samples = 0;
    int accepted = 0;
};

inline HypersurfaceReport exceptional_hypersurface_test(const SurfacePatch& h,
                                                        const TraceOptions& opt = {},
                                                        const Tolerances& tol = default_tols()) {
    if (h.k() != 3)
        throw geometry_error(errc::domain_error, "hypersurface test needs a 3-parameter patch");
    (void)tol;
    LiftedPatch m = lift(h);
    const Box& dom = h.domain();
    Vec3 width = dom.hi - dom.lo;

    auto inside_guard = [&](const Vec3& p) {
        for (int d = 0; d < 3; ++d)
            if (p[d] < dom.lo[d] - width[d] || p[d] > dom.hi[d] + width[d]) return false;
        return true;
    };

    HypersurfaceReport rep;
    bool all_pass = true;
    for (const Vec3& p0 : m.base_points(opt.grid)) {
        LiftSample sec = m.section_sample(p0);
        Slope lam = base_slope(sec);
        Vec2c z = projected(sec);
        Vec4 z4 = to_real(z);
        Vec4 g1 = lam.generator1(), g2 = lam.generator2();

        auto push = dual_detail::pi_pushforward(sec);
        dual_detail::RankEstimate est = dual_detail::rank_of(push, opt.sigma_gate);
        rep.dual_dimension = std::max(rep.dual_dimension, est.rank);
        rep.max_sigma_ratio = std::max(rep.max_sigma_ratio, est.sigma_ratio);

        int sample_accepted = 0;
        double sample_drift = 0.0;
        TraceWitness sample_best;    // strongest accepted drift
        TraceWitness off_best;       // strongest off-curve drift
        double scale = 1.0 + z4.norm();

        for (int j = 1; j <= opt.steps; ++j) {
            double t = j * opt.step;
            auto probe = [&](double th) {
                Vec4 e = std::cos(th) * g1 + std::sin(th) * g2;
                return dual_detail::nearest_point(h, z4 + t * e, p0, opt.max_newton);
            };
            double mind = std::numeric_limits<double>::infinity(), maxd = 0.0;
            double best_th = 0.0;
            for (int r = 0; r < opt.rays; ++r) {
                double th = kPi * r / opt.rays;  // antipodal rays probe the same line
                dual_detail::NearestPoint np = probe(th);
                if (!np.converged)
                    throw geometry_error(errc::trace_failure,
                                         "nearest-point iteration failed along the trace");
                if (!inside_guard(np.param))
                    throw geometry_error(errc::trace_failure,
                                         "trace left the parameter domain");
                maxd = std::max(maxd, np.dist);
                if (np.dist < mind) {
                    mind = np.dist;
                    best_th = th;
                }
            }
            // sharpen the collapsing direction before measuring the drift
            auto dist_at = [&](double th) {
                dual_detail::NearestPoint np = probe(th);
                return np.converged && inside_guard(np.param)
                           ? np.dist
                           : std::numeric_limits<double>::max();
            };
            double half = kPi / opt.rays;
            double th_star =
                exc_detail::refine_minimum(dist_at, best_th - half, best_th + half, 40);
            dual_detail::NearestPoint best = probe(th_star);
            if (!best.converged)
                throw geometry_error(errc::trace_failure,
                                     "nearest-point iteration failed along the trace");
            if (!inside_guard(best.param))
                throw geometry_error(errc::trace_failure, "trace left the parameter domain");
            mind = std::min(mind, best.dist);
            bool on_trace =
                maxd < 1e-12 * scale || mind < opt.ratio_gate * maxd;
            double drift;
            try {
                drift = lam.proj_distance(base_slope(m.section_sample(best.param)));
            } catch (const geometry_error&) {
                throw geometry_error(errc::trace_failure,
                                     "tangent line undefined along the trace");
            }
            if (on_trace) {
                ++sample_accepted;
                if (drift >= sample_drift) {
                    sample_drift = drift;
                    sample_best = {best.param, h.value(best.param), drift, true};
                }
            } else if (drift >= off_best.drift) {
                off_best = {best.param, h.value(best.param), drift, false};
            }
        }

        ++rep.samples;
        rep.accepted += sample_accepted;
        bool vote;
        TraceWitness vote_witness;
        if (sample_accepted >= opt.min_trace) {
            vote = sample_drift < opt.drift_gate;
            vote_witness = sample_best;
            rep.max_drift = std::max(rep.max_drift, sample_drift);
        } else {
            vote = false;  // point-like contact: the line leaves immediately
            vote_witness = off_best;
        }
        if (!vote && all_pass) {
            all_pass = false;
            rep.witness = vote_witness;
        }
        if (vote && all_pass && vote_witness.drift >= rep.witness.drift)
            rep.witness = vote_witness;
    }
    rep.exceptional = all_pass && rep.samples > 0;
    return rep;
}

}  // namespace cpdual
