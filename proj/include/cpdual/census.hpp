#pragma once

// Intersection census of a compact surface against pencils of complex lines:
// certified root counts for single lines, seeded sweeps over the dual chart
// with region clustering, and two-sided probes across walls of tangent lines.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "duality.hpp"
#include "exceptional.hpp"

namespace cpdual {

// ====== Line queries ======
//
// A query fixes the line, the surface it is asked against, and the resolution
// budget of the solver.  Compactness of the parameter domain (periodic seams,
// double covers, closed boxes) is declared by the caller, never inferred; the
// built-in catalog names carry their own declaration.

struct LineQuery {
    DualPoint line;
    std::string surface_id;
    bool declared_compact = false;
    int max_depth = 26;      // binary subdivision depth cap
    int max_boxes = 40000;   // subdivision budget for one line
    int newton_iters = 30;   // polish iterations per candidate
};

inline bool catalog_compact(const std::string& name) {
    return name == "r2" || name == "complex-line" || name == "complex-conic" ||
           name == "clifford-torus" || name == "p2r-chart";
}

inline LineQuery make_line_query(const SurfacePatch& s, const DualPoint& d) {
    LineQuery q;
    q.line = d;
    q.surface_id = s.name();
    q.declared_compact = catalog_compact(s.name());
    return q;
}

inline void validate_query(const LineQuery& q) {
    if (!q.declared_compact)
        throw geometry_error(errc::domain_error,
                             "intersection counts need a declared-compact parameter domain");
    if (q.max_depth < 6 || q.max_depth > 48)
        throw geometry_error(errc::domain_error, "subdivision depth out of bounds");
    if (q.max_boxes < 64 || q.max_boxes > 10000000)
        throw geometry_error(errc::domain_error, "subdivision budget out of bounds");
    if (q.newton_iters < 4 || q.newton_iters > 200)
        throw geometry_error(errc::domain_error, "polish iteration count out of bounds");
}

// Smallest projective distance from a line to the sampled dual cloud; the
// chartless samples (vertical tangent lines) count as well.
inline double wall_distance(const DualCloud& cloud, const DualPoint& d) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : cloud.samples) best = std::min(best, d.distance(s.d));
    return best;
}

inline const DualSample& nearest_sample(const DualCloud& cloud, const DualPoint& d) {
    if (cloud.samples.empty())
        throw geometry_error(errc::inconclusive_sampling, "empty dual cloud");
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cloud.samples.size(); ++i) {
        double v = d.distance(cloud.samples[i].d);
        if (v < best) {
            best = v;
            arg = i;
        }
    }
    return cloud.samples[arg];
}

// ====== Intersection counting ======
//
// Roots of the incidence equation t0 x(s, t) + t1 y(s, t) + t2 = 0 over the
// closed parameter box: binary subdivision prunes boxes that a first-order
// bound with a curvature remainder certifies root-free, surviving leaves are
// polished by a planar Newton iteration, and roots are merged in image space
// so periodic seams and double covers count each point once.

struct LineRoot {
    Vec3 param = Vec3::Zero();
    Vec2c point = Vec2c::Zero();
    double residual = 0.0;        // normalized incidence after polish
    double transversality = 0.0;  // |E| at the root against the line's slope
};

struct CountResult {
    int count = 0;
    std::vector<LineRoot> roots;
    int boxes_used = 0;
    double wall_margin = 0.0;  // projective distance to the dual cloud
};

namespace census_detail {

struct LineEval {
    cplx f;       // t . (x, y, 1)
    cplx fs, ft;  // parameter derivatives
    double hess;  // combined Frobenius bound of the two real Hessians
};

inline LineEval line_eval(const SurfacePatch& s, const Vec3c& t, const Vec3& p) {
    Jet2 j = s.jet(p);
    LineEval e;
    e.f = t[0] * j.value[0] + t[1] * j.value[1] + t[2];
    e.fs = t[0] * j.jac(0, 0) + t[1] * j.jac(1, 0);
    e.ft = t[0] * j.jac(0, 1) + t[1] * j.jac(1, 1);
    double acc = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double re = t[0].real() * j.hess[0](a, b) - t[0].imag() * j.hess[1](a, b) +
                        t[1].real() * j.hess[2](a, b) - t[1].imag() * j.hess[3](a, b);
            double im = t[0].imag() * j.hess[0](a, b) + t[0].real() * j.hess[1](a, b) +
                        t[1].imag() * j.hess[2](a, b) + t[1].real() * j.hess[3](a, b);
            acc += re * re + im * im;
        }
    e.hess = std::sqrt(acc);
    return e;
}

struct NewtonRoot {
    Vec2 param = Vec2::Zero();
    bool converged = false;
};

inline NewtonRoot polish(const SurfacePatch& s, const Vec3c& t, Vec2 p, const Box& dom,
                         int iters) {
    NewtonRoot out;
    double guard = (dom.hi - dom.lo).head<2>().norm();
    for (int it = 0; it < iters; ++it) {
        LineEval e = line_eval(s, t, Vec3(p[0], p[1], 0.0));
        Eigen::Matrix2d jac;
        jac << e.fs.real(), e.ft.real(), e.fs.imag(), e.ft.imag();
        double det = jac.determinant();
        if (std::abs(det) < 1e-18 * (1.0 + jac.squaredNorm())) return out;
        Vec2 rhs(-e.f.real(), -e.f.imag());
        Vec2 step = jac.inverse() * rhs;
        p += step;
        if (!dom.contains(Vec3(p[0], p[1], 0.0), guard)) return out;
        if (step.norm() < 1e-13 * (1.0 + p.norm())) {
            out.param = p;
            out.converged = true;
            return out;
        }
    }
    return out;
}

struct SubBox {
    Vec2 lo, hi;
    int depth;
};

}  // namespace census_detail

inline CountResult count_intersections(const SurfacePatch& s, const LineQuery& q,
                                       const DualCloud& walls,
                                       const Tolerances& tol = default_tols()) {
    using census_detail::LineEval;
    using census_detail::SubBox;
    validate_query(q);
    if (s.k() != 2)
        throw geometry_error(errc::domain_error, "intersection counts need a 2-parameter patch");

    CountResult out;
    out.wall_margin = wall_distance(walls, q.line);
    if (out.wall_margin < tol.wall)
        throw geometry_error(errc::wall_proximity, "line within the wall margin of the dual cloud");

    const Vec3c t = q.line.triple;
    const Box& dom = s.domain();

    // coarse boxes give meaningless center-jet bounds: split before pruning
    const double trust_radius = 0.35;
    const double leaf_radius = 2e-3;

    std::vector<SubBox> stack;
    stack.push_back({Vec2(dom.lo[0], dom.lo[1]), Vec2(dom.hi[0], dom.hi[1]), 0});
    std::vector<Vec2> seeds;

    while (!stack.empty()) {
        SubBox b = stack.back();
        stack.pop_back();
        if (++out.boxes_used > q.max_boxes)
            throw geometry_error(errc::budget_exceeded, "subdivision budget exhausted");

        Vec2 c = 0.5 * (b.lo + b.hi);
        Vec2 h = 0.5 * (b.hi - b.lo);
        double r = h.norm();
        LineEval e = census_detail::line_eval(s, t, Vec3(c[0], c[1], 0.0));

        if (r <= trust_radius) {
            double grad = std::sqrt(std::norm(e.fs) + std::norm(e.ft));
            // |f(p)| >= |f(c)| - grad r - 1/2 L r^2, with 3x headroom on L
            if (std::abs(e.f) > grad * r + 1.5 * e.hess * r * r) continue;
        }
        if (r <= leaf_radius || b.depth >= q.max_depth) {
            seeds.push_back(c);
            continue;
        }
        int axis = (h[0] >= h[1]) ? 0 : 1;
        SubBox left = b, right = b;
        left.hi[axis] = c[axis];
        right.lo[axis] = c[axis];
        left.depth = right.depth = b.depth + 1;
        stack.push_back(left);
        stack.push_back(right);
    }

    Slope lam(t[1], -t[0]);
    for (const Vec2& seed : seeds) {
        census_detail::NewtonRoot n = census_detail::polish(s, t, seed, dom, q.newton_iters);
        if (!n.converged) continue;
        Vec3 p(n.param[0], n.param[1], 0.0);
        if (!dom.contains(p, 1e-6)) continue;
        Vec2c z = s.value(p);
        double residual = q.line.incidence(z);
        if (residual > 1e-9) continue;

        bool duplicate = false;
        for (const auto& r0 : out.roots)
            if ((r0.point - z).norm() < 1e-6) {
                duplicate = true;
                break;
            }
        if (duplicate) continue;

        LineRoot root;
        root.param = p;
        root.point = z;
        root.residual = residual;
        root.transversality = std::abs(e_function(s, p, lam));
        if (root.transversality <= 100.0 * tol.transverse)
            throw geometry_error(errc::wall_proximity,
                                 "tangent root escaped the wall margin of the sampled cloud");
        out.roots.push_back(root);
    }

    std::sort(out.roots.begin(), out.roots.end(), [](const LineRoot& a, const LineRoot& b) {
        if (a.param[0] != b.param[0]) return a.param[0] < b.param[0];
        return a.param[1] < b.param[1];
    });
    out.count = static_cast<int>(out.roots.size());
    return out;
}

// ====== Census sweeps ======
//
// A seeded sweep samples lines in the dual chart, counts intersections for
// each, and clusters the counted lines into regions: nearest-neighbor pairs
// are joined exactly when their chart segment keeps the wall margin to the
// dual cloud and both endpoints carry the same count.  Identical seeds give
// identical reports, field for field, independent of the thread count.

struct CensusOptions {
    std::uint64_t seed = 1;
    int lines = 400;
    double lambda_box = 1.5;    // half-width of the Re/Im sampling box for the slope
    double mu_box = 2.5;        // half-width for the intercept
    cplx lambda_center = 0.0;   // box centers; off-axis centers keep a sweep
    cplx mu_center = 0.0;       //   inside the reach of a bounded chart
    int cloud_grid = 7;         // dual cloud resolution used for wall gating
    int cloud_fibers = 24;
    int k_nearest = 6;          // candidate edges per line during clustering
    int segment_checks = 9;     // wall probes along each joining segment
    long total_boxes = 8000000; // global subdivision budget
    unsigned threads = 1;
    LineQuery prototype;        // resolution fields reused for every sampled line
};

struct CensusRegion {
    int count = 0;
    int size = 0;
    int representative = -1;  // smallest line index of the component
};

struct CensusReport {
    std::string surface_id;
    std::string classification;  // structural class of the surface
    std::uint64_t seed = 0;
    std::vector<DualPoint> lines;
    std::vector<int> counts;     // -1 marks a wall-proximate line
    std::vector<int> region_of;  // -1 for wall-proximate lines
    std::vector<CensusRegion> regions;
    std::vector<int> wall_samples;  // indices of lines gated by the wall margin
    std::map<int, int> histogram;   // count -> number of lines
    long boxes_used = 0;
    bool multiple_counts = false;
    bool class_consistent = false;
};

namespace census_detail {

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

inline bool segment_clears_cloud(const DualCloud& cloud, const Vec4& a, const Vec4& b,
                                 int checks, double margin) {
    for (int m = 0; m <= checks; ++m) {
        double u = static_cast<double>(m) / checks;
        Vec4 at = (1.0 - u) * a + u * b;
        DualPoint d = DualPoint::from_chart(cplx(at[0], at[1]), cplx(at[2], at[3]));
        if (wall_distance(cloud, d) < margin) return false;
    }
    return true;
}

}  // namespace census_detail

inline CensusReport census(const SurfacePatch& s, const CensusOptions& opt,
                           const Tolerances& tol = default_tols()) {
    if (opt.lines < 2 || opt.lines > 200000)
        throw geometry_error(errc::domain_error, "census line count out of bounds");

    CensusReport rep;
    rep.surface_id = s.name();
    rep.seed = opt.seed;
    ClassifyEvidence ev = classify_exceptional_surface(s, tol);
    rep.classification = surface_class_name(ev.kind);

    DualCloud cloud = dual_variety(s, opt.cloud_grid, opt.cloud_fibers, tol);

    Rng rng(opt.seed);
    rep.lines.reserve(opt.lines);
    for (int i = 0; i < opt.lines; ++i) {
        cplx lam = opt.lambda_center + cplx(rng.uniform(-opt.lambda_box, opt.lambda_box),
                                            rng.uniform(-opt.lambda_box, opt.lambda_box));
        cplx mu = opt.mu_center +
                  cplx(rng.uniform(-opt.mu_box, opt.mu_box), rng.uniform(-opt.mu_box, opt.mu_box));
        rep.lines.push_back(DualPoint::from_chart(lam, mu));
    }

    LineQuery proto = opt.prototype;
    proto.surface_id = s.name();
    proto.declared_compact = proto.declared_compact || catalog_compact(s.name());

    const int n = opt.lines;
    rep.counts.assign(n, -1);
    std::vector<long> boxes(n, 0);
    std::vector<int> failure(n, 0);  // 0 ok, 1 wall, 2 budget
    parallel_for(static_cast<std::size_t>(n), opt.threads, [&](std::size_t i) {
        LineQuery q = proto;
        q.line = rep.lines[i];
        try {
            CountResult r = count_intersections(s, q, cloud, tol);
            rep.counts[i] = r.count;
            boxes[i] = r.boxes_used;
        } catch (const geometry_error& err) {
            if (err.code() == errc::wall_proximity)
                failure[i] = 1;
            else if (err.code() == errc::budget_exceeded)
                failure[i] = 2;
            else
                throw;
        }
    });

    for (int i = 0; i < n; ++i) {
        rep.boxes_used += boxes[i];
        if (failure[i] == 2) throw geometry_error(errc::budget_exceeded, "line budget exhausted");
        if (failure[i] == 1) rep.wall_samples.push_back(i);
    }
    if (rep.boxes_used > opt.total_boxes)
        throw geometry_error(errc::budget_exceeded, "census budget exhausted");

    std::vector<int> counted;
    for (int i = 0; i < n; ++i)
        if (rep.counts[i] >= 0) counted.push_back(i);

    // k-nearest edges in the chart, kept when the joining segment clears the
    // cloud and the endpoint counts agree
    census_detail::DisjointSet dsu(n);
    std::vector<Vec4> chart(n, Vec4::Zero());
    for (int i : counted) chart[i] = dual_chart_vec(rep.lines[i]);
    for (std::size_t a = 0; a < counted.size(); ++a) {
        int i = counted[a];
        std::vector<std::pair<double, int>> near;
        for (std::size_t b = 0; b < counted.size(); ++b) {
            if (a == b) continue;
            int j = counted[b];
            near.push_back({(chart[i] - chart[j]).norm(), j});
        }
        int deg = std::min<int>(opt.k_nearest, static_cast<int>(near.size()));
        std::partial_sort(near.begin(), near.begin() + deg, near.end());
        for (int e = 0; e < deg; ++e) {
            int j = near[e].second;
            if (rep.counts[i] != rep.counts[j]) continue;
            if (dsu.find(i) == dsu.find(j)) continue;
            if (census_detail::segment_clears_cloud(cloud, chart[i], chart[j],
                                                    opt.segment_checks, tol.wall))
                dsu.unite(i, j);
        }
    }

    rep.region_of.assign(n, -1);
    std::map<int, int> region_index;  // component root -> region id
    for (int i : counted) {
        int root = dsu.find(i);
        auto it = region_index.find(root);
        if (it == region_index.end()) {
            int id = static_cast<int>(rep.regions.size());
            region_index.emplace(root, id);
            CensusRegion reg;
            reg.count = rep.counts[i];
            reg.representative = root;
            rep.regions.push_back(reg);
            it = region_index.find(root);
        }
        rep.region_of[i] = it->second;
        rep.regions[it->second].size += 1;
    }
    for (int i : counted) rep.histogram[rep.counts[i]] += 1;
    rep.multiple_counts = rep.histogram.size() >= 2;

    bool expect_constant = ev.kind == SurfaceClass::ComplexCurve ||
                           ev.kind == SurfaceClass::RealAffinePlane;
    rep.class_consistent = expect_constant ? rep.histogram.size() <= 1 : rep.multiple_counts;
    return rep;
}

// ====== Wall crossing probes ======
//
// Counts on both sides of a wall of tangent lines, stepped along a transversal
// direction in the dual chart.  The wall sample must be a smooth point of the
// dual cloud away from the exceptional locus; a single transversal crossing
// changes the count by exactly two.

struct WallProbe {
    DualPoint minus, plus;
    int n_minus = 0, n_plus = 0;
    double wall_margin_minus = 0.0, wall_margin_plus = 0.0;
    double exceptional_margin = 0.0;
};

inline WallProbe wall_crossing_probe(const SurfacePatch& s, const DualCloud& cloud,
                                     const DualSample& wall, const Vec4& normal, double h,
                                     const LineQuery& proto,
                                     const Tolerances& tol = default_tols()) {
    if (!(h > 0.0) || normal.norm() < 1e-12)
        throw geometry_error(errc::domain_error, "wall probe needs a positive step");

    ExceptionalReport er = exceptional_tests(s, wall.base_param, source_slope(wall), tol);
    double margin = *std::max_element(er.margin.begin(), er.margin.end());
    if (er.grad_norm < 1e-10 || margin < 10.0 * tol.exceptional)
        throw geometry_error(errc::exceptional_point,
                             "wall sample lies on the exceptional locus");

    Vec4 base = dual_chart_vec(wall.d);
    Vec4 dir = normal / normal.norm();

    WallProbe probe;
    probe.exceptional_margin = margin;
    Vec4 lo = base - h * dir, hi = base + h * dir;
    probe.minus = DualPoint::from_chart(cplx(lo[0], lo[1]), cplx(lo[2], lo[3]));
    probe.plus = DualPoint::from_chart(cplx(hi[0], hi[1]), cplx(hi[2], hi[3]));

    LineQuery qm = proto, qp = proto;
    qm.line = probe.minus;
    qp.line = probe.plus;
    CountResult rm = count_intersections(s, qm, cloud, tol);
    CountResult rp = count_intersections(s, qp, cloud, tol);
    probe.n_minus = rm.count;
    probe.n_plus = rp.count;
    probe.wall_margin_minus = rm.wall_margin;
    probe.wall_margin_plus = rp.wall_margin;

    if (std::abs(probe.n_plus - probe.n_minus) != 2)
        throw geometry_error(errc::inconclusive_sampling,
                             "probe pair did not cross exactly one wall");
    return probe;
}

}  // namespace cpdual
