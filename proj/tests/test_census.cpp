#include <catch2/catch_amalgamated.hpp>

#include "cpdual/census.hpp"

#include "oracles.hpp"

using namespace cpdual;

namespace {

errc thrown_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const geometry_error& e) {
        return e.code();
    }
    throw std::runtime_error("expected a geometry_error");
}

const SurfacePatch& torus_patch() {
    static SurfacePatch s = make_catalog_surface("clifford-torus");
    return s;
}

const DualCloud& torus_cloud() {
    static DualCloud c = dual_variety(torus_patch(), 7, 24);
    return c;
}

const SurfacePatch& p2r_patch() {
    static SurfacePatch s = make_catalog_surface("p2r-chart");
    return s;
}

const DualCloud& p2r_cloud() {
    static DualCloud c = dual_variety(p2r_patch(), 7, 24);
    return c;
}

const SurfacePatch& conic_patch() {
    static SurfacePatch s = make_catalog_surface("complex-conic");
    return s;
}

const DualCloud& conic_cloud() {
    static DualCloud c = dual_variety(conic_patch(), 7, 24);
    return c;
}

LineQuery chart_query(const SurfacePatch& s, cplx lam, cplx mu) {
    return make_line_query(s, DualPoint::from_chart(lam, mu));
}

// tangent line of the torus at base (pi, 0) with slope 1: a fold wall sample
DualSample torus_fold_sample() {
    DualSample w;
    w.base_param = Vec3(kPi, 0.0, 0.0);
    w.source.z = Vec2c(cplx(-1, 0), cplx(1, 0));
    w.source.lambda = Slope(1.0, 1.0);
    w.d = pi_project(w.source);
    return w;
}

// diagonal circle sample: the slope e^{i(t-s)} family is exceptional
DualSample torus_diagonal_sample() {
    DualSample w;
    w.base_param = Vec3(0.7, 0.7, 0.0);
    w.source.z = Vec2c(std::polar(1.0, 0.7), std::polar(1.0, 0.7));
    w.source.lambda = Slope(1.0, 1.0);
    w.d = pi_project(w.source);
    return w;
}

// graph y = i(s^2 + t^2)/2: a bowl whose horizontal pencils fold along circles
SurfacePatch bowl_patch() {
    auto jet = [](const Vec3& p) {
        JetC s = JetC::variable(cplx(p[0], 0), 0);
        JetC t = JetC::variable(cplx(p[1], 0), 1);
        JetC x = s + t * cplx(0, 1);
        JetC y = (s * s + t * t) * cplx(0, 0.5);
        return make_jet2(x, y, 2);
    };
    return SurfacePatch::from_function(2, jet, Box::cube(2, -0.9, 0.9), "bowl");
}

}  // namespace

TEST_CASE("line queries validate resolution and compactness") {
    const SurfacePatch& s = torus_patch();
    REQUIRE(catalog_compact("clifford-torus"));
    REQUIRE(catalog_compact("p2r-chart"));
    REQUIRE_FALSE(catalog_compact("bowl"));

    LineQuery q = chart_query(s, 1.0, 1.0);
    REQUIRE(q.declared_compact);
    REQUIRE(q.surface_id == "clifford-torus");

    LineQuery bad = q;
    bad.declared_compact = false;
    REQUIRE(thrown_code([&] { count_intersections(s, bad, torus_cloud()); }) ==
            errc::domain_error);
    bad = q;
    bad.max_depth = 3;
    REQUIRE(thrown_code([&] { count_intersections(s, bad, torus_cloud()); }) ==
            errc::domain_error);
    bad = q;
    bad.max_boxes = 10;
    REQUIRE(thrown_code([&] { count_intersections(s, bad, torus_cloud()); }) ==
            errc::domain_error);
    bad = q;
    bad.newton_iters = 2;
    REQUIRE(thrown_code([&] { count_intersections(s, bad, torus_cloud()); }) ==
            errc::domain_error);
}

TEST_CASE("intersection counts match the classical picture on pinned lines") {
    const SurfacePatch& torus = torus_patch();
    const DualCloud& cloud = torus_cloud();

    CountResult far = count_intersections(torus, chart_query(torus, cplx(0.6, 0.8), 3.0), cloud);
    REQUIRE(far.count == 0);
    REQUIRE(far.roots.empty());
    REQUIRE(far.wall_margin > 1e-2);

    CountResult two = count_intersections(torus, chart_query(torus, 1.0, 1.0), cloud);
    REQUIRE(two.count == 2);
    for (const auto& r : two.roots) {
        REQUIRE(std::abs(std::abs(r.point[0]) - 1.0) < 1e-12);
        REQUIRE(std::abs(std::abs(r.point[1]) - 1.0) < 1e-12);
        REQUIRE(r.residual < 1e-12);
        REQUIRE(r.transversality > 0.1);
    }
    REQUIRE((two.roots[0].point - two.roots[1].point).norm() > 1e-3);

    // the diagonal pencil contains whole circles of the torus: a wall, not a count
    REQUIRE(thrown_code([&] { count_intersections(torus, chart_query(torus, 1.0, 0.0), cloud); }) ==
            errc::wall_proximity);

    // a line tangent at a fold has no transverse census either
    REQUIRE(thrown_code([&] { count_intersections(torus, chart_query(torus, 1.0, 2.0), cloud); }) ==
            errc::wall_proximity);

    CountResult one =
        count_intersections(p2r_patch(), chart_query(p2r_patch(), cplx(0, 1), 0.3), p2r_cloud());
    REQUIRE(one.count == 1);
    REQUIRE((one.roots[0].point - Vec2c(0.0, 0.3)).norm() < 1e-10);

    CountResult conic = count_intersections(
        conic_patch(), chart_query(conic_patch(), cplx(0.1, 0.05), cplx(0.2, -0.1)),
        conic_cloud());
    REQUIRE(conic.count == 2);
    for (const auto& r : conic.roots)
        REQUIRE(std::abs(r.point[1] - r.point[0] * r.point[0]) < 1e-12);
}

TEST_CASE("intersection counts agree with the circle oracle across the dual chart") {
    const SurfacePatch& torus = torus_patch();
    const DualCloud& cloud = torus_cloud();
    Rng rng(20260816u);
    int checked = 0, skipped = 0;
    for (int i = 0; i < 1500; ++i) {
        cplx lam(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
        cplx mu(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5));
        oracles::TorusOracle o = oracles::torus_line_count(lam, mu);
        CountResult r;
        try {
            r = count_intersections(torus, chart_query(torus, lam, mu), cloud);
        } catch (const geometry_error& e) {
            REQUIRE(e.code() == errc::wall_proximity);
            ++skipped;
            continue;
        }
        if (o.degenerate || o.wall_margin < 1e-4) {
            ++skipped;
            continue;
        }
        ++checked;
        REQUIRE(r.count == o.count);
    }
    REQUIRE(checked >= 1490);
    REQUIRE(skipped <= 10);
}

TEST_CASE("intersection counting respects its box budget") {
    LineQuery q = chart_query(torus_patch(), cplx(0.6, 0.8), 1.0);
    q.max_boxes = 80;
    REQUIRE(thrown_code([&] { count_intersections(torus_patch(), q, torus_cloud()); }) ==
            errc::budget_exceeded);
    q.max_boxes = 40000;
    REQUIRE(count_intersections(torus_patch(), q, torus_cloud()).boxes_used < 4000);
}

TEST_CASE("census separates the torus pencils into even regions") {
    CensusOptions opt;
    opt.seed = 42;
    opt.lines = 200;
    CensusReport rep = census(torus_patch(), opt);

    REQUIRE(rep.surface_id == "clifford-torus");
    REQUIRE(rep.classification == "PencilProduct");
    REQUIRE(rep.histogram.size() == 2);
    REQUIRE(rep.histogram.at(0) > 20);
    REQUIRE(rep.histogram.at(2) > 20);
    REQUIRE(rep.histogram.at(0) + rep.histogram.at(2) +
                static_cast<int>(rep.wall_samples.size()) ==
            200);
    REQUIRE(rep.multiple_counts);
    REQUIRE(rep.class_consistent);

    // counts are even: crossings annihilate or appear in pairs
    for (int c : rep.counts)
        if (c >= 0) REQUIRE(c % 2 == 0);

    REQUIRE(rep.regions.size() >= 2);
    bool saw0 = false, saw2 = false;
    for (const auto& reg : rep.regions) {
        REQUIRE((reg.count == 0 || reg.count == 2));
        saw0 = saw0 || reg.count == 0;
        saw2 = saw2 || reg.count == 2;
        REQUIRE(reg.size > 0);
        REQUIRE(rep.counts[reg.representative] == reg.count);
        REQUIRE(rep.region_of[reg.representative] ==
                static_cast<int>(&reg - rep.regions.data()));
    }
    REQUIRE(saw0);
    REQUIRE(saw2);

    // lines of one region share the region's count
    for (int i = 0; i < opt.lines; ++i)
        if (rep.region_of[i] >= 0) REQUIRE(rep.counts[i] == rep.regions[rep.region_of[i]].count);
}

TEST_CASE("census keeps a constant count on plane and conic charts") {
    CensusOptions popt;
    popt.seed = 7;
    popt.lines = 120;
    popt.lambda_center = cplx(0.0, 0.75);
    popt.lambda_box = 0.3;
    popt.mu_box = 0.4;
    CensusReport prep = census(p2r_patch(), popt);
    REQUIRE(prep.classification == "RealAffinePlane");
    REQUIRE(prep.histogram.size() == 1);
    REQUIRE(prep.histogram.at(1) == 120);
    REQUIRE_FALSE(prep.multiple_counts);
    REQUIRE(prep.class_consistent);

    CensusOptions copt;
    copt.seed = 7;
    copt.lines = 120;
    copt.lambda_box = 0.3;
    copt.mu_box = 0.25;
    CensusReport crep = census(conic_patch(), copt);
    REQUIRE(crep.classification == "ComplexCurve");
    REQUIRE(crep.histogram.size() == 1);
    REQUIRE(crep.histogram.at(2) == 120);
    REQUIRE(crep.class_consistent);
}

TEST_CASE("census reports are reproducible field for field") {
    CensusOptions opt;
    opt.seed = 42;
    opt.lines = 120;
    CensusReport a = census(torus_patch(), opt);
    CensusReport b = census(torus_patch(), opt);
    opt.threads = 4;
    CensusReport c = census(torus_patch(), opt);

    auto same = [](const CensusReport& x, const CensusReport& y) {
        REQUIRE(x.counts == y.counts);
        REQUIRE(x.region_of == y.region_of);
        REQUIRE(x.wall_samples == y.wall_samples);
        REQUIRE(x.histogram == y.histogram);
        REQUIRE(x.boxes_used == y.boxes_used);
        REQUIRE(x.regions.size() == y.regions.size());
        for (std::size_t i = 0; i < x.regions.size(); ++i) {
            REQUIRE(x.regions[i].count == y.regions[i].count);
            REQUIRE(x.regions[i].size == y.regions[i].size);
            REQUIRE(x.regions[i].representative == y.regions[i].representative);
        }
        for (std::size_t i = 0; i < x.lines.size(); ++i)
            REQUIRE((x.lines[i].triple - y.lines[i].triple).norm() == 0.0);
    };
    same(a, b);
    same(a, c);

    CensusOptions other = opt;
    other.seed = 43;
    CensusReport d = census(torus_patch(), other);
    REQUIRE(a.counts != d.counts);
}

TEST_CASE("wall probes jump by two across a fold") {
    const SurfacePatch& torus = torus_patch();
    DualSample wall = torus_fold_sample();
    REQUIRE(std::abs(wall.d.lam - cplx(1.0, 0.0)) < 1e-12);
    REQUIRE(std::abs(wall.d.mu - cplx(2.0, 0.0)) < 1e-12);

    LineQuery proto = make_line_query(torus, wall.d);
    WallProbe probe =
        wall_crossing_probe(torus, torus_cloud(), wall, Vec4(0, 0, 1, 0), 0.05, proto);
    REQUIRE(probe.n_minus == 2);
    REQUIRE(probe.n_plus == 0);
    REQUIRE(std::abs(probe.n_plus - probe.n_minus) == 2);
    REQUIRE(probe.wall_margin_minus > 1e-2);
    REQUIRE(probe.wall_margin_plus > 1e-2);
    REQUIRE(probe.exceptional_margin > 0.5);

    // anchor taken from the sampled cloud instead of by hand
    const DualSample& anchor = nearest_sample(torus_cloud(), wall.d);
    REQUIRE(anchor.pi_rank == 3);
    WallProbe second =
        wall_crossing_probe(torus, torus_cloud(), anchor, Vec4(0, 0, 1, 0), 0.08, proto);
    REQUIRE(std::abs(second.n_plus - second.n_minus) == 2);

    // bowl graph: the horizontal pencil folds along a circle of tangencies
    SurfacePatch bowl = bowl_patch();
    DualCloud bcloud = dual_variety(bowl, 7, 24);
    DualSample bwall;
    bwall.base_param = Vec3(0.3, 0.05, 0.0);
    bwall.source.z = bowl.value(bwall.base_param);
    bwall.source.lambda = Slope(1.0, 0.05);
    bwall.d = pi_project(bwall.source);
    REQUIRE(std::abs(e_function(bowl, bwall.base_param, bwall.source.lambda)) < 1e-12);

    LineQuery bproto = make_line_query(bowl, bwall.d);
    bproto.declared_compact = true;
    WallProbe bp = wall_crossing_probe(bowl, bcloud, bwall, Vec4(0, 0, 1, 0), 0.004, bproto);
    REQUIRE(bp.n_minus == 0);
    REQUIRE(bp.n_plus == 2);
}

TEST_CASE("wall probes refuse exceptional walls and bad transversals") {
    const SurfacePatch& torus = torus_patch();
    LineQuery proto = chart_query(torus, 1.0, 2.0);

    DualSample diag = torus_diagonal_sample();
    REQUIRE(thrown_code([&] {
                wall_crossing_probe(torus, torus_cloud(), diag, Vec4(0, 0, 1, 0), 0.05, proto);
            }) == errc::exceptional_point);

    DualSample wall = torus_fold_sample();
    REQUIRE(thrown_code([&] {
                wall_crossing_probe(torus, torus_cloud(), wall, Vec4(0, 1, 0, 0), 0.05, proto);
            }) == errc::inconclusive_sampling);
    REQUIRE(thrown_code([&] {
                wall_crossing_probe(torus, torus_cloud(), wall, Vec4(0, 0, 1, 0), 0.0, proto);
            }) == errc::domain_error);
}
