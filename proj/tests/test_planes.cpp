#include <cpdual/planes.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace cpdual;

namespace {

RealPlane2 span_of(Vec4 a, Vec4 b) { return RealPlane2::from_frame(a, b); }

const Vec4 ex1(1, 0, 0, 0), ex2(0, 1, 0, 0), ey1(0, 0, 1, 0), ey2(0, 0, 0, 1);

}  // namespace

TEST_CASE("wirtinger angle on reference planes") {
    CHECK(wirtinger_angle(span_of(ex1, ey1)) == Catch::Approx(kPi / 2).margin(1e-14));
    CHECK(wirtinger_angle(span_of(ex1, ex2)) == Catch::Approx(0.0).margin(1e-14));
    Vec4 mixed = std::cos(0.3) * ex2 + std::sin(0.3) * ey1;
    CHECK(wirtinger_angle(span_of(ex1, mixed)) == Catch::Approx(0.3).margin(1e-12));
}

TEST_CASE("wirtinger angle is frame independent and flips with orientation") {
    Rng rng(11);
    for (int n = 0; n < 50; ++n) {
        RealPlane2 p = oracles::random_plane(rng);
        double th = wirtinger_angle(p);
        double phi = rng.uniform(0, 2 * kPi);
        Vec4 r1 = std::cos(phi) * p.t1() + std::sin(phi) * p.t2();
        Vec4 r2 = -std::sin(phi) * p.t1() + std::cos(phi) * p.t2();
        CHECK(wirtinger_angle(span_of(r1, r2)) == Catch::Approx(th).margin(1e-10));
        CHECK(wirtinger_angle(span_of(p.t1(), -p.t2())) == Catch::Approx(kPi - th).margin(1e-10));
    }
}

TEST_CASE("wirtinger angle is unitary invariant") {
    Rng rng(12);
    for (int n = 0; n < 25; ++n) {
        RealPlane2 p = oracles::random_plane(rng);
        // Random unitary from the QR of a Gaussian complex matrix.
        Mat2c g;
        g << rng.cnormal(), rng.cnormal(), rng.cnormal(), rng.cnormal();
        Eigen::HouseholderQR<Mat2c> qr(g);
        Mat2c u = qr.householderQ();
        CHECK(wirtinger_angle(plane_apply(p, u)) ==
              Catch::Approx(wirtinger_angle(p)).margin(1e-10));
    }
}

TEST_CASE("critical circle of reference planes") {
    SECTION("totally real plane gives the real axis") {
        SphereCircle c = critical_circle(span_of(ex1, ey1));
        // {Im lambda = 0}: A = 0, D = 0, B purely imaginary.
        CHECK(std::abs(c.A()) < 1e-14);
        CHECK(std::abs(c.D()) < 1e-14);
        CHECK(std::abs(c.B().real()) < 1e-14);
        CHECK(std::abs(c.eval(Slope::from_chart(3.7))) < 1e-14);
        CHECK(std::abs(c.eval(Slope::infinity())) < 1e-14);
        CHECK(c.eval(Slope::from_chart(cplx(0, 1))) != Catch::Approx(0.0).margin(1e-3));
    }
    SECTION("complex line gives a point circle") {
        SphereCircle c = critical_circle(span_of(ex1, ex2));
        CHECK(std::abs(c.eval(Slope::from_chart(0.0))) < 1e-14);
        CHECK(c.det() == Catch::Approx(0.0).margin(1e-14));
        CHECK(c.is_point_circle());
    }
    SECTION("model plane at theta = pi/4: center i/2, radius 1/2") {
        SphereCircle c = critical_circle(model_plane(kPi / 4));
        // cos|l|^2 = sin l2 at theta=pi/4: l1^2 + (l2 - 1/2)^2 = 1/4.
        for (double phi = 0.0; phi < 6.28; phi += 0.37) {
            cplx l = cplx(0, 0.5) + 0.5 * cplx(std::cos(phi), std::sin(phi));
            CHECK(std::abs(c.eval_chart(l)) < 1e-14);
        }
        CHECK(c.det() < -1e-3);
    }
}

TEST_CASE("circle form matches equation coefficients on the model family") {
    for (double th : {0.2, 0.7, 1.2, 1.5}) {
        SphereCircle c = critical_circle(model_plane(th));
        SphereCircle want(0.0, cplx(0, 0.5 * std::sin(th)), -std::cos(th));
        CHECK(c.distance(want) < 1e-14);
        CHECK(std::abs(c.eval(Slope::from_chart(0.0))) < 1e-14);
        CHECK(std::abs(c.eval(Slope(std::cos(th), cplx(0, std::sin(th))))) < 1e-14);
    }
}

TEST_CASE("hermitian margin agrees with the 4x4 determinant oracle") {
    Rng rng(21);
    auto grid = oracles::slope_grid();
    for (int n = 0; n < 40; ++n) {
        RealPlane2 p = oracles::random_plane(rng);
        SphereCircle c = critical_circle(p);
        for (const auto& s : grid) {
            double mh = std::abs(c.eval(s));
            double md = oracles::brute_force_margin(p, s);
            if (mh > 1e-7 && md > 1e-7) {
                CHECK(is_transverse(p, s).transverse);
            }
            // The two margins differ by a bounded positive factor.
            if (md > 1e-6) CHECK(mh / md > 1e-3);
            if (mh > 1e-6) CHECK(md / mh > 1e-3);
        }
    }
}

TEST_CASE("points produced on the circle are non-transverse by the oracle") {
    Rng rng(22);
    for (int n = 0; n < 30; ++n) {
        RealPlane2 p = oracles::random_noncomplex_plane(rng);
        SphereCircle c = critical_circle(p);
        for (double phi = 0.0; phi < 6.3; phi += 0.5) {
            Slope s = c.point_at(phi);
            CHECK(std::abs(c.eval(s)) < 1e-12);
            CHECK(oracles::brute_force_margin(p, s) < 1e-10);
            CHECK_FALSE(is_transverse(p, s).transverse);
        }
    }
}

TEST_CASE("is_transverse margins on reference configurations") {
    RealPlane2 r2 = span_of(ex1, ey1);
    CHECK_FALSE(is_transverse(r2, Slope::from_chart(1.0)).transverse);
    CHECK(is_transverse(r2, Slope::from_chart(cplx(0, 1))).transverse);
    RealPlane2 cl = span_of(ex1, ex2);
    CHECK(is_transverse(cl, Slope::from_chart(1.0)).transverse);
    CHECK_FALSE(is_transverse(cl, Slope::from_chart(0.0)).transverse);
}

TEST_CASE("normal form sends the plane to the model and transports the circle") {
    Rng rng(23);
    for (int n = 0; n < 60; ++n) {
        RealPlane2 p = oracles::random_noncomplex_plane(rng);
        NormalForm nf = normal_form(p);
        CHECK(nf.theta == Catch::Approx(wirtinger_angle(p)).margin(1e-12));
        // U is unitary.
        CHECK((nf.unitary * nf.unitary.adjoint() - Mat2c::Identity()).norm() < 1e-12);
        // U(P) equals the model plane of the same angle.
        RealPlane2 image = plane_apply(p, nf.unitary);
        RealPlane2 model = model_plane(nf.theta);
        CHECK(model.contains(image.t1(), 1e-9));
        CHECK(model.contains(image.t2(), 1e-9));
        // Transported circle matches cos|l|^2 = sin l2 and hits 0, i tan.
        SphereCircle moved = mobius_apply(critical_circle(p), nf.unitary);
        SphereCircle want(0.0, cplx(0, 0.5 * std::sin(nf.theta)), -std::cos(nf.theta));
        CHECK(moved.distance(want) < 1e-10);
        CHECK(std::abs(moved.eval(Slope::from_chart(0.0))) < 1e-11);
        CHECK(std::abs(moved.eval(Slope(std::cos(nf.theta), cplx(0, std::sin(nf.theta))))) < 1e-11);
    }
}

TEST_CASE("normal form rejects complex lines") {
    CHECK_THROWS_AS(normal_form(span_of(ex1, ex2)), geometry_error);
}

TEST_CASE("moebius transport is a covariance of the circle") {
    Rng rng(24);
    for (int n = 0; n < 40; ++n) {
        RealPlane2 p = oracles::random_plane(rng);
        Mat2c g;
        g << rng.cnormal(), rng.cnormal(), rng.cnormal(), rng.cnormal();
        Eigen::HouseholderQR<Mat2c> qr(g);
        Mat2c u = qr.householderQ();
        SphereCircle lhs = critical_circle(plane_apply(p, u));
        SphereCircle rhs = mobius_apply(critical_circle(p), u);
        CHECK(lhs.distance(rhs) < 1e-10);
    }
}

TEST_CASE("covector input canonicalizes the angle into [0, pi/2]") {
    Rng rng(25);
    for (int n = 0; n < 40; ++n) {
        Vec4 f1, f2;
        for (int i = 0; i < 4; ++i) f1[i] = rng.normal();
        for (int i = 0; i < 4; ++i) f2[i] = rng.normal();
        if (std::abs(f1.normalized().dot(f2.normalized())) > 0.95) continue;
        RealPlane2 p = RealPlane2::from_covectors(f1, f2);
        double th = wirtinger_angle(p);
        CHECK(th <= kPi / 2 + 1e-12);
        CHECK(std::abs(f1.normalized().dot(p.t1())) < 1e-10);
        CHECK(std::abs(f2.dot(p.t2())) < 1e-8);
    }
}

TEST_CASE("slope primitives") {
    Slope s = Slope::from_chart(cplx(1.0, 2.0));
    CHECK(std::abs(s.chart() - cplx(1.0, 2.0)) < 1e-15);
    CHECK(s.proj_distance(Slope::from_chart(cplx(1.0, 2.0))) < 1e-15);
    CHECK(Slope::infinity().is_infinite());
    CHECK(Slope::infinity().proj_distance(Slope::from_chart(0.0)) == Catch::Approx(1.0));
    // generators span the line direction
    Slope t = Slope::from_chart(cplx(0.5, -0.25));
    Vec2c g1 = to_complex(t.generator1());
    CHECK(std::abs(g1[1] * t.u() - g1[0] * t.v()) < 1e-15);
}
