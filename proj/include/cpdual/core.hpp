#pragma once

// Shared scalar types, the complex structure on R^4 ~ C^2, tolerances,
// error codes and a few small utilities used across the library.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cpdual {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec2c = Eigen::Vector2cd;
using Vec3c = Eigen::Vector3cd;
using Mat2c = Eigen::Matrix2cd;

inline constexpr double kPi = 3.14159265358979323846;

// ====== R^4 <-> C^2 ======
//
// Coordinates are ordered (x1, x2, y1, y2) with x = x1 + i x2, y = y1 + i y2.
// This ordered basis is taken as the positive orientation of R^4.

inline Vec2c to_complex(const Vec4& v) {
    return Vec2c(cplx(v[0], v[1]), cplx(v[2], v[3]));
}

inline Vec4 to_real(const Vec2c& z) {
    return Vec4(z[0].real(), z[0].imag(), z[1].real(), z[1].imag());
}

// Multiplication by i on R^4.
inline Vec4 j_mul(const Vec4& v) {
    return Vec4(-v[1], v[0], -v[3], v[2]);
}

// ====== Tolerances ======

struct Tolerances {
    double transverse = 1e-9;    // |form value| below this counts as non-transverse
    double angle = 1e-7;         // below this the tangent plane counts as complex
    double critical = 1e-8;      // (point, slope) criticality gate
    double exceptional = 1e-6;   // exceptionality margin gate
    double defect = 1e-6;        // semi-legendrian acceptance threshold
    double bidual = 1e-5;        // round-trip distance bound
    double wall = 1e-3;          // census distance to the dual cloud (projective)
    double step = 1e-2;          // continuation base step
    double dedup = 1e-4;         // curve closure / dedup radius
};

inline const Tolerances& default_tols() {
    static const Tolerances t{};
    return t;
}

// ====== Errors ======
//
// geometry_error: a geometric precondition failed (CLI exit code 2).
// parse_error:    bad input text or file (CLI exit code 1).

enum class errc {
    complex_tangent,
    immersion_failure,
    not_critical,
    singular_start,
    degenerate_locus,
    non_convergent,
    mixed_rank,
    exceptional_point,
    rank_drop,
    trace_failure,
    wall_proximity,
    budget_exceeded,
    inconclusive_sampling,
    domain_error,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::complex_tangent: return "ComplexTangent";
        case errc::immersion_failure: return "ImmersionFailure";
        case errc::not_critical: return "NotCritical";
        case errc::singular_start: return "SingularStart";
        case errc::degenerate_locus: return "DegenerateLocus";
        case errc::non_convergent: return "NonConvergent";
        case errc::mixed_rank: return "MixedRank";
        case errc::exceptional_point: return "ExceptionalPoint";
        case errc::rank_drop: return "RankDrop";
        case errc::trace_failure: return "TraceFailure";
        case errc::wall_proximity: return "WallProximity";
        case errc::budget_exceeded: return "BudgetExceeded";
        case errc::inconclusive_sampling: return "InconclusiveSampling";
        case errc::domain_error: return "DomainError";
    }
    return "GeometryError";
}

class geometry_error : public std::runtime_error {
public:
    geometry_error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

class parse_error : public std::runtime_error {
public:
    parse_error(int line, int col, const std::string& what)
        : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                             std::to_string(col) + ": " + what),
          line_(line), col_(col) {}
    int line() const { return line_; }
    int col() const { return col_; }

private:
    int line_, col_;
};

// ====== Deterministic RNG ======
//
// mt19937_64 with uniforms built from raw bits; avoids libstdc++-specific
// distribution behaviour so that a seed pins the sample stream.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t bits() { return state_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal (Box-Muller, deterministic pair consumption)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    cplx cnormal() {
        double a = normal(), b = normal();
        return cplx(a, b);
    }

private:
    std::mt19937_64 state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ====== Parallel map ======
//
// Chunked workers writing disjoint indices; the result layout is independent
// of the worker count, which keeps reports byte-stable across --threads.

inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::thread::hardware_concurrency();
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

// ====== Formatting ======

// Shortest 17-significant-digit form; round-trips doubles exactly.
inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace cpdual
