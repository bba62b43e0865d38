#pragma once

// Fixed-format emitters for lift sweeps, dual clouds, and census reports:
// CSV with frozen headers, ascii PLY with float64 vertex properties, and
// versioned JSON.  All floating point goes through the %.17g round-trip
// format, so identical inputs serialize to identical bytes.

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "census.hpp"

namespace cpdual {

namespace io_detail {

inline void csv_row(std::ostream& os, const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) os << ',';
        os << fmt_g17(vals[i]);
    }
    os << '\n';
}

inline void ply_header(std::ostream& os, std::size_t vertices,
                       const std::vector<std::string>& props, const char* comment) {
    os << "ply\nformat ascii 1.0\ncomment " << comment << "\nelement vertex " << vertices
       << '\n';
    for (const auto& p : props) os << "property double " << p << '\n';
    os << "end_header\n";
}

inline void ply_row(std::ostream& os, const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) os << ' ';
        os << fmt_g17(vals[i]);
    }
    os << '\n';
}

// defect of one lifted sample: the contact form on its tangent frame
inline double sample_defect(const LiftSample& s) {
    return s.frame.cols() == 3 ? semi_legendrian_defect(s) : omega_annihilation(s);
}

inline std::vector<double> lift_row(const LiftSample& s) {
    Vec2c z = projected(s);
    cplx lam = base_slope(s).chart();  // +/-inf components on vertical slopes
    return {z[0].real(), z[0].imag(), z[1].real(), z[1].imag(),
            lam.real(), lam.imag(),   sample_defect(s)};
}

inline std::vector<double> dual_row(const DualSample& s) {
    double inf = std::numeric_limits<double>::infinity();
    std::vector<double> row{inf, inf, inf, inf, static_cast<double>(s.pi_rank)};
    if (s.d.chart_valid) {
        Vec4 c = dual_chart_vec(s.d);
        for (int i = 0; i < 4; ++i) row[i] = c[i];
    }
    return row;
}

}  // namespace io_detail

// ====== lift dumps ======
//
// CSV columns: base point in primary coordinates, slope chart, and the
// semi-legendrian defect of the sample.  PLY mirrors the same values as
// vertex properties (x, y, z, w) = (x1, x2, y1, y2).

inline void write_lift_csv(std::ostream& os, const std::vector<LiftSample>& samples) {
    os << "x1,x2,y1,y2,l1,l2,defect\n";
    for (const auto& s : samples) io_detail::csv_row(os, io_detail::lift_row(s));
}

inline void write_lift_ply(std::ostream& os, const std::vector<LiftSample>& samples) {
    io_detail::ply_header(os, samples.size(), {"x", "y", "z", "w", "l1", "l2", "defect"},
                          "cpdual lift cloud v1");
    for (const auto& s : samples) io_detail::ply_row(os, io_detail::lift_row(s));
}

// ====== dual cloud dumps ======
//
// CSV columns: dual chart of the sampled line and the rank of the projection
// pushforward at the sample.  Chartless samples (vertical tangent lines)
// emit inf chart fields and keep their rank.

inline void write_dual_csv(std::ostream& os, const DualCloud& cloud) {
    os << "l1,l2,m1,m2,pi_rank\n";
    for (const auto& s : cloud.samples) io_detail::csv_row(os, io_detail::dual_row(s));
}

inline void write_dual_ply(std::ostream& os, const DualCloud& cloud) {
    std::size_t charted = 0;
    for (const auto& s : cloud.samples) charted += s.d.chart_valid ? 1 : 0;
    io_detail::ply_header(os, charted, {"x", "y", "z", "w", "pi_rank"}, "cpdual dual cloud v1");
    for (const auto& s : cloud.samples)
        if (s.d.chart_valid) io_detail::ply_row(os, io_detail::dual_row(s));
}

// ====== census reports ======

inline nlohmann::ordered_json census_json(const CensusReport& rep) {
    nlohmann::ordered_json j;
    j["schema"] = "cpdual-census-v1";
    j["surface"] = rep.surface_id;
    j["classification"] = rep.classification;
    j["seed"] = rep.seed;
    j["multiple_counts"] = rep.multiple_counts;
    j["class_consistent"] = rep.class_consistent;
    j["boxes_used"] = rep.boxes_used;

    nlohmann::ordered_json lines = nlohmann::ordered_json::array();
    for (const auto& d : rep.lines) {
        Vec4 c = dual_chart_vec(d);
        lines.push_back({c[0], c[1], c[2], c[3]});
    }
    j["lines"] = std::move(lines);
    j["counts"] = rep.counts;
    j["region_of"] = rep.region_of;

    nlohmann::ordered_json regions = nlohmann::ordered_json::array();
    for (const auto& r : rep.regions)
        regions.push_back({{"count", r.count}, {"size", r.size},
                           {"representative", r.representative}});
    j["regions"] = std::move(regions);
    j["wall_samples"] = rep.wall_samples;

    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (const auto& kv : rep.histogram) hist[std::to_string(kv.first)] = kv.second;
    j["histogram"] = std::move(hist);
    return j;
}

inline void write_census_json(std::ostream& os, const CensusReport& rep) {
    os << census_json(rep).dump(2) << '\n';
}

// region representatives, one row per region, with the representative line
inline void write_regions_csv(std::ostream& os, const CensusReport& rep) {
    os << "region,count,size,line_index,l1,l2,m1,m2\n";
    for (std::size_t g = 0; g < rep.regions.size(); ++g) {
        const CensusRegion& r = rep.regions[g];
        Vec4 c = dual_chart_vec(rep.lines[r.representative]);
        os << g << ',' << r.count << ',' << r.size << ',' << r.representative << ','
           << fmt_g17(c[0]) << ',' << fmt_g17(c[1]) << ',' << fmt_g17(c[2]) << ','
           << fmt_g17(c[3]) << '\n';
    }
}

}  // namespace cpdual
