// cpdual command line: exposes the library's operations on catalog surfaces
// and .surf files.  Subcommands are registered as the modules land.
//
// Exit codes: 0 success, 2 geometric precondition failure, 1 malformed
// input or I/O failure.

#include <cpdual/planes.hpp>
#include <cpdual/surfaces.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

using namespace cpdual;

std::vector<double> parse_reals(const std::string& text, std::size_t n, const char* what) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw CLI::ValidationError(what, "not a comma-separated list of reals: " + text);
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.size() != n)
        throw CLI::ValidationError(what, "expected " + std::to_string(n) + " reals, got " +
                                             std::to_string(out.size()));
    return out;
}

// common surface/plane source flags for the linear subcommands
struct PlaneSource {
    std::string plane;    // 8 reals: two spanning vectors of a real 2-plane
    std::string catalog;  // catalog name or graph:<file>
    std::string at;       // parameter point s,t

    void attach(CLI::App* cmd) {
        auto* p = cmd->add_option("--plane", plane,
                                  "two spanning vectors x1,x2,y1,y2,x1,x2,y1,y2");
        auto* c = cmd->add_option("--catalog", catalog, "catalog surface or graph:<file>");
        cmd->add_option("--at", at, "surface parameters s,t")->needs(c);
        p->excludes(c);
        c->excludes(p);
    }

    RealPlane2 resolve() const {
        if (!plane.empty()) {
            std::vector<double> v = parse_reals(plane, 8, "--plane");
            Vec4 a(v[0], v[1], v[2], v[3]), b(v[4], v[5], v[6], v[7]);
            return RealPlane2::from_frame(a, b);
        }
        if (catalog.empty())
            throw CLI::ValidationError("source", "one of --plane or --catalog is required");
        SurfacePatch s = make_catalog_surface(catalog);
        std::vector<double> v = parse_reals(at.empty() ? "0,0" : at, 2, "--at");
        return tangent_plane(s, Vec3(v[0], v[1], 0));
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical toolkit for slopes, lifts and duals of real surfaces in CP^2"};
    app.require_subcommand(1);

    PlaneSource angle_src;
    CLI::App* angle = app.add_subcommand("angle", "Wirtinger angle of a tangent plane");
    angle_src.attach(angle);

    PlaneSource circle_src;
    CLI::App* circle = app.add_subcommand("circle", "critical circle of a tangent plane");
    circle_src.attach(circle);

    try {
        app.parse(argc, argv);
        if (angle->parsed()) {
            std::printf("%.17g\n", wirtinger_angle(angle_src.resolve()));
        } else if (circle->parsed()) {
            SphereCircle k = critical_circle(circle_src.resolve());
            std::printf("A %.17g\nB %.17g %.17g\nD %.17g\n", k.A(), k.B().real(), k.B().imag(),
                        k.D());
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    } catch (const cpdual::geometry_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.code() == cpdual::errc::domain_error ? 1 : 2;
    } catch (const cpdual::parse_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
