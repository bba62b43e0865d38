// Acceptance gate: one line per criterion, PASS or FAIL, nonzero exit on any
// failure.  Criteria are filled in as the corresponding modules land.

#include <cpdual/planes.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace {

struct Criterion {
    std::string label;
    std::function<bool(std::string&)> run;
};

int run_all(const std::vector<Criterion>& cs) {
    int failures = 0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = cs[i].run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %zu: %s%s%s\n", ok ? "PASS" : "FAIL", i + 1,
                    cs[i].label.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
        if (!ok) ++failures;
    }
    return failures;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria;

    if (criteria.empty()) {
        std::printf("no acceptance criteria registered yet\n");
        return 77;  // ctest skip code until the suite is populated
    }

    int failures = run_all(criteria);
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
