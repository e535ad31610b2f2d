#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roadtagger {

struct GradCheckResult {
    int checked = 0;
    int skipped = 0;  // coordinates where the finite difference is unstable
    int failed = 0;
    std::vector<std::string> failures;

    bool ok() const { return failed == 0; }
};

// Central finite-difference validation (h = 1e-6, relative error < 1e-5) of
// every tape op over 20 random instances each, then of the full T=8 model
// on a 6-vertex graph with sampled parameter and input coordinates.
GradCheckResult run_gradient_checks(std::uint64_t seed);

}  // namespace roadtagger
