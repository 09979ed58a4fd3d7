#pragma once

#include "emoq/gradcheck.hpp"

#include <string>
#include <vector>

namespace emoq {

struct GradSuiteEntry {
    std::string name;
    GradCheckResult result;
    bool passed = false;
};

struct GradSuiteReport {
    std::vector<GradSuiteEntry> entries;
    double tolerance = 1e-4;

    bool passed() const;
    std::vector<std::string> failures() const;
    std::string to_text() const;
};

/// Central-difference checks of every layer type plus an end-to-end model
/// with 4 queries, 8 text tokens and 2 Q-Former blocks.
GradSuiteReport run_gradient_suite(std::uint64_t seed = 7, double tolerance = 1e-4);

}  // namespace emoq
