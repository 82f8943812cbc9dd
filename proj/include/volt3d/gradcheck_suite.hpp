#pragma once

#include <string>
#include <vector>

#include "volt3d/gradcheck.hpp"

namespace volt3d {

struct SuiteEntry {
    GradCheckReport report;
    double threshold = 0;
};

// Finite-difference checks covering every layer exactly once (conv3d,
// maxpool3d, batchnorm, gap, dense, relu, sigmoid, dropout, bce) plus an
// end-to-end tiny model. Shapes are drawn from a fixed internal seed, so the
// suite is deterministic. `corrupt` names a layer whose reported gradient is
// deliberately perturbed — a harness-sensitivity hook; only "conv3d" is
// recognized.
std::vector<SuiteEntry> run_gradcheck_suite(const std::string& corrupt = "");

bool suite_passed(const std::vector<SuiteEntry>& entries);

} // namespace volt3d
