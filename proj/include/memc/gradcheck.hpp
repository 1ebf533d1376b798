// Finite-difference verification suites for every analytic backward pass,
// exposed through the CLI. Each suite compares reverse-mode gradients against
// central differences on seeded random instances constructed to stay away
// from the non-differentiable points (relu kinks, floor/round boundaries).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace memc {

struct GradCheckSuite {
    std::string name;
    double max_rel_err;
    double threshold;
    bool pass;
};

struct GradCheckReport {
    std::vector<GradCheckSuite> suites;
    bool pass;
};

GradCheckReport run_gradcheck(std::uint64_t seed);

// Relative error with an absolute floor so that near-zero gradient pairs
// compare absolutely.
double gradient_rel_err(double analytic, double numeric, double floor = 1e-6);

} // namespace memc
