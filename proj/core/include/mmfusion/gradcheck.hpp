#pragma once

#include <string>
#include <vector>

#include "mmfusion/fusion.hpp"

namespace mmf {

struct GradCheckResult {
    std::string op;
    double max_rel_error = 0.0;
    bool pass = false;
};

struct GradCheckOptions {
    std::size_t n_seeds = 5;
    double tolerance = 1e-4;
    double absolute_floor = 1e-6;
    double fd_step = 1e-5;
    // Adds a fixture op with a deliberately wrong backward; used to verify
    // that the harness actually catches broken gradients.
    bool include_broken_fixture = false;
};

// Checks reverse-mode gradients of every differentiable op kind against
// central finite differences. One result per op kind.
std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& options = {});

} // namespace mmf
