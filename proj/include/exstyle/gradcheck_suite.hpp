#pragma once

#include "exstyle/autograd.hpp"

namespace exstyle {

struct GradCheckResult {
    std::string name;
    double max_rel_error;
};

// Runs central finite-difference checks for every registered op at 10 random
// inputs each (eps = 1e-4) and for the training losses. Used by the tests,
// the `grad-check` subcommand, and the acceptance suite.
std::vector<GradCheckResult> run_op_gradient_suite(std::uint64_t seed);
std::vector<GradCheckResult> run_loss_gradient_suite(std::uint64_t seed);

}  // namespace exstyle
