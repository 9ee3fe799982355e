#pragma once

#include <functional>
#include <string>

#include "vlt/nn.hpp"

namespace vlt {

struct GradCheckResult {
    std::size_t total = 0;     // parameter elements checked
    std::size_t rel_pass = 0;  // within relative tolerance (or abs floor)
    double max_rel_err = 0.0;
    double max_abs_err_of_failures = 0.0;  // worst |analytic - fd| among relative failures
    std::vector<std::string> failures;     // "name[j]: analytic=..., fd=..."

    // Criterion form: >= frac of elements inside the relative tolerance and
    // every remaining one inside abs_cap.
    bool pass(double frac, double abs_cap) const {
        if (total == 0) return false;
        const double ratio = static_cast<double>(rel_pass) / static_cast<double>(total);
        return ratio >= frac && max_abs_err_of_failures <= abs_cap;
    }
};

// Central finite differences of loss_fn against the gradients already stored
// on the parameters. loss_fn must be a pure function of the parameter values
// (run without an active tape).
GradCheckResult check_gradients(const ParamRegistry& params, const std::function<double()>& loss_fn,
                                double step = 1e-5, double rel_tol = 1e-4, double abs_floor = 1e-7);

// Builds the small reference model (C=8, heads=2, N_q=2, 2x2 feature grid,
// 3-word sentence), differentiates the BCE training loss and checks every
// parameter. Used by the grad-check CLI command and the acceptance suite.
GradCheckResult run_model_grad_check(std::uint64_t seed);

}  // namespace vlt
