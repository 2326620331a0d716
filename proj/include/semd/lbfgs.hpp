#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace semd {

// Evaluates f(x) and writes the gradient into `grad` (same length as x).
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
    std::size_t max_iterations = 1000;
    double gradient_tolerance = 1e-6;  // on the infinity norm
    std::size_t memory = 10;
    double armijo_c1 = 1e-4;
    double curvature_c2 = 0.9;
    std::size_t max_line_search_evals = 40;
};

enum class LbfgsStatus {
    converged,
    max_iterations,
    line_search_failed,
};

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    double gradient_inf_norm = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    LbfgsStatus status = LbfgsStatus::max_iterations;
    std::vector<double> value_history;  // f at x0 and after each accepted step
};

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// safeguarded cubic interpolation).
LbfgsResult minimize_lbfgs(const ObjectiveFn& objective, std::vector<double> x0,
                           const LbfgsOptions& options = {});

}  // namespace semd
