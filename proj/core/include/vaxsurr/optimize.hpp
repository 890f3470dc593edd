#pragma once

#include <functional>
#include <span>
#include <vector>

namespace vaxsurr {

// Objective returns f(x) and writes its gradient into g.
using Objective = std::function<double(std::span<const double> x, std::span<double> g)>;

struct MinimizeOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the sup-norm of the gradient
  double max_step = 5.0;             // cap on the sup-norm of a trial step
};

struct MinimizeResult {
  std::vector<double> x;
  double f = 0.0;
  std::vector<double> gradient;
  double gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> f_trace;  // f after each accepted step (first entry: start)
};

// BFGS with a backtracking Armijo line search. The objective is minimized;
// every accepted step satisfies f_new <= f_old up to floating-point resolution.
MinimizeResult minimize_bfgs(const Objective& objective, std::vector<double> x0, const MinimizeOptions& opts = {});

}  // namespace vaxsurr
