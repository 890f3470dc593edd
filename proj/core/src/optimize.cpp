#include "vaxsurr/optimize.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "vaxsurr/error.hpp"

namespace vaxsurr {
namespace {

using Vec = Eigen::VectorXd;

struct Evaluation {
  double f = std::numeric_limits<double>::infinity();
  Vec g;
  bool ok = false;
};

Evaluation evaluate(const Objective& objective, const Vec& x) {
  Evaluation e;
  e.g = Vec::Zero(x.size());
  try {
    e.f = objective(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                    std::span<double>(e.g.data(), static_cast<std::size_t>(e.g.size())));
    e.ok = std::isfinite(e.f) && e.g.allFinite();
  } catch (const NumericError&) {
    e.ok = false;
  }
  return e;
}

}  // namespace

MinimizeResult minimize_bfgs(const Objective& objective, std::vector<double> x0, const MinimizeOptions& opts) {
  const auto n = static_cast<Eigen::Index>(x0.size());
  Vec x = Eigen::Map<const Vec>(x0.data(), n);
  MinimizeResult out;

  Evaluation cur = evaluate(objective, x);
  out.evaluations = 1;
  if (!cur.ok) throw InputError("objective is not finite at the starting point");
  out.f_trace.push_back(cur.f);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool identity = true;
  bool scaled = false;
  constexpr double kArmijo = 1e-4;

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const double gnorm = cur.g.cwiseAbs().maxCoeff();
    if (gnorm <= opts.gradient_tolerance) break;

    Vec p = -H * cur.g;
    double slope = cur.g.dot(p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      identity = true;
      p = -cur.g;
      slope = cur.g.dot(p);
    }
    const double pmax = p.cwiseAbs().maxCoeff();
    if (pmax > opts.max_step) {
      p *= opts.max_step / pmax;
      slope = cur.g.dot(p);
    }

    double alpha = 1.0;
    bool accepted = false;
    Evaluation next;
    Vec x_new;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + alpha * p;
      next = evaluate(objective, x_new);
      ++out.evaluations;
      if (next.ok) {
        if (next.f <= cur.f + kArmijo * alpha * slope) {
          accepted = true;
          break;
        }
        // Predicted decrease below the resolution of f: judge by the gradient.
        const double resolution = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur.f));
        if (std::abs(alpha * slope) < resolution && next.f <= cur.f + resolution &&
            next.g.cwiseAbs().maxCoeff() < gnorm) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (identity) break;
      H.setIdentity();
      identity = true;
      continue;
    }

    const Vec s = x_new - x;
    const Vec y = next.g - cur.g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vec Hy = H * y;
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
      identity = false;
    }
    x = x_new;
    cur = std::move(next);
    out.f_trace.push_back(cur.f);
  }

  out.iterations = it;
  out.x.assign(x.data(), x.data() + n);
  out.f = cur.f;
  out.gradient.assign(cur.g.data(), cur.g.data() + n);
  out.gradient_norm = n > 0 ? cur.g.cwiseAbs().maxCoeff() : 0.0;
  out.converged = out.gradient_norm <= opts.gradient_tolerance;
  return out;
}

}  // namespace vaxsurr
