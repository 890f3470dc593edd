#pragma once

// Shared per-node kernel of the grouped-survival likelihood. Internal header.

#include <cmath>

namespace vaxsurr::detail {

// -log(1 - lambda) for lambda in (0, 1).
inline double hazard_increment(double lambda) { return -std::log1p(-lambda); }

// log of the L1-form product for a subject with hazard multiplier u = exp(eta):
//   survive intervals 2..M-1, then event (delta = 1) or survive (delta = 0) at M.
// cum_before = sum_{j=2}^{M-1} dLambda_j, at_last = dLambda_M.
struct NodeTerms {
  double loglik;
  double d_eta;        // d loglik / d eta
  double d_cum;        // d loglik / d dLambda_j for every j < M
  double d_last;       // d loglik / d dLambda_M
};

inline NodeTerms node_terms(double u, double cum_before, double at_last, bool event) {
  if (!event) {
    const double l = -u * (cum_before + at_last);
    return {l, l, -u, -u};
  }
  const double a = u * at_last;
  // log(1 - exp(-a)) computed without cancellation.
  const double log_event = std::log(-std::expm1(-a));
  const double ratio = a / std::expm1(a);  // a e^{-a} / (1 - e^{-a})
  return {-u * cum_before + log_event, -u * cum_before + ratio, -u, u / std::expm1(a)};
}

}  // namespace vaxsurr::detail
