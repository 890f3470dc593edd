#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "vaxsurr/dft_cox.hpp"
#include "vaxsurr/marker_dist.hpp"

namespace vaxsurr::testing {

inline SubjectRecord subject(std::int64_t id, int v, int m, bool event, std::optional<double> s = std::nullopt,
                             std::optional<double> b = std::nullopt, std::optional<double> sc = std::nullopt) {
  SubjectRecord r;
  r.id = id;
  r.arm = v;
  r.last_visit = m;
  r.event = event;
  r.marker = s;
  r.bip = b;
  r.closeout_marker = sc;
  return r;
}

inline CoxParams params(double b1, double b2, double b3, std::vector<double> lambda) {
  CoxParams p;
  p.beta1 = b1;
  p.beta2 = b2;
  p.beta3 = b3;
  p.lambda0 = std::move(lambda);
  return p;
}

// Straight-line log L1: product over visits, no shared helpers.
inline double direct_complete(const SubjectRecord& r, double s, const CoxParams& p) {
  double eta = p.beta1 * r.arm + p.beta2 * s + p.beta3 * r.arm * s;
  for (std::size_t k = 0; k < r.covariates.size(); ++k) eta += p.beta4[k] * r.covariates[k];
  double like = 1.0;
  for (int j = 2; j <= r.last_visit; ++j) {
    const double surv = std::pow(1.0 - p.lambda0[static_cast<std::size_t>(j - 2)], std::exp(eta));
    like *= (j == r.last_visit && r.event) ? 1.0 - surv : surv;
  }
  return std::log(like);
}

// Mixed-class dataset: vaccinees with and without S, placebos with B, Sc or nothing.
inline Dataset mixed_dataset(int n, std::uint64_t seed, int K = 5, bool with_closeout = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> visit(2, K);
  Dataset d;
  std::vector<double> times;
  for (int k = 0; k < K; ++k) times.push_back(k);
  d.grid = TimeGrid(times);
  for (int i = 0; i < n; ++i) {
    const int v = i % 2;
    const double s = 0.63 * z(rng);
    const double b = 0.9 * s + 0.27 * z(rng);
    const bool event = u(rng) < 0.25;
    const int m = event ? visit(rng) : (u(rng) < 0.8 ? K : visit(rng));
    SubjectRecord r = subject(i + 1, v, m, event);
    const double draw = u(rng);
    if (v == 1) {
      if (event || draw < 0.4) r.marker = s;
      if (r.marker || draw < 0.7) r.bip = b;
    } else {
      if (with_closeout && !event && draw < 0.3) {
        r.closeout_marker = s;
      } else if (draw < 0.7 || event) {
        r.bip = b;
      }
    }
    d.subjects.push_back(r);
  }
  return d;
}

}  // namespace vaxsurr::testing
