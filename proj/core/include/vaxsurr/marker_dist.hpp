#pragma once

// Nuisance laws of S(1) estimated from vaccine-arm data. The immunogenicity
// subcohort oversamples infected vaccinees, so stratum-wise (delta = 1 / 0)
// estimates are recombined with p11 = Pr(delta = 1 | V = 1):
//   p(s) = f11(s) p11 + f10(s) p10, and likewise for p(b) and p(s, b).

#include <optional>
#include <variant>
#include <vector>

#include "vaxsurr/dft_cox.hpp"

namespace vaxsurr {

struct StratumProbs {
  double p11 = 0.0;  // Pr(infected | vaccine)
  double p10 = 1.0;  // Pr(uninfected | vaccine)
};

StratumProbs estimate_stratum_probs(const Dataset& data);

// One IC_V member: its marker, BIP (if measured) and infection status.
struct MarkerObservation {
  double s = 0.0;
  std::optional<double> b;
  bool event = false;
};
using StratifiedSample = std::vector<MarkerObservation>;

StratifiedSample collect_ic_sample(const Dataset& data);

struct CategoricalMarkerLaw {
  std::vector<double> support;                   // s_1 < ... < s_J
  std::vector<double> bip_levels;                // b_1 < ... < b_L
  std::vector<double> marginal_pmf;              // J
  std::vector<std::vector<double>> conditional_pmf;  // L x J
  StratumProbs probs;
  StratifiedSample sample;  // IC_V observations the tables were built from

  // Row index of b in bip_levels; throws InputError for an unseen level.
  std::size_t level_index(double b) const;
};

struct NormalMarkerLaw {
  double mean_s = 0.0;
  double mean_b = 0.0;
  double var_s = 1.0;
  double var_b = 1.0;
  double rho = 0.0;
  bool has_bip = true;  // false when no B was measured (CPV-alone)

  double conditional_mean(double b) const;
  double conditional_var() const { return var_s * (1.0 - rho * rho); }
};

struct PointMass {
  double s0 = 0.0;
};

using MarkerDistribution = std::variant<CategoricalMarkerLaw, NormalMarkerLaw, PointMass>;

CategoricalMarkerLaw estimate_categorical(const Dataset& data);
NormalMarkerLaw estimate_normal(const Dataset& data);

}  // namespace vaxsurr
