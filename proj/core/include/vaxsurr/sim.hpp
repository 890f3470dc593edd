#pragma once

// Trial simulator: bivariate-normal (S(1), B), exponential event times from a
// continuous-time Cox model, independent exponential dropout, administrative
// censoring at the end of follow-up, grouping onto the visit grid, and
// design-based masking of S(1), B and S^c(1).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/design.hpp"
#include "vaxsurr/dft_cox.hpp"

namespace vaxsurr {

using BetaTruth = std::array<double, 3>;
inline constexpr BetaTruth kBeta0{-0.693, -1.109, 0.0};
inline constexpr BetaTruth kBeta4{-0.849, -1.109, -0.4};
inline constexpr BetaTruth kBeta7{-0.996, -1.109, -0.7};

// "beta0", "beta4", "beta7" or "custom".
std::string beta_label(const BetaTruth& beta);
BetaTruth parse_beta_label(const std::string& label);

struct ScenarioConfig {
  int n_total = 5000;  // split 1:1, vaccinees first
  double marker_var = 0.4;
  double rho = 0.9;
  BetaTruth beta_truth = kBeta7;
  double followup_years = 3.0;
  int n_intervals = 6;
  double target_placebo_infections = 334.0;
  double censor_fraction = 0.10;
  DesignSpec design;
  std::uint64_t seed = 1;

  int n_vaccine() const { return n_total / 2; }
  int n_placebo() const { return n_total - n_total / 2; }
  TimeGrid grid() const { return TimeGrid::uniform(followup_years, n_intervals); }
  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ScenarioConfig&) const = default;
};

// Constant baseline hazard solving
//   n_placebo * E_S[1 - exp(-lambda0 exp(beta2 S) followup)] = target.
double calibrate_baseline(const ScenarioConfig& config);

struct CalibratedRates {
  double baseline_hazard = 0.0;  // lambda0 of the continuous-time model
  double censoring_rate = 0.0;   // exponential dropout rate
  double expected_placebo_infections = 0.0;
  double expected_censored_fraction = 0.0;
};

// Joint calibration used by the simulator: dropout rate so that the expected
// fraction of subjects censored before follow-up end equals censor_fraction,
// and lambda0 so that the expected number of observed placebo infections
// equals the target in the presence of that dropout. Without dropout the
// hazard equals calibrate_baseline().
CalibratedRates calibrate_rates(const ScenarioConfig& config);

struct GroupedTime {
  int last_visit = 1;
  bool event = false;
};

// Event in (t_{k-1}, t_k] -> (k, 1); dropout in (t_{k-1}, t_k] -> (k, 0);
// observed through the end of follow-up -> (K, 0).
GroupedTime group_time(double time, bool event, const TimeGrid& grid);
std::vector<GroupedTime> group_times(std::span<const double> times, std::span<const bool> events,
                                     const TimeGrid& grid);

struct SimulatedTrial {
  Dataset full;                  // S1 and B on every subject (complete markers)
  ContinuousDataset continuous;  // same subjects, observed times X
  CalibratedRates rates;
  int placebo_infections = 0;
  int censored_before_end = 0;  // dropouts before follow-up end (events excluded)
};

SimulatedTrial simulate_trial(const ScenarioConfig& config);
SimulatedTrial simulate_trial(const ScenarioConfig& config, const CalibratedRates& rates, std::uint64_t seed);

Dataset apply_design(const Dataset& full, const DesignSpec& design, std::uint64_t seed);

struct MaskedTrial {
  Dataset discrete;
  ContinuousDataset continuous;
};
// Applies one mask to both the discrete and the continuous view.
MaskedTrial apply_design(const SimulatedTrial& trial, const DesignSpec& design, std::uint64_t seed);

}  // namespace vaxsurr
