#pragma once

// Approximate calibration-based EM (ACEM) for continuous failure times under
// the BIP-alone design: regression calibration for subjects with a measured
// BIP, semiparametric EM over observed marker mass points for subjects with
// neither marker nor BIP, Breslow-type baseline updates.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace vaxsurr {

struct ContinuousSubject {
  std::int64_t id = 0;
  int arm = 0;
  bool at_risk = true;
  double time = 0.0;  // observed time X (years)
  bool event = false;
  std::optional<double> marker;
  std::optional<double> closeout_marker;
  std::optional<double> bip;

  bool operator==(const ContinuousSubject&) const = default;
};

struct ContinuousDataset {
  std::vector<ContinuousSubject> subjects;

  bool operator==(const ContinuousDataset&) const = default;
};

void validate(const ContinuousDataset& data);

// S(1) = theta0 + theta1 * B + eps, fitted by least squares on IC_V pairs.
struct CalibrationModel {
  double theta0 = 0.0;
  double theta1 = 0.0;
  double residual_var = 0.0;

  double predict(double b) const { return theta0 + theta1 * b; }
};

CalibrationModel fit_calibration(const ContinuousDataset& data);

struct AcemOptions {
  int max_iterations = 500;
  double tolerance = 1e-6;  // max |change| in (beta, p)
  int max_newton_steps = 25;
  bool calibrate = true;  // false: BIP-only subjects are handled by the EM as fully missing
};

struct AcemState {
  std::array<double, 3> beta{};
  std::vector<double> event_times;   // distinct event times, increasing
  std::vector<double> hazard_jumps;  // dLambda_0 at event_times
  std::vector<double> mass_points;   // distinct observed S(1) values
  std::vector<double> mass_probs;
  int iteration = 0;

  // Lambda_0(t): sum of jumps at event times <= t.
  double cumulative_hazard(double t) const;
};

struct AcemResult {
  AcemState state;
  CalibrationModel calibration;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double max_change = 0.0;
  int n_imputed = 0;
  int n_em_subjects = 0;
  std::vector<double> loglik_trace;  // observed-data log-likelihood per iteration
};

AcemResult fit_acem(const ContinuousDataset& data, const AcemOptions& opts = {});

// Observed-data log-likelihood at a given state (calibrated subjects use the
// imputed marker as if observed).
double acem_observed_loglik(const ContinuousDataset& data, const AcemState& state,
                            const std::optional<CalibrationModel>& calibration);

// E-step posterior weights over the mass points for each subject handled by
// the EM (neither S(1) nor, when calibrating, B), in dataset order.
std::vector<std::vector<double>> acem_posterior_weights(const ContinuousDataset& data, const AcemState& state,
                                                        const std::optional<CalibrationModel>& calibration);

// Breslow jumps dLambda(t) = d(t) / sum_{X_i >= t} exp(eta_i) at distinct event times.
struct BreslowEstimate {
  std::vector<double> event_times;
  std::vector<double> jumps;
};
BreslowEstimate breslow(std::span<const double> times, std::span<const bool> events,
                        std::span<const double> linear_predictors);

}  // namespace vaxsurr
