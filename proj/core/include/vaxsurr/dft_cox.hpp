#pragma once

// Discrete-failure-time Cox model: data records, parameters and the
// per-subject likelihood building blocks.
//
// Visits t_1 < ... < t_K. Failure interval k (2 <= k <= K) is (t_{k-1}, t_k].
// The per-interval baseline hazard lambda_k lies in (0, 1); the model uses the
// grouped-survival form P(survive interval k | eta) = (1 - lambda_k)^exp(eta),
// i.e. proportional hazards on dLambda_0(t_k) = -log(1 - lambda_k).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace vaxsurr {

class TimeGrid {
 public:
  TimeGrid() : TimeGrid(std::vector<double>{0.0, 1.0}) {}
  explicit TimeGrid(std::vector<double> visit_times);

  // t_1 = 0 followed by n_intervals equal-length failure intervals.
  static TimeGrid uniform(double followup, int n_intervals);

  int visit_count() const { return static_cast<int>(times_.size()); }
  int interval_count() const { return visit_count() - 1; }
  std::span<const double> times() const { return times_; }
  double time(int visit) const { return times_.at(static_cast<std::size_t>(visit - 1)); }

  // Visit index k with t in (t_{k-1}, t_k]; 1 for t <= t_1; K for t > t_K.
  int interval_of(double t) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> times_;
};

struct SubjectRecord {
  std::int64_t id = 0;
  int arm = 0;               // V: 1 vaccine, 0 placebo
  bool at_risk = true;       // R: at risk at t_1
  int last_visit = 1;        // M in 1..K
  bool event = false;        // delta
  std::optional<double> marker;           // S(1), vaccinees in IC_V
  std::optional<double> closeout_marker;  // S^c(1), uninfected placebos in IC_P
  std::optional<double> bip;              // B, baseline irrelevant predictor
  std::vector<double> covariates;         // W

  bool operator==(const SubjectRecord&) const = default;
};

// Observed: the trial-data invariants (S1 only on vaccinees).
// Complete: simulator truth where every at-risk subject carries S1.
enum class MarkerMode { Observed, Complete };

struct Dataset {
  std::vector<SubjectRecord> subjects;
  TimeGrid grid;
  int w_dim = 0;

  bool operator==(const Dataset&) const = default;
};

// Throws InputError naming the first violated invariant.
void validate(const Dataset& data, MarkerMode mode = MarkerMode::Observed);
MarkerMode infer_marker_mode(const Dataset& data);

struct CoxParams {
  double beta1 = 0.0;  // vaccine main effect
  double beta2 = 0.0;  // marker main effect
  double beta3 = 0.0;  // marker x vaccine interaction
  std::vector<double> beta4;    // covariate effects, length w_dim
  std::vector<double> lambda0;  // lambda_{0k}, k = 2..K (index k - 2)

  double baseline_hazard(int k) const;
  int visit_count() const { return static_cast<int>(lambda0.size()) + 1; }

  // Throws InputError if dimensions disagree or any lambda is outside (0, 1).
  void validate(int w_dim, int visit_count) const;

  bool operator==(const CoxParams&) const = default;
};

enum class ObservationClass {
  Complete,  // L1: S(1) measured
  Closeout,  // L2: S^c(1) used in lieu of S(1)
  BipOnly,   // L3: integrate over S | B
  Missing,   // L4: integrate over the marginal law of S
};

ObservationClass classify(const SubjectRecord& subject);
const char* to_string(ObservationClass c);

double linear_predictor(const CoxParams& params, int v, double s, std::span<const double> w);

// log P(survive interval k | eta) = exp(eta) * log(1 - lambda_k).
double interval_log_survival(const CoxParams& params, int k, double eta);
double conditional_survival(const CoxParams& params, int k, double eta);

// VE(s1) = 1 - exp(beta1 + s1 * beta3).
double ve_curve(double beta1, double beta3, double s1);

// log L1 (or L2 when s_effective is the closeout marker).
double loglik_complete(const SubjectRecord& subject, double s_effective, const CoxParams& params);

}  // namespace vaxsurr
