#include "vaxsurr/dft_cox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "kernel.hpp"
#include "vaxsurr/error.hpp"

namespace vaxsurr {

TimeGrid::TimeGrid(std::vector<double> visit_times) : times_(std::move(visit_times)) {
  if (times_.size() < 2) {
    throw InputError("time grid needs at least 2 visits");
  }
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i])) {
      throw InputError("time grid contains a non-finite visit time");
    }
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      throw InputError("visit times must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(double followup, int n_intervals) {
  if (n_intervals < 1 || !(followup > 0.0)) {
    throw InputError("uniform grid needs followup > 0 and at least one interval");
  }
  std::vector<double> t(static_cast<std::size_t>(n_intervals) + 1);
  for (int k = 0; k <= n_intervals; ++k) {
    t[static_cast<std::size_t>(k)] = followup * k / n_intervals;
  }
  t.back() = followup;
  return TimeGrid(std::move(t));
}

int TimeGrid::interval_of(double t) const {
  if (t <= times_.front()) return 1;
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end()) return visit_count();
  return static_cast<int>(it - times_.begin()) + 1;
}

void validate(const Dataset& data, MarkerMode mode) {
  const int K = data.grid.visit_count();
  if (data.w_dim < 0) throw InputError("w_dim must be non-negative");
  std::unordered_set<std::int64_t> ids;
  ids.reserve(data.subjects.size());
  for (const auto& s : data.subjects) {
    const std::string who = "subject " + std::to_string(s.id) + ": ";
    if (!ids.insert(s.id).second) throw InputError(who + "duplicate id");
    if (s.arm != 0 && s.arm != 1) throw InputError(who + "V must be 0 or 1");
    if (s.last_visit < 1 || s.last_visit > K) {
      throw InputError(who + "M must lie in 1.." + std::to_string(K));
    }
    if (s.event && s.last_visit < 2) throw InputError(who + "an event requires M >= 2");
    if (static_cast<int>(s.covariates.size()) != data.w_dim) {
      throw InputError(who + "covariate count differs from w_dim");
    }
    if (s.marker && s.closeout_marker) throw InputError(who + "has both S1 and Sc");
    if (s.marker && !s.at_risk) throw InputError(who + "S1 present but R = 0");
    if (s.marker && s.arm != 1 && mode == MarkerMode::Observed) {
      throw InputError(who + "S1 present on a placebo recipient");
    }
    if (s.closeout_marker && (s.arm != 0 || s.event || !s.at_risk)) {
      throw InputError(who + "Sc requires V = 0, delta = 0 and R = 1");
    }
    if (mode == MarkerMode::Complete && s.at_risk && !s.marker) {
      throw InputError(who + "complete-marker data requires S1 on every at-risk subject");
    }
    for (double v : {s.marker.value_or(0.0), s.closeout_marker.value_or(0.0), s.bip.value_or(0.0)}) {
      if (!std::isfinite(v)) throw InputError(who + "non-finite marker value");
    }
  }
}

MarkerMode infer_marker_mode(const Dataset& data) {
  const bool placebo_marker = std::any_of(data.subjects.begin(), data.subjects.end(),
                                          [](const SubjectRecord& s) { return s.arm == 0 && s.marker; });
  return placebo_marker ? MarkerMode::Complete : MarkerMode::Observed;
}

double CoxParams::baseline_hazard(int k) const {
  if (k < 2 || k > visit_count()) {
    throw InputError("interval index " + std::to_string(k) + " outside 2.." + std::to_string(visit_count()));
  }
  return lambda0[static_cast<std::size_t>(k - 2)];
}

void CoxParams::validate(int w_dim, int K) const {
  if (static_cast<int>(beta4.size()) != w_dim) throw InputError("beta4 length differs from w_dim");
  if (static_cast<int>(lambda0.size()) != K - 1) {
    throw InputError("lambda0 must hold K - 1 = " + std::to_string(K - 1) + " hazards");
  }
  for (double l : lambda0) {
    if (!(l > 0.0 && l < 1.0)) throw InputError("baseline hazards must lie strictly in (0, 1)");
  }
  for (double b : {beta1, beta2, beta3}) {
    if (!std::isfinite(b)) throw InputError("non-finite regression coefficient");
  }
}

ObservationClass classify(const SubjectRecord& subject) {
  if (subject.marker) return ObservationClass::Complete;
  if (subject.closeout_marker) return ObservationClass::Closeout;
  if (subject.bip) return ObservationClass::BipOnly;
  return ObservationClass::Missing;
}

const char* to_string(ObservationClass c) {
  switch (c) {
    case ObservationClass::Complete: return "L1";
    case ObservationClass::Closeout: return "L2";
    case ObservationClass::BipOnly: return "L3";
    case ObservationClass::Missing: return "L4";
  }
  return "?";
}

double linear_predictor(const CoxParams& params, int v, double s, std::span<const double> w) {
  if (w.size() != params.beta4.size()) {
    throw InputError("covariate vector length " + std::to_string(w.size()) + " differs from beta4 length " +
                     std::to_string(params.beta4.size()));
  }
  double eta = v * params.beta1 + s * params.beta2 + v * s * params.beta3;
  for (std::size_t i = 0; i < w.size(); ++i) eta += w[i] * params.beta4[i];
  return eta;
}

double interval_log_survival(const CoxParams& params, int k, double eta) {
  const double lambda = params.baseline_hazard(k);
  if (eta == -std::numeric_limits<double>::infinity()) return 0.0;
  return std::exp(eta) * std::log1p(-lambda);
}

double conditional_survival(const CoxParams& params, int k, double eta) {
  return std::exp(interval_log_survival(params, k, eta));
}

double ve_curve(double beta1, double beta3, double s1) {
  // 0.0 - x rather than -x so a null effect prints as 0, not -0.
  return 0.0 - std::expm1(beta1 + s1 * beta3);
}

double loglik_complete(const SubjectRecord& subject, double s_effective, const CoxParams& params) {
  if (!subject.at_risk) throw InputError("subject " + std::to_string(subject.id) + " is not at risk at t1");
  const int m = subject.last_visit;
  if (m < 1 || m > params.visit_count()) throw InputError("last visit outside the parameter grid");
  if (m == 1) {
    if (subject.event) throw InputError("an event requires M >= 2");
    return 0.0;
  }
  double cum_before = 0.0;
  for (int j = 2; j < m; ++j) cum_before += detail::hazard_increment(params.baseline_hazard(j));
  const double at_last = detail::hazard_increment(params.baseline_hazard(m));
  const double u = std::exp(linear_predictor(params, subject.arm, s_effective, subject.covariates));
  const double value = detail::node_terms(u, cum_before, at_last, subject.event).loglik;
  if (!std::isfinite(value)) {
    throw NumericError("non-finite L1 contribution for subject " + std::to_string(subject.id));
  }
  return value;
}

}  // namespace vaxsurr
