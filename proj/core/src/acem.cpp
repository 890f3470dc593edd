#include "vaxsurr/acem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>

#include <Eigen/Dense>

#include "vaxsurr/error.hpp"

namespace vaxsurr {
namespace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Vec3 covariates(int v, double s) { return {double(v), s, v * s}; }

double eta_of(const std::array<double, 3>& b, int v, double s) { return b[0] * v + b[1] * s + b[2] * v * s; }

bool in_ic_v(const ContinuousSubject& s) { return s.at_risk && s.arm == 1 && s.marker.has_value(); }

// A subject (or group of identical EM subjects) as seen by the M-step.
struct Unit {
  double time = 0.0;
  bool event = false;
  int arm = 0;
  double mult = 1.0;
  std::optional<double> s;  // known (observed or imputed) marker
  int mass_index = -1;      // index into mass points when s is an observed IC_V value
  std::vector<double> w;    // posterior weights over mass points for EM units
  double mean_s = 0.0;      // sum_j w_j s_j
};

struct Problem {
  std::vector<Unit> units;  // sorted by time
  std::vector<double> mass_points;
  std::vector<double> mass_counts;  // IC_V counts per mass point
  double n_em = 0.0;
  double n_ic = 0.0;
  std::vector<double> event_times;  // distinct, increasing
  std::vector<double> event_counts;
};

// Breslow profile of the weighted full likelihood over beta: value, score,
// Hessian, and the implied baseline jumps.
struct Profile {
  double value = 0.0;
  Vec3 score = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();
  std::vector<double> jumps;
};

Profile profile(const Problem& P, const std::array<double, 3>& beta) {
  const std::size_t J = P.mass_points.size();
  std::array<std::vector<double>, 2> e;  // exp(eta) at each mass point, per arm
  for (int v = 0; v < 2; ++v) {
    e[v].resize(J);
    for (std::size_t j = 0; j < J; ++j) e[v][j] = std::exp(eta_of(beta, v, P.mass_points[j]));
  }

  Profile out;
  out.jumps.assign(P.event_times.size(), 0.0);
  double s0 = 0.0;
  Vec3 s1 = Vec3::Zero();
  Mat3 s2 = Mat3::Zero();
  // Walk units backwards in time; after absorbing all units with time >= t
  // the accumulated sums are the risk-set sums at t.
  std::size_t u = P.units.size();
  for (std::size_t k = P.event_times.size(); k-- > 0;) {
    const double t = P.event_times[k];
    while (u > 0 && P.units[u - 1].time >= t) {
      const Unit& x = P.units[--u];
      if (x.s) {
        const Vec3 z = covariates(x.arm, *x.s);
        const double r = x.mult * std::exp(eta_of(beta, x.arm, *x.s));
        s0 += r;
        s1 += r * z;
        s2 += r * z * z.transpose();
        if (x.event) {
          out.value += x.mult * eta_of(beta, x.arm, *x.s);
          out.score += x.mult * z;
        }
      } else {
        // z = (v, s, v s): the risk-set sums need only sum_j w e^eta s^k, k = 0..2.
        const auto& ev = e[x.arm];
        double m0 = 0.0, m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
          const double r = x.w[j] * ev[j];
          const double sj = P.mass_points[j];
          m0 += r;
          m1 += r * sj;
          m2 += r * sj * sj;
        }
        const double v = x.arm;
        m0 *= x.mult;
        m1 *= x.mult;
        m2 *= x.mult;
        s0 += m0;
        s1 += Vec3(v * m0, m1, v * m1);
        Mat3 add;
        add << v * m0, v * m1, v * m1,
               v * m1, m2, v * m2,
               v * m1, v * m2, v * m2;
        s2 += add;
        if (x.event) {
          out.value += x.mult * (beta[0] * v + (beta[1] + beta[2] * v) * x.mean_s);
          out.score += x.mult * Vec3(v, x.mean_s, v * x.mean_s);
        }
      }
    }
    const double d = P.event_counts[k];
    out.value -= d * std::log(s0);
    out.score -= d * s1 / s0;
    out.hessian -= d * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
    out.jumps[k] = d / s0;
  }
  // Units before the first event time only matter through their event terms,
  // and they have none (event times are the union of unit event times).
  return out;
}

std::vector<double> cumulative_at(const std::vector<double>& event_times, const std::vector<double>& jumps,
                                  const std::vector<Unit>& units) {
  std::vector<double> out(units.size());
  double cum = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    while (k < event_times.size() && event_times[k] <= units[i].time) cum += jumps[k++];
    out[i] = cum;
  }
  return out;
}

double log_jump_at(const Problem& P, const std::vector<double>& jumps, double t) {
  const auto it = std::lower_bound(P.event_times.begin(), P.event_times.end(), t);
  return std::log(jumps[static_cast<std::size_t>(it - P.event_times.begin())]);
}

// Observed-data log-likelihood with the baseline restricted to jumps at event times.
double observed_loglik(const Problem& P, const std::array<double, 3>& beta, const std::vector<double>& jumps,
                       const std::vector<double>& probs) {
  const auto cum = cumulative_at(P.event_times, jumps, P.units);
  const std::size_t J = P.mass_points.size();
  double ll = 0.0;
  for (std::size_t i = 0; i < P.units.size(); ++i) {
    const Unit& x = P.units[i];
    double li = x.event ? log_jump_at(P, jumps, x.time) : 0.0;
    if (x.s) {
      const double eta = eta_of(beta, x.arm, *x.s);
      li += (x.event ? eta : 0.0) - cum[i] * std::exp(eta);
      if (x.mass_index >= 0) li += std::log(probs[static_cast<std::size_t>(x.mass_index)]);
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> a(J);
      for (std::size_t j = 0; j < J; ++j) {
        const double eta = eta_of(beta, x.arm, P.mass_points[j]);
        a[j] = probs[j] > 0.0 ? std::log(probs[j]) + (x.event ? eta : 0.0) - cum[i] * std::exp(eta)
                              : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, a[j]);
      }
      double sum = 0.0;
      for (double aj : a) sum += std::exp(aj - mx);
      li += mx + std::log(sum);
    }
    ll += x.mult * li;
  }
  return ll;
}

void e_step(Problem& P, const std::array<double, 3>& beta, const std::vector<double>& jumps,
            const std::vector<double>& probs) {
  const auto cum = cumulative_at(P.event_times, jumps, P.units);
  const std::size_t J = P.mass_points.size();
  for (std::size_t i = 0; i < P.units.size(); ++i) {
    Unit& x = P.units[i];
    if (x.s) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < J; ++j) {
      const double eta = eta_of(beta, x.arm, P.mass_points[j]);
      x.w[j] = probs[j] > 0.0 ? std::log(probs[j]) + (x.event ? eta : 0.0) - cum[i] * std::exp(eta)
                              : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, x.w[j]);
    }
    double sum = 0.0;
    for (auto& wj : x.w) {
      wj = std::exp(wj - mx);
      sum += wj;
    }
    x.mean_s = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      x.w[j] /= sum;
      x.mean_s += x.w[j] * P.mass_points[j];
    }
  }
}

// Damped Newton on the profile; each accepted step increases the objective.
std::array<double, 3> m_step_beta(const Problem& P, std::array<double, 3> beta, int max_steps) {
  Profile cur = profile(P, beta);
  for (int it = 0; it < max_steps; ++it) {
    Eigen::LDLT<Mat3> ldlt(-cur.hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Vec3 step = ldlt.solve(cur.score);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h, scale *= 0.5) {
      std::array<double, 3> trial{beta[0] + scale * step[0], beta[1] + scale * step[1], beta[2] + scale * step[2]};
      Profile next = profile(P, trial);
      if (std::isfinite(next.value) && next.value >= cur.value) {
        beta = trial;
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted || (scale * step).cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return beta;
}

}  // namespace

void validate(const ContinuousDataset& data) {
  if (data.subjects.empty()) throw InputError("dataset has no subjects");
  std::set<std::int64_t> ids;
  for (const auto& s : data.subjects) {
    const std::string who = "subject " + std::to_string(s.id);
    if (!ids.insert(s.id).second) throw InputError(who + ": duplicate id");
    if (s.arm != 0 && s.arm != 1) throw InputError(who + ": arm must be 0 or 1");
    if (!(std::isfinite(s.time) && s.time > 0.0)) throw InputError(who + ": time must be finite and positive");
    for (const auto* m : {&s.marker, &s.closeout_marker, &s.bip}) {
      if (*m && !std::isfinite(**m)) throw InputError(who + ": markers must be finite");
    }
    if (s.closeout_marker && (s.arm != 0 || s.event)) {
      throw InputError(who + ": S^c is only defined for uninfected placebo recipients");
    }
  }
}

double AcemState::cumulative_hazard(double t) const {
  double cum = 0.0;
  for (std::size_t k = 0; k < event_times.size() && event_times[k] <= t; ++k) cum += hazard_jumps[k];
  return cum;
}

CalibrationModel fit_calibration(const ContinuousDataset& data) {
  double n = 0.0, sb = 0.0, ss = 0.0;
  for (const auto& s : data.subjects) {
    if (in_ic_v(s) && s.bip) {
      n += 1.0;
      sb += *s.bip;
      ss += *s.marker;
    }
  }
  if (n < 3.0) throw InputError("calibration needs at least 3 IC_V subjects with both S(1) and B");
  const double mb = sb / n, ms = ss / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : data.subjects) {
    if (in_ic_v(s) && s.bip) {
      sxx += (*s.bip - mb) * (*s.bip - mb);
      sxy += (*s.bip - mb) * (*s.marker - ms);
    }
  }
  if (!(sxx > 0.0)) throw EstimationError("B has zero variance among IC_V subjects; calibration is degenerate");
  CalibrationModel m;
  m.theta1 = sxy / sxx;
  m.theta0 = ms - m.theta1 * mb;
  double rss = 0.0;
  for (const auto& s : data.subjects) {
    if (in_ic_v(s) && s.bip) {
      const double r = *s.marker - m.predict(*s.bip);
      rss += r * r;
    }
  }
  m.residual_var = rss / (n - 2.0);
  return m;
}

BreslowEstimate breslow(std::span<const double> times, std::span<const bool> events,
                        std::span<const double> linear_predictors) {
  if (times.size() != events.size() || times.size() != linear_predictors.size()) {
    throw InputError("breslow: inputs differ in length");
  }
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] > times[b]; });
  BreslowEstimate out;
  double risk = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = times[order[i]];
    double d = 0.0;
    for (; i < order.size() && times[order[i]] == t; ++i) {
      risk += std::exp(linear_predictors[order[i]]);
      if (events[order[i]]) d += 1.0;
    }
    if (d > 0.0) {
      out.event_times.push_back(t);
      out.jumps.push_back(d / risk);
    }
  }
  std::reverse(out.event_times.begin(), out.event_times.end());
  std::reverse(out.jumps.begin(), out.jumps.end());
  return out;
}

namespace {

Problem build_problem(const ContinuousDataset& data, const std::optional<CalibrationModel>& calibration,
                      int* n_imputed) {
  Problem P;
  std::vector<double> ic_values;
  for (const auto& s : data.subjects) {
    if (in_ic_v(s)) ic_values.push_back(*s.marker);
  }
  P.mass_points = ic_values;
  std::sort(P.mass_points.begin(), P.mass_points.end());
  P.mass_points.erase(std::unique(P.mass_points.begin(), P.mass_points.end()), P.mass_points.end());
  P.mass_counts.assign(P.mass_points.size(), 0.0);
  const auto mass_index = [&](double s) {
    return static_cast<int>(std::lower_bound(P.mass_points.begin(), P.mass_points.end(), s) - P.mass_points.begin());
  };

  // EM subjects with the same (arm, event, time) share posterior weights.
  std::map<std::tuple<int, bool, double>, double> em_groups;
  int imputed = 0;
  for (const auto& s : data.subjects) {
    if (!s.at_risk) continue;
    Unit u;
    u.time = s.time;
    u.event = s.event;
    u.arm = s.arm;
    if (s.marker) {
      u.s = *s.marker;
      if (in_ic_v(s)) {
        u.mass_index = mass_index(*s.marker);
        P.mass_counts[static_cast<std::size_t>(u.mass_index)] += 1.0;
        P.n_ic += 1.0;
      }
    } else if (s.bip && calibration) {
      u.s = calibration->predict(*s.bip);
      ++imputed;
    } else {
      em_groups[{s.arm, s.event, s.time}] += 1.0;
      P.n_em += 1.0;
      continue;
    }
    P.units.push_back(std::move(u));
  }
  if (P.n_em > 0.0 && P.mass_points.empty()) {
    throw InputError("no observed S(1) values in IC_V: the mass-point set is empty");
  }
  for (const auto& [key, mult] : em_groups) {
    Unit u;
    std::tie(u.arm, u.event, u.time) = key;
    u.mult = mult;
    u.w.assign(P.mass_points.size(), 0.0);
    P.units.push_back(std::move(u));
  }
  std::stable_sort(P.units.begin(), P.units.end(), [](const Unit& a, const Unit& b) { return a.time < b.time; });
  for (const auto& u : P.units) {
    if (!u.event) continue;
    if (P.event_times.empty() || P.event_times.back() != u.time) {
      P.event_times.push_back(u.time);
      P.event_counts.push_back(0.0);
    }
    P.event_counts.back() += u.mult;
  }
  if (P.event_times.empty()) throw InputError("dataset has no events");
  if (n_imputed) *n_imputed = imputed;
  return P;
}

}  // namespace

AcemResult fit_acem(const ContinuousDataset& data, const AcemOptions& opts) {
  validate(data);
  for (const auto& s : data.subjects) {
    if (s.closeout_marker) {
      throw InputError("ACEM supports only the BIP-alone design; the data carry S^c(1) (subject " +
                       std::to_string(s.id) + ")");
    }
  }
  if (opts.max_iterations < 1 || !(opts.tolerance > 0.0)) throw ConfigError("invalid ACEM options");

  AcemResult res;
  bool any_b_only = false;
  for (const auto& s : data.subjects) any_b_only = any_b_only || (s.at_risk && !s.marker && s.bip);
  std::optional<CalibrationModel> calibration;
  if (opts.calibrate && any_b_only) {
    calibration = fit_calibration(data);
    res.calibration = *calibration;
  }
  Problem P = build_problem(data, calibration, &res.n_imputed);
  res.n_em_subjects = static_cast<int>(P.n_em);

  const std::size_t J = P.mass_points.size();
  AcemState& st = res.state;
  st.mass_points = P.mass_points;
  st.mass_probs.assign(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) st.mass_probs[j] = P.mass_counts[j] / P.n_ic;
  st.beta = {0.0, 0.0, 0.0};
  st.event_times = P.event_times;
  // Start from the Nelson-Aalen estimate; EM weights at beta = 0 equal p_j.
  double prior_mean = 0.0;
  for (std::size_t j = 0; j < J; ++j) prior_mean += st.mass_probs[j] * P.mass_points[j];
  for (auto& u : P.units) {
    if (!u.s) {
      u.w = st.mass_probs;
      u.mean_s = prior_mean;
    }
  }
  st.hazard_jumps = profile(P, st.beta).jumps;

  for (int it = 1; it <= opts.max_iterations; ++it) {
    if (P.n_em > 0.0) e_step(P, st.beta, st.hazard_jumps, st.mass_probs);
    const auto beta = m_step_beta(P, st.beta, opts.max_newton_steps);
    const auto jumps = profile(P, beta).jumps;
    std::vector<double> probs = st.mass_probs;
    if (P.n_em > 0.0) {
      std::vector<double> acc = P.mass_counts;
      for (const auto& u : P.units) {
        if (u.s) continue;
        for (std::size_t j = 0; j < J; ++j) acc[j] += u.mult * u.w[j];
      }
      for (std::size_t j = 0; j < J; ++j) probs[j] = acc[j] / (P.n_ic + P.n_em);
    }
    double change = 0.0;
    for (int c = 0; c < 3; ++c) change = std::max(change, std::abs(beta[c] - st.beta[c]));
    for (std::size_t j = 0; j < J; ++j) change = std::max(change, std::abs(probs[j] - st.mass_probs[j]));
    st.beta = beta;
    st.hazard_jumps = jumps;
    st.mass_probs = std::move(probs);
    st.iteration = it;
    res.iterations = it;
    res.max_change = change;
    res.loglik_trace.push_back(observed_loglik(P, st.beta, st.hazard_jumps, st.mass_probs));
    if (!std::isfinite(res.loglik_trace.back())) throw NumericError("ACEM log-likelihood became non-finite");
    if (change <= opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.loglik = res.loglik_trace.back();
  return res;
}

double acem_observed_loglik(const ContinuousDataset& data, const AcemState& state,
                            const std::optional<CalibrationModel>& calibration) {
  validate(data);
  const Problem P = build_problem(data, calibration, nullptr);
  if (P.mass_points != state.mass_points || P.event_times != state.event_times ||
      state.mass_probs.size() != state.mass_points.size() || state.hazard_jumps.size() != state.event_times.size()) {
    throw InputError("ACEM state does not match the dataset");
  }
  return observed_loglik(P, state.beta, state.hazard_jumps, state.mass_probs);
}

std::vector<std::vector<double>> acem_posterior_weights(const ContinuousDataset& data, const AcemState& state,
                                                        const std::optional<CalibrationModel>& calibration) {
  validate(data);
  Problem P = build_problem(data, calibration, nullptr);
  if (P.mass_points != state.mass_points || P.event_times != state.event_times) {
    throw InputError("ACEM state does not match the dataset");
  }
  e_step(P, state.beta, state.hazard_jumps, state.mass_probs);
  std::vector<std::vector<double>> out;
  for (const auto& s : data.subjects) {
    if (!s.at_risk || s.marker || (s.bip && calibration)) continue;
    for (const auto& u : P.units) {
      if (!u.s && u.arm == s.arm && u.event == s.event && u.time == s.time) {
        out.push_back(u.w);
        break;
      }
    }
  }
  return out;
}

}  // namespace vaxsurr
