#include "vaxsurr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "vaxsurr/error.hpp"
#include "vaxsurr/quad.hpp"

namespace vaxsurr {
namespace {

constexpr int kCalibrationNodes = 61;

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

// Bisection for an increasing function on [lo, hi], on a log scale.
template <class F>
double solve_increasing(F&& f, double target, double lo, double hi, const char* what) {
  if (!(f(lo) <= target && f(hi) >= target)) {
    throw ConfigError(std::string("cannot bracket the ") + what + " calibration target");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (f(mid) < target) lo = mid; else hi = mid;
    if (hi / lo - 1.0 < 1e-15) break;
  }
  return std::sqrt(lo * hi);
}

// P(T < min(C, tau)) and P(C < min(T, tau)) for T ~ Exp(r), C ~ Exp(c).
double prob_event(double r, double c, double tau) {
  const double a = r + c;
  if (a == 0.0) return 0.0;
  return r / a * -std::expm1(-a * tau);
}
double prob_dropout(double r, double c, double tau) {
  const double a = r + c;
  if (a == 0.0) return 0.0;
  return c / a * -std::expm1(-a * tau);
}

struct RateModel {
  const ScenarioConfig& cfg;
  const GaussHermiteRule& rule = gauss_hermite_rule(kCalibrationNodes);

  double rate(double lambda0, int v, double s) const {
    const auto& b = cfg.beta_truth;
    return lambda0 * std::exp(v * b[0] + s * b[1] + v * s * b[2]);
  }

  template <class G>
  double expect(G&& g) const {
    const double sd = std::sqrt(cfg.marker_var);
    double out = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) out += rule.weights[q] * g(sd * rule.nodes[q]);
    return out;
  }

  double placebo_infections(double lambda0, double c) const {
    return cfg.n_placebo() * expect([&](double s) { return prob_event(rate(lambda0, 0, s), c, cfg.followup_years); });
  }

  double censored_fraction(double lambda0, double c) const {
    const double tau = cfg.followup_years;
    const double nv = cfg.n_vaccine(), np = cfg.n_placebo();
    return expect([&](double s) {
      return (nv * prob_dropout(rate(lambda0, 1, s), c, tau) + np * prob_dropout(rate(lambda0, 0, s), c, tau)) /
             (nv + np);
    });
  }
};

}  // namespace

std::string beta_label(const BetaTruth& beta) {
  if (beta == kBeta0) return "beta0";
  if (beta == kBeta4) return "beta4";
  if (beta == kBeta7) return "beta7";
  return "custom";
}

BetaTruth parse_beta_label(const std::string& label) {
  if (label == "beta0") return kBeta0;
  if (label == "beta4") return kBeta4;
  if (label == "beta7") return kBeta7;
  throw ConfigError("unknown beta label '" + label + "' (expected beta0, beta4 or beta7)");
}

void ScenarioConfig::validate() const {
  if (n_total < 4) throw ConfigError("field 'n_total': must be at least 4");
  if (!(marker_var > 0.0)) throw ConfigError("field 'marker_var': must be positive");
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("field 'rho': must lie in (-1, 1)");
  for (double b : beta_truth) {
    if (!std::isfinite(b)) throw ConfigError("field 'beta': coefficients must be finite");
  }
  if (!(followup_years > 0.0)) throw ConfigError("field 'followup_years': must be positive");
  if (n_intervals < 1) throw ConfigError("field 'n_intervals': must be >= 1");
  if (!(target_placebo_infections > 0.0 && target_placebo_infections < n_placebo())) {
    throw ConfigError("field 'target_placebo_infections': must lie in (0, n_placebo)");
  }
  if (!(censor_fraction >= 0.0 && censor_fraction < 1.0)) {
    throw ConfigError("field 'censor_fraction': must lie in [0, 1)");
  }
  design.validate();
}

double calibrate_baseline(const ScenarioConfig& config) {
  config.validate();
  const RateModel model{config};
  return solve_increasing([&](double l) { return model.placebo_infections(l, 0.0); },
                          config.target_placebo_infections, 1e-12, 1e3, "placebo infection");
}

CalibratedRates calibrate_rates(const ScenarioConfig& config) {
  config.validate();
  const RateModel model{config};
  CalibratedRates out;
  double lambda0 = calibrate_baseline(config);
  double c = 0.0;
  if (config.censor_fraction > 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double c_new = solve_increasing([&](double x) { return model.censored_fraction(lambda0, x); },
                                            config.censor_fraction, 1e-12, 1e3, "censoring");
      const double l_new = solve_increasing([&](double l) { return model.placebo_infections(l, c_new); },
                                            config.target_placebo_infections, 1e-12, 1e3, "placebo infection");
      const bool done = std::abs(c_new - c) <= 1e-14 * c_new && std::abs(l_new - lambda0) <= 1e-14 * l_new;
      c = c_new;
      lambda0 = l_new;
      if (done) break;
    }
  }
  out.baseline_hazard = lambda0;
  out.censoring_rate = c;
  out.expected_placebo_infections = model.placebo_infections(lambda0, c);
  out.expected_censored_fraction = model.censored_fraction(lambda0, c);
  return out;
}

GroupedTime group_time(double time, bool event, const TimeGrid& grid) {
  if (!(time > grid.time(1))) throw InputError("observed times must exceed the first visit time");
  const int K = grid.visit_count();
  if (!event && time >= grid.time(K)) return {K, false};
  return {grid.interval_of(time), event};
}

std::vector<GroupedTime> group_times(std::span<const double> times, std::span<const bool> events,
                                     const TimeGrid& grid) {
  if (times.size() != events.size()) throw InputError("times and events differ in length");
  std::vector<GroupedTime> out;
  out.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out.push_back(group_time(times[i], events[i], grid));
  return out;
}

SimulatedTrial simulate_trial(const ScenarioConfig& config) {
  return simulate_trial(config, calibrate_rates(config), config.seed);
}

SimulatedTrial simulate_trial(const ScenarioConfig& config, const CalibratedRates& rates, std::uint64_t seed) {
  config.validate();
  if (!(rates.baseline_hazard >= 0.0) || !(rates.censoring_rate >= 0.0)) {
    throw ConfigError("calibrated rates must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double sd = std::sqrt(config.marker_var);
  const double tau = config.followup_years;
  const double inf = std::numeric_limits<double>::infinity();
  const auto& b = config.beta_truth;

  SimulatedTrial out;
  out.rates = rates;
  out.full.grid = config.grid();
  out.full.w_dim = 0;
  out.full.subjects.reserve(static_cast<std::size_t>(config.n_total));
  out.continuous.subjects.reserve(static_cast<std::size_t>(config.n_total));
  for (int i = 0; i < config.n_total; ++i) {
    const int v = i < config.n_vaccine() ? 1 : 0;
    // Fixed draw order per subject: the (S, T, C) stream does not depend on rho.
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    const double u_event = 1.0 - unif(rng);  // (0, 1]
    const double u_drop = 1.0 - unif(rng);
    const double s = sd * z1;
    const double bip = sd * (config.rho * z1 + std::sqrt(1.0 - config.rho * config.rho) * z2);
    const double r = rates.baseline_hazard * std::exp(v * b[0] + s * b[1] + v * s * b[2]);
    const double t_event = r > 0.0 ? -std::log(u_event) / r : inf;
    const double t_drop = rates.censoring_rate > 0.0 ? -std::log(u_drop) / rates.censoring_rate : inf;
    const double x = std::min({t_event, t_drop, tau});
    const bool event = t_event <= std::min(t_drop, tau);
    if (event && v == 0) ++out.placebo_infections;
    if (!event && t_drop < tau) ++out.censored_before_end;

    const GroupedTime g = group_time(x, event, out.full.grid);
    SubjectRecord rec;
    rec.id = i + 1;
    rec.arm = v;
    rec.at_risk = true;
    rec.last_visit = g.last_visit;
    rec.event = g.event;
    rec.marker = s;
    rec.bip = bip;
    out.full.subjects.push_back(rec);

    ContinuousSubject c;
    c.id = rec.id;
    c.arm = v;
    c.time = x;
    c.event = event;
    c.marker = s;
    c.bip = bip;
    out.continuous.subjects.push_back(c);
  }
  return out;
}

namespace {

struct SubjectMask {
  bool keep_marker = false;
  bool keep_bip = false;
  std::optional<double> closeout;
};

std::vector<SubjectMask> compute_mask(const Dataset& full, const DesignSpec& design, std::uint64_t seed) {
  design.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_sd = std::sqrt(design.cpv_noise_var);
  std::vector<SubjectMask> mask;
  mask.reserve(full.subjects.size());
  for (const auto& s : full.subjects) {
    if (!s.marker || !s.bip) throw InputError("apply_design needs S1 and B on every subject of the full data");
    const double u_ic = unif(rng), u_bip = unif(rng), u_cpv = unif(rng), z = normal(rng);
    SubjectMask m;
    bool in_ic = false;
    if (s.arm == 1) {
      in_ic = s.event || u_ic < design.ic_uninfected_frac;
      m.keep_marker = in_ic;
    } else if (design.uses_cpv() && !s.event && u_cpv < design.cpv_frac) {
      in_ic = true;
      m.closeout = *s.marker + noise_sd * z;
    }
    const bool sampled_case = s.event && design.bip_on_all_cases;
    m.keep_bip = design.uses_bip() && (in_ic || sampled_case || u_bip < design.bip_extra_frac);
    mask.push_back(m);
  }
  return mask;
}

}  // namespace

Dataset apply_design(const Dataset& full, const DesignSpec& design, std::uint64_t seed) {
  const auto mask = compute_mask(full, design, seed);
  Dataset out = full;
  for (std::size_t i = 0; i < out.subjects.size(); ++i) {
    auto& s = out.subjects[i];
    if (!mask[i].keep_marker) s.marker.reset();
    if (!mask[i].keep_bip) s.bip.reset();
    s.closeout_marker = mask[i].closeout;
  }
  return out;
}

MaskedTrial apply_design(const SimulatedTrial& trial, const DesignSpec& design, std::uint64_t seed) {
  const auto mask = compute_mask(trial.full, design, seed);
  MaskedTrial out{trial.full, trial.continuous};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    auto& d = out.discrete.subjects[i];
    auto& c = out.continuous.subjects[i];
    if (!mask[i].keep_marker) {
      d.marker.reset();
      c.marker.reset();
    }
    if (!mask[i].keep_bip) {
      d.bip.reset();
      c.bip.reset();
    }
    d.closeout_marker = mask[i].closeout;
    c.closeout_marker = mask[i].closeout;
  }
  return out;
}

// ---- designs ----------------------------------------------------------------

DesignSpec DesignSpec::preset(DesignKind kind, MissingPattern missing) {
  DesignSpec d;
  d.kind = kind;
  d.missing = missing;
  const bool large = missing == MissingPattern::Large;
  d.ic_uninfected_frac = large ? 0.25 : 0.50;
  d.bip_extra_frac = large ? 0.25 : 0.375;
  d.cpv_frac = large ? 0.25 : 0.50;
  return d;
}

void DesignSpec::validate() const {
  if (!in_unit(ic_uninfected_frac)) throw ConfigError("field 'ic_uninfected_frac': must lie in [0, 1]");
  if (!in_unit(bip_extra_frac)) throw ConfigError("field 'bip_extra_frac': must lie in [0, 1]");
  if (!in_unit(cpv_frac)) throw ConfigError("field 'cpv_frac': must lie in [0, 1]");
  if (!(cpv_noise_var >= 0.0)) throw ConfigError("field 'cpv_noise_var': must be non-negative");
}

std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::Bip: return "BIP";
    case DesignKind::Cpv: return "CPV";
    case DesignKind::BipCpv: return "BIP+CPV";
  }
  return "?";
}

std::string to_string(MissingPattern missing) { return missing == MissingPattern::Large ? "Large" : "Medium"; }

DesignKind parse_design_kind(const std::string& text) {
  if (text == "BIP" || text == "bip") return DesignKind::Bip;
  if (text == "CPV" || text == "cpv") return DesignKind::Cpv;
  if (text == "BIP+CPV" || text == "bip+cpv" || text == "BIP_CPV" || text == "bip_cpv") return DesignKind::BipCpv;
  throw ConfigError("unknown design kind '" + text + "' (expected BIP, CPV or BIP+CPV)");
}

MissingPattern parse_missing_pattern(const std::string& text) {
  if (text == "Large" || text == "large") return MissingPattern::Large;
  if (text == "Medium" || text == "medium") return MissingPattern::Medium;
  throw ConfigError("unknown missing pattern '" + text + "' (expected Large or Medium)");
}

DesignKind infer_design(const Dataset& data) {
  bool any_sc = false, any_b = false;
  for (const auto& s : data.subjects) {
    any_sc = any_sc || s.closeout_marker.has_value();
    any_b = any_b || s.bip.has_value();
  }
  if (any_sc && any_b) return DesignKind::BipCpv;
  if (any_sc) return DesignKind::Cpv;
  return DesignKind::Bip;
}

void check_design(const Dataset& data, const DesignSpec& design) {
  for (const auto& s : data.subjects) {
    if (s.closeout_marker && !design.uses_cpv()) {
      throw InputError("subject " + std::to_string(s.id) + " has S^c but the design is " + to_string(design.kind));
    }
    if (s.bip && !design.uses_bip()) {
      throw InputError("subject " + std::to_string(s.id) + " has B but the design is " + to_string(design.kind));
    }
  }
}

}  // namespace vaxsurr
