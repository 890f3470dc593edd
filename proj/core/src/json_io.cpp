#include "vaxsurr/json_io.hpp"

#include <cmath>
#include <set>

#include "vaxsurr/error.hpp"
#include "vaxsurr/seeding.hpp"

namespace vaxsurr {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("field '" + key + "': unknown field in " + where);
  }
}

// NaN and infinities become null.
json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json number_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": malformed JSON (" + e.what() + ")");
  }
}

double get_number(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_number()) throw ConfigError("field '" + field + "': expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError("field '" + field + "': must be finite");
  return x;
}

int get_int(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_number_integer()) throw ConfigError("field '" + field + "': expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("field '" + field + "': out of range");
  return static_cast<int>(x);
}

std::uint64_t get_uint(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError("field '" + field + "': expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_string()) throw ConfigError("field '" + field + "': expected a string");
  return v.get<std::string>();
}

json to_json(const DesignSpec& d) {
  return {{"kind", to_string(d.kind)},
          {"missing", to_string(d.missing)},
          {"ic_uninfected_frac", d.ic_uninfected_frac},
          {"bip_extra_frac", d.bip_extra_frac},
          {"cpv_frac", d.cpv_frac},
          {"cpv_noise_var", d.cpv_noise_var},
          {"bip_on_all_cases", d.bip_on_all_cases}};
}

DesignSpec design_from_json(const json& j) {
  reject_unknown(j,
                 {"kind", "missing", "ic_uninfected_frac", "bip_extra_frac", "cpv_frac", "cpv_noise_var",
                  "bip_on_all_cases"},
                 "design");
  DesignKind kind = DesignKind::Bip;
  MissingPattern missing = MissingPattern::Medium;
  try {
    if (j.contains("kind")) kind = parse_design_kind(get_string(j, "kind"));
    if (j.contains("missing")) missing = parse_missing_pattern(get_string(j, "missing"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("design: ") + e.what());
  }
  DesignSpec d = DesignSpec::preset(kind, missing);
  if (j.contains("ic_uninfected_frac")) d.ic_uninfected_frac = get_number(j, "ic_uninfected_frac");
  if (j.contains("bip_extra_frac")) d.bip_extra_frac = get_number(j, "bip_extra_frac");
  if (j.contains("cpv_frac")) d.cpv_frac = get_number(j, "cpv_frac");
  if (j.contains("cpv_noise_var")) d.cpv_noise_var = get_number(j, "cpv_noise_var");
  if (j.contains("bip_on_all_cases")) {
    if (!j.at("bip_on_all_cases").is_boolean()) throw ConfigError("field 'bip_on_all_cases': expected true or false");
    d.bip_on_all_cases = j.at("bip_on_all_cases").get<bool>();
  }
  d.validate();
  return d;
}

json to_json(const ScenarioConfig& c) {
  return {{"n_total", c.n_total},
          {"marker_var", c.marker_var},
          {"rho", c.rho},
          {"beta", c.beta_truth},
          {"followup_years", c.followup_years},
          {"n_intervals", c.n_intervals},
          {"target_placebo_infections", c.target_placebo_infections},
          {"censor_fraction", c.censor_fraction},
          {"design", to_json(c.design)},
          {"seed", c.seed}};
}

ScenarioConfig scenario_from_json(const json& j, ScenarioConfig c) {
  reject_unknown(j,
                 {"n_total", "marker_var", "rho", "beta", "followup_years", "n_intervals",
                  "target_placebo_infections", "censor_fraction", "design", "seed"},
                 "scenario config");
  if (j.contains("n_total")) c.n_total = get_int(j, "n_total");
  if (j.contains("marker_var")) c.marker_var = get_number(j, "marker_var");
  if (j.contains("rho")) c.rho = get_number(j, "rho");
  if (j.contains("beta")) {
    const auto& b = j.at("beta");
    if (b.is_string()) {
      c.beta_truth = parse_beta_label(b.get<std::string>());
    } else if (b.is_array() && b.size() == 3) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (!b[i].is_number()) throw ConfigError("field 'beta': expected three numbers");
        c.beta_truth[i] = b[i].get<double>();
      }
    } else {
      throw ConfigError("field 'beta': expected \"beta0\", \"beta4\", \"beta7\" or an array of three numbers");
    }
  }
  if (j.contains("followup_years")) c.followup_years = get_number(j, "followup_years");
  if (j.contains("n_intervals")) c.n_intervals = get_int(j, "n_intervals");
  if (j.contains("target_placebo_infections")) {
    c.target_placebo_infections = get_number(j, "target_placebo_infections");
  }
  if (j.contains("censor_fraction")) c.censor_fraction = get_number(j, "censor_fraction");
  if (j.contains("design")) c.design = design_from_json(j.at("design"));
  if (j.contains("seed")) c.seed = get_uint(j, "seed");
  c.validate();
  return c;
}

std::uint64_t config_hash(const ScenarioConfig& config) {
  json j = to_json(config);
  j.erase("seed");
  return fnv1a64(j.dump());
}

std::string config_hash_hex(const ScenarioConfig& config) {
  char buf[17];
  return std::string(hash_hex(config_hash(config), buf));
}

json to_json(const CoxParams& p) {
  return {{"beta1", p.beta1}, {"beta2", p.beta2}, {"beta3", p.beta3}, {"beta4", p.beta4}, {"lambda0", p.lambda0}};
}

json to_json(const MarkerDistribution& dist) {
  return std::visit(
      [](const auto& law) -> json {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, NormalMarkerLaw>) {
          return {{"type", "normal"},   {"mean_s", law.mean_s}, {"mean_b", law.mean_b}, {"var_s", law.var_s},
                  {"var_b", law.var_b}, {"rho", law.rho},       {"has_bip", law.has_bip}};
        } else if constexpr (std::is_same_v<T, CategoricalMarkerLaw>) {
          return {{"type", "categorical"},
                  {"support", law.support},
                  {"bip_levels", law.bip_levels},
                  {"marginal_pmf", law.marginal_pmf},
                  {"conditional_pmf", law.conditional_pmf},
                  {"p11", law.probs.p11},
                  {"p10", law.probs.p10}};
        } else {
          return {{"type", "point_mass"}, {"s0", law.s0}};
        }
      },
      dist);
}

json to_json(const FitResult& f) {
  return {{"params", to_json(f.params)},
          {"loglik", number(f.loglik)},
          {"converged", f.converged},
          {"iterations", f.iterations},
          {"gradient_norm", number(f.gradient_norm)},
          {"at_boundary", f.at_boundary},
          {"initial_loglik", number(f.initial_loglik)},
          {"ve_at_0", number(ve_curve(f.params.beta1, f.params.beta3, 0.0))}};
}

json to_json(const BootstrapResult& b) {
  json j = {{"n_requested", b.n_requested},
            {"n_converged", b.n_converged},
            {"seed", b.seed},
            {"se", number_array(b.se)},
            {"warning", b.warning ? json(*b.warning) : json(nullptr)}};
  return j;
}

json to_json(const SurrogateTest& t) {
  return {{"z", number(t.z)}, {"critical", number(t.critical)}, {"reject", t.reject}};
}

json to_json(const AcemResult& r) {
  const auto& s = r.state;
  return {{"beta", s.beta},
          {"loglik", number(r.loglik)},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"max_change", number(r.max_change)},
          {"n_imputed", r.n_imputed},
          {"n_em_subjects", r.n_em_subjects},
          {"calibration",
           {{"theta0", r.calibration.theta0},
            {"theta1", r.calibration.theta1},
            {"residual_var", number(r.calibration.residual_var)}}},
          {"n_mass_points", s.mass_points.size()},
          {"event_times", s.event_times},
          {"hazard_jumps", s.hazard_jumps}};
}

json to_json(const CalibratedRates& r) {
  return {{"baseline_hazard", r.baseline_hazard},
          {"censoring_rate", r.censoring_rate},
          {"expected_placebo_infections", r.expected_placebo_infections},
          {"expected_censored_fraction", r.expected_censored_fraction}};
}

}  // namespace vaxsurr
