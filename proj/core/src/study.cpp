#include "vaxsurr/study.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/dataset_io.hpp"
#include "vaxsurr/error.hpp"
#include "vaxsurr/json_io.hpp"
#include "vaxsurr/parallel.hpp"
#include "vaxsurr/seeding.hpp"

namespace vaxsurr {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kGoldStream = 0x601d;
constexpr std::uint64_t kBootStream = 0xb007;

std::uint64_t design_key(const DesignSpec& d) { return fnv1a64(to_json(d).dump()); }

std::array<double, 3> sample_sd(const std::vector<std::array<double, 3>>& xs) {
  std::array<double, 3> out{kNaN, kNaN, kNaN};
  if (xs.size() < 2) return out;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (const auto& x : xs) mean += x[c];
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (const auto& x : xs) ss += (x[c] - mean) * (x[c] - mean);
    out[c] = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

std::array<double, 3> betas(const CoxParams& p) { return {p.beta1, p.beta2, p.beta3}; }

FitOptions fit_options(const StudyConfig& cfg) {
  FitOptions opts;
  opts.nuisance = cfg.nuisance;
  opts.engine = cfg.nuisance == NuisanceModel::Categorical ? IntegrationEngine::exact_categorical()
                                                           : IntegrationEngine::gauss_hermite(cfg.nodes);
  return opts;
}

ContinuousDataset resample_continuous(const ContinuousDataset& data, std::mt19937_64& rng) {
  std::array<std::vector<const ContinuousSubject*>, 2> arms;
  for (const auto& s : data.subjects) arms[s.arm == 1 ? 1 : 0].push_back(&s);
  ContinuousDataset out;
  out.subjects.reserve(data.subjects.size());
  std::int64_t id = 1;
  for (const auto& arm : arms) {
    if (arm.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, arm.size() - 1);
    for (std::size_t i = 0; i < arm.size(); ++i) {
      ContinuousSubject s = *arm[pick(rng)];
      s.id = id++;
      out.subjects.push_back(std::move(s));
    }
  }
  return out;
}

struct GoldRecord {
  bool ok = false;
  std::string failure;
  std::array<double, 3> estimate{kNaN, kNaN, kNaN};
  std::array<double, 3> se{kNaN, kNaN, kNaN};
};

GoldRecord run_gold(const Dataset& full, const StudyConfig& cfg, std::uint64_t boot_seed) {
  GoldRecord g;
  try {
    FitOptions opts = fit_options(cfg);
    opts.nuisance = NuisanceModel::None;
    const FitResult fit = fit_gold(full, opts);
    if (!fit.converged) {
      g.failure = "gold fit did not converge";
      return g;
    }
    g.estimate = betas(fit.params);
    if (cfg.n_boots > 0) {
      opts.initial_params = fit.params;
      opts.seed = boot_seed;
      const BootstrapResult boot = bootstrap_se(full, std::nullopt, cfg.n_boots, opts, 1);
      if (boot.n_converged < 2) {
        g.failure = "gold bootstrap produced fewer than 2 converged replicates";
        return g;
      }
      g.se = {boot.se_beta(1), boot.se_beta(2), boot.se_beta(3)};
    }
    g.ok = true;
  } catch (const std::exception& e) {
    g.failure = std::string("gold: ") + e.what();
  }
  return g;
}

void run_design(ReplicateRecord& rec, const MaskedTrial& masked, const StudyScenario& sc, const StudyConfig& cfg,
                std::uint64_t boot_seed) {
  if (sc.method == StudyMethod::Mel) {
    FitOptions opts = fit_options(cfg);
    const FitResult fit = fit_mel(masked.discrete, estimate_nuisance(masked.discrete, opts.nuisance), opts);
    if (!fit.converged) throw EstimationError("MEL fit did not converge");
    rec.estimate = betas(fit.params);
    if (cfg.n_boots > 0) {
      opts.initial_params = fit.params;
      opts.seed = boot_seed;
      const BootstrapResult boot = bootstrap_se(masked.discrete, sc.config.design, cfg.n_boots, opts, 1);
      if (boot.n_converged < 2) throw EstimationError("bootstrap produced fewer than 2 converged replicates");
      rec.se = {boot.se_beta(1), boot.se_beta(2), boot.se_beta(3)};
    }
  } else {
    const AcemResult fit = fit_acem(masked.continuous);
    if (!fit.converged) throw EstimationError("ACEM did not converge");
    rec.estimate = fit.state.beta;
    if (cfg.n_boots > 0) {
      std::vector<std::array<double, 3>> reps;
      for (int r = 0; r < cfg.n_boots; ++r) {
        std::mt19937_64 rng(derive_seed(boot_seed, {static_cast<std::uint64_t>(r)}));
        try {
          const AcemResult b = fit_acem(resample_continuous(masked.continuous, rng));
          if (b.converged) reps.push_back(b.state.beta);
        } catch (const EstimationError&) {
        } catch (const InputError&) {
        } catch (const NumericError&) {
        }
      }
      if (reps.size() < 2) throw EstimationError("bootstrap produced fewer than 2 converged replicates");
      rec.se = sample_sd(reps);
    }
  }
  if (cfg.n_boots > 0) rec.reject = test_beta3(rec.estimate[2], rec.se[2], cfg.alpha).reject;
}

json scenario_entry_to_config_json(json entry, StudyMethod* method) {
  if (!entry.is_object()) throw ConfigError("scenarios: each entry must be an object");
  if (entry.contains("method")) {
    *method = parse_study_method(get_string(entry, "method"));
    entry.erase("method");
  }
  // Shorthand: "design": "BIP" with a sibling "missing": "Medium".
  if (entry.contains("design") && entry["design"].is_string()) {
    json d = {{"kind", entry["design"]}};
    if (entry.contains("missing")) d["missing"] = entry["missing"];
    entry["design"] = d;
    entry.erase("missing");
  } else if (entry.contains("missing")) {
    json d = entry.contains("design") ? entry["design"] : json::object();
    d["missing"] = entry["missing"];
    entry["design"] = d;
    entry.erase("missing");
  }
  return entry;
}

}  // namespace

std::string to_string(StudyMethod method) {
  switch (method) {
    case StudyMethod::Mel: return "mel";
    case StudyMethod::Acem: return "acem";
    case StudyMethod::Gold: return "gold";
  }
  return "?";
}

StudyMethod parse_study_method(const std::string& text) {
  if (text == "mel") return StudyMethod::Mel;
  if (text == "acem") return StudyMethod::Acem;
  if (text == "gold") return StudyMethod::Gold;
  throw ConfigError("unknown method '" + text + "' (expected mel, acem or gold)");
}

void StudyConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("field 'scenarios': at least one scenario is required");
  if (n_reps < 2) throw ConfigError("field 'n_reps': must be at least 2");
  if (n_boots < 0 || n_boots == 1) throw ConfigError("field 'n_boots': must be 0 or at least 2");
  if (nodes < 1 || nodes > 200) throw ConfigError("field 'nodes': must lie in 1..200");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("field 'alpha': must lie in (0, 1)");
  if (threads < 1) throw ConfigError("field 'threads': must be at least 1");
  for (const auto& s : scenarios) {
    s.config.validate();
    if (s.method == StudyMethod::Acem && s.config.design.kind != DesignKind::Bip) {
      throw ConfigError("ACEM supports only the BIP-alone design (scenario with design " +
                        to_string(s.config.design.kind) + ")");
    }
  }
}

StudyConfig study_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("study config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> allowed{"seed",     "n_reps",  "n_boots", "nodes",    "alpha",
                                               "nuisance", "threads", "base",    "scenarios", "grid"};
    if (!allowed.count(key)) throw ConfigError("field '" + key + "': unknown field in study config");
  }
  StudyConfig cfg;
  if (j.contains("seed")) cfg.seed = get_uint(j, "seed");
  if (j.contains("n_reps")) cfg.n_reps = get_int(j, "n_reps");
  if (j.contains("n_boots")) cfg.n_boots = get_int(j, "n_boots");
  if (j.contains("nodes")) cfg.nodes = get_int(j, "nodes");
  if (j.contains("alpha")) cfg.alpha = get_number(j, "alpha");
  if (j.contains("threads")) cfg.threads = get_int(j, "threads");
  if (j.contains("nuisance")) cfg.nuisance = parse_nuisance_model(get_string(j, "nuisance"));

  ScenarioConfig base;
  if (j.contains("base")) base = scenario_from_json(j.at("base"));

  std::vector<json> entries;
  if (j.contains("scenarios")) {
    if (!j.at("scenarios").is_array()) throw ConfigError("field 'scenarios': expected an array");
    for (const auto& e : j.at("scenarios")) entries.push_back(e);
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (!g.is_object()) throw ConfigError("field 'grid': expected an object of arrays");
    std::vector<json> acc{json::object()};
    for (const auto& [key, values] : g.items()) {
      if (!values.is_array() || values.empty()) {
        throw ConfigError("field 'grid." + key + "': expected a non-empty array");
      }
      std::vector<json> next;
      for (const auto& partial : acc) {
        for (const auto& v : values) {
          json e = partial;
          e[key] = v;
          next.push_back(e);
        }
      }
      acc = std::move(next);
    }
    entries.insert(entries.end(), acc.begin(), acc.end());
  }
  if (entries.empty()) entries.push_back(json::object());

  for (const auto& e : entries) {
    StudyScenario sc;
    const json c = scenario_entry_to_config_json(e, &sc.method);
    // A design override replaces the base design wholesale.
    sc.config = scenario_from_json(c, base);
    cfg.scenarios.push_back(sc);
  }
  cfg.validate();
  return cfg;
}

std::uint64_t simulation_key(const ScenarioConfig& config) {
  json j = to_json(config);
  j.erase("seed");
  j.erase("design");
  j.erase("rho");
  return fnv1a64(j.dump());
}

SimulatedTrial study_trial(const ScenarioConfig& config, const CalibratedRates& rates, std::uint64_t seed, int rep) {
  return simulate_trial(config, rates, derive_seed(seed, {simulation_key(config), static_cast<std::uint64_t>(rep)}));
}

MaskedTrial study_masked_trial(const ScenarioConfig& config, const SimulatedTrial& trial, std::uint64_t seed,
                               int rep) {
  const std::uint64_t s =
      derive_seed(seed, {simulation_key(config), static_cast<std::uint64_t>(rep), design_key(config.design)});
  return apply_design(trial, config.design, s);
}

std::vector<McSummary> run_study(const StudyConfig& cfg) {
  cfg.validate();
  const auto log = [&](const std::string& msg) {
    if (cfg.log) cfg.log(msg);
  };
  std::map<std::uint64_t, CalibratedRates> rates_cache;
  std::map<std::uint64_t, std::vector<GoldRecord>> gold_cache;
  const bool need_gold = cfg.n_boots > 0;
  const auto n = static_cast<std::size_t>(cfg.n_reps);

  std::vector<McSummary> out;
  for (std::size_t si = 0; si < cfg.scenarios.size(); ++si) {
    const StudyScenario& sc = cfg.scenarios[si];
    const std::uint64_t key = simulation_key(sc.config);
    if (!rates_cache.count(key)) rates_cache[key] = calibrate_rates(sc.config);
    const CalibratedRates rates = rates_cache[key];
    const std::string label = to_string(sc.config.design.kind) + "/" + to_string(sc.config.design.missing) +
                              "/rho=" + format_real(sc.config.rho) + "/" + beta_label(sc.config.beta_truth) + "/" +
                              to_string(sc.method);
    log("scenario " + std::to_string(si + 1) + "/" + std::to_string(cfg.scenarios.size()) + ": " + label);

    if ((need_gold || sc.method == StudyMethod::Gold) && !gold_cache.count(key)) {
      std::vector<GoldRecord> gold(n);
      parallel_for(n, cfg.threads, [&](std::size_t r) {
        const SimulatedTrial trial = study_trial(sc.config, rates, cfg.seed, static_cast<int>(r));
        gold[r] = run_gold(trial.full, cfg, derive_seed(cfg.seed, {key, r, kGoldStream}));
      });
      gold_cache[key] = std::move(gold);
    }

    std::vector<ReplicateRecord> recs(n);
    parallel_for(n, cfg.threads, [&](std::size_t r) {
      ReplicateRecord& rec = recs[r];
      rec.rep = static_cast<int>(r);
      rec.se = {kNaN, kNaN, kNaN};
      rec.gold_estimate = {kNaN, kNaN, kNaN};
      rec.gold_se = {kNaN, kNaN, kNaN};
      const SimulatedTrial trial = study_trial(sc.config, rates, cfg.seed, rec.rep);
      rec.placebo_infections = trial.placebo_infections;
      rec.censored_before_end = trial.censored_before_end;
      const GoldRecord* gold = gold_cache.count(key) ? &gold_cache.at(key)[r] : nullptr;
      if (gold) {
        rec.gold_estimate = gold->estimate;
        rec.gold_se = gold->se;
      }
      if (sc.method == StudyMethod::Gold) {
        rec.ok = gold->ok;
        rec.failure = gold->failure;
        rec.estimate = gold->estimate;
        rec.se = gold->se;
        if (rec.ok && cfg.n_boots > 0) rec.reject = test_beta3(rec.estimate[2], rec.se[2], cfg.alpha).reject;
        return;
      }
      try {
        const MaskedTrial masked = study_masked_trial(sc.config, trial, cfg.seed, rec.rep);
        run_design(rec, masked, sc, cfg,
                   derive_seed(cfg.seed, {key, r, design_key(sc.config.design),
                                          static_cast<std::uint64_t>(sc.method), kBootStream}));
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.failure = e.what();
      }
    });

    McSummary row;
    row.scenario = sc;
    row.n_reps = cfg.n_reps;
    row.seed = cfg.seed;
    row.config_hash = config_hash_hex(sc.config);
    std::vector<std::array<double, 3>> est;
    std::array<double, 3> ase{0, 0, 0}, gold_ase{0, 0, 0};
    int n_gold = 0, n_reject = 0;
    for (const auto& rec : recs) {
      if (!rec.ok) {
        ++row.n_failed;
        log("  rep " + std::to_string(rec.rep) + " failed: " + rec.failure);
        continue;
      }
      est.push_back(rec.estimate);
      for (int c = 0; c < 3; ++c) ase[c] += rec.se[c];
      if (std::isfinite(rec.gold_se[0])) {
        ++n_gold;
        for (int c = 0; c < 3; ++c) gold_ase[c] += rec.gold_se[c];
      }
      if (rec.reject) ++n_reject;
    }
    if (row.n_failed * 10 > cfg.n_reps) {
      throw EstimationError("scenario " + label + ": " + std::to_string(row.n_failed) + " of " +
                            std::to_string(cfg.n_reps) + " replicates failed (limit 10%)");
    }
    const auto sd = sample_sd(est);
    const double m = static_cast<double>(est.size());
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (const auto& e : est) mean += e[c];
      mean /= m;
      auto& p = row.beta[static_cast<std::size_t>(c)];
      p.bias = mean - sc.config.beta_truth[static_cast<std::size_t>(c)];
      p.sd = sd[static_cast<std::size_t>(c)];
      p.ase = cfg.n_boots > 0 ? ase[c] / m : kNaN;
      const double g = n_gold > 0 ? gold_ase[c] / n_gold : kNaN;
      p.re = cfg.n_boots > 0 ? g * g / (p.ase * p.ase) * 100.0 : kNaN;
    }
    row.power = cfg.n_boots > 0 ? 100.0 * n_reject / m : kNaN;
    row.replicates = std::move(recs);
    log("  done: bias(beta3) = " + format_real(row.beta[2].bias) + ", failed " + std::to_string(row.n_failed));
    out.push_back(std::move(row));
  }
  return out;
}

std::string summary_csv(const std::vector<McSummary>& rows) {
  const auto num = [](double x) -> std::string {
    if (!std::isfinite(x)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
  };
  std::ostringstream os;
  os << "design,missing,rho,beta,method,n_reps,n_failed";
  for (int c = 1; c <= 3; ++c) os << ",b" << c << "_bias,b" << c << "_sd,b" << c << "_ase,b" << c << "_re";
  os << ",power,seed,config_hash\n";
  for (const auto& r : rows) {
    const auto& c = r.scenario.config;
    os << to_string(c.design.kind) << ',' << to_string(c.design.missing) << ',' << format_real(c.rho) << ','
       << beta_label(c.beta_truth) << ',' << to_string(r.scenario.method) << ',' << r.n_reps << ',' << r.n_failed;
    for (const auto& p : r.beta) os << ',' << num(p.bias) << ',' << num(p.sd) << ',' << num(p.ase) << ',' << num(p.re);
    os << ',' << num(r.power) << ',' << r.seed << ',' << r.config_hash << '\n';
  }
  return os.str();
}

}  // namespace vaxsurr
