#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/dataset_io.hpp"
#include "vaxsurr/error.hpp"
#include "vaxsurr/json_io.hpp"
#include "vaxsurr/likelihood.hpp"
#include "vaxsurr/mel.hpp"
#include "vaxsurr/parallel.hpp"
#include "vaxsurr/seeding.hpp"
#include "vaxsurr/sim.hpp"
#include "vaxsurr/study.hpp"

namespace vaxsurr::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kMaskStream = 0x6d61736b;

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    write_file(path, content);
  }
}

std::string hex(std::uint64_t h) {
  char buf[17];
  return std::string(hash_hex(h, buf));
}

bool is_continuous_csv(const std::string& text) {
  const auto eol = text.find('\n');
  std::string header = text.substr(0, eol);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  return header.rfind("id,V,R,X,", 0) == 0;
}

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  ScenarioConfig cfg = scenario_from_json(parse_json(read_file(a.config), a.config));
  if (a.seed) cfg.seed = *a.seed;
  const CalibratedRates rates = calibrate_rates(cfg);
  const SimulatedTrial trial = simulate_trial(cfg, rates, cfg.seed);
  const MaskedTrial masked = apply_design(trial, cfg.design, derive_seed(cfg.seed, {kMaskStream}));

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_file((dir / "trial.csv").string(), to_csv(masked.discrete));
  write_file((dir / "trial_full.csv").string(), to_csv(trial.full));
  write_file((dir / "trial_continuous.csv").string(), to_csv(masked.continuous));

  std::array<std::size_t, 4> classes{};
  for (const auto& s : masked.discrete.subjects) ++classes[static_cast<std::size_t>(classify(s))];
  json manifest = {{"seed", cfg.seed},
                   {"config_hash", config_hash_hex(cfg)},
                   {"config", to_json(cfg)},
                   {"rates", to_json(rates)},
                   {"grid", std::vector<double>(masked.discrete.grid.times().begin(), masked.discrete.grid.times().end())},
                   {"placebo_infections", trial.placebo_infections},
                   {"censored_before_end", trial.censored_before_end},
                   {"class_counts", {{"L1", classes[0]}, {"L2", classes[1]}, {"L3", classes[2]}, {"L4", classes[3]}}},
                   {"files",
                    {{"discrete", "trial.csv"}, {"full", "trial_full.csv"}, {"continuous", "trial_continuous.csv"}}}};
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  out << "wrote " << masked.discrete.subjects.size() << " subjects to " << a.out << " (config " << config_hash_hex(cfg)
      << ", seed " << cfg.seed << ")\n";
  return kExitOk;
}

struct FitArgs {
  std::string data;
  std::string method = "mel";
  int boots = 0;
  std::uint64_t seed = 1;
  int nodes = 15;
  std::string nuisance = "normal";
  std::vector<double> grid;
  std::string design;
  double alpha = 0.05;
  int threads = 1;
  std::string out;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const std::string text = read_file(a.data);
  json options = {{"method", a.method}, {"boots", a.boots}, {"nodes", a.nodes},
                  {"nuisance", a.nuisance}, {"alpha", a.alpha}, {"grid", a.grid}, {"design", a.design}};
  json result = {{"method", a.method}, {"data", a.data}, {"seed", a.seed}, {"config_hash", hex(fnv1a64(options.dump()))}};

  if (a.method == "acem") {
    if (!is_continuous_csv(text)) {
      throw InputError("method acem needs the continuous CSV (header id,V,R,X,delta,S1,Sc,B)");
    }
    if (!a.design.empty() && parse_design_kind(a.design) != DesignKind::Bip) {
      throw InputError("ACEM supports only the BIP-alone design; requested " + a.design);
    }
    const ContinuousDataset data = continuous_from_csv(text);
    const AcemResult fit = fit_acem(data);
    result["n_subjects"] = data.subjects.size();
    result["fit"] = to_json(fit);
    if (a.boots > 0) result["note"] = "bootstrap is not run for ACEM fits from the command line";
  } else {
    if (a.method != "mel" && a.method != "gold") {
      throw InputError("unknown method '" + a.method + "' (expected mel, acem or gold)");
    }
    if (is_continuous_csv(text)) throw InputError("method " + a.method + " needs the discrete CSV (header id,V,R,M,...)");
    const Dataset data = a.grid.empty() ? dataset_from_csv(text) : dataset_from_csv(text, TimeGrid(a.grid));
    std::optional<DesignSpec> design;
    if (!a.design.empty()) {
      design = DesignSpec::preset(parse_design_kind(a.design), MissingPattern::Medium);
      check_design(data, *design);
    }
    FitOptions opts;
    opts.seed = a.seed;
    opts.nuisance = a.method == "gold" ? NuisanceModel::None : parse_nuisance_model(a.nuisance);
    opts.engine = opts.nuisance == NuisanceModel::Categorical ? IntegrationEngine::exact_categorical()
                                                              : IntegrationEngine::gauss_hermite(a.nodes);
    FitResult fit;
    MarkerDistribution dist = PointMass{};
    if (a.method == "gold") {
      fit = fit_gold(data, opts);
    } else {
      dist = estimate_nuisance(data, opts.nuisance);
      fit = fit_mel(data, dist, opts);
      result["nuisance"] = to_json(dist);
    }
    const LikelihoodPlan plan(data, dist, opts.engine);
    const auto& cc = plan.class_counts();
    result["n_subjects"] = data.subjects.size();
    result["design"] = to_string(infer_design(data));
    result["class_counts"] = {{"L1", cc[0]}, {"L2", cc[1]}, {"L3", cc[2]}, {"L4", cc[3]}};
    result["parameter_names"] = parameter_names(data.w_dim, data.grid.visit_count());
    result["fit"] = to_json(fit);
    if (a.boots > 0) {
      opts.initial_params = fit.params;
      const BootstrapResult boot = bootstrap_se(data, design, a.boots, opts, a.threads);
      result["bootstrap"] = to_json(boot);
      if (boot.n_converged >= 2) result["test_beta3"] = to_json(test_beta3(fit, boot, a.alpha));
    }
  }
  emit(a.out, result.dump(2) + "\n", out);
  return kExitOk;
}

struct StudyArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps, boots, nodes, threads;
  std::string out;
  std::string replicates;
};

int cmd_mc_study(const StudyArgs& a, std::ostream& out, std::ostream& err) {
  json j = parse_json(read_file(a.config), a.config);
  if (!j.is_object()) throw ConfigError(a.config + ": expected a JSON object");
  if (a.seed) j["seed"] = *a.seed;
  if (a.reps) j["n_reps"] = *a.reps;
  if (a.boots) j["n_boots"] = *a.boots;
  if (a.nodes) j["nodes"] = *a.nodes;
  if (a.threads) j["threads"] = *a.threads;
  StudyConfig cfg = study_from_json(j);
  cfg.log = [&err](const std::string& msg) { err << msg << '\n' << std::flush; };
  const auto rows = run_study(cfg);
  emit(a.out, summary_csv(rows), out);
  if (!a.replicates.empty()) {
    std::ostringstream os;
    os << "scenario,rep,ok,b1,b2,b3,se1,se2,se3,gold_b1,gold_b2,gold_b3,reject,placebo_infections,censored\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& r : rows[i].replicates) {
        os << i + 1 << ',' << r.rep << ',' << (r.ok ? 1 : 0);
        for (double x : r.estimate) os << ',' << format_real(x);
        for (double x : r.se) os << ',' << format_real(x);
        for (double x : r.gold_estimate) os << ',' << format_real(x);
        os << ',' << (r.reject ? 1 : 0) << ',' << r.placebo_infections << ',' << r.censored_before_end << '\n';
      }
    }
    write_file(a.replicates, os.str());
  }
  return kExitOk;
}

struct CurveArgs {
  double beta1 = 0.0;
  double beta3 = 0.0;
  double from = -2.0;
  double to = 2.0;
  int points = 81;
  std::string out;
};

int cmd_ve_curve(const CurveArgs& a, std::ostream& out) {
  if (a.points < 2) throw InputError("--points must be at least 2");
  if (!(a.to > a.from)) throw InputError("--to must exceed --from");
  std::ostringstream os;
  os << "s1,ve\n";
  for (int i = 0; i < a.points; ++i) {
    const double s = a.from + (a.to - a.from) * i / (a.points - 1);
    os << format_real(s) << ',' << format_real(ve_curve(a.beta1, a.beta3, s)) << '\n';
  }
  emit(a.out, os.str(), out);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surrogate-endpoint estimation for vaccine trials with missing immune responses"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate one trial and write its CSV files and manifest");
  simulate->add_option("--config", sim.config, "Scenario config JSON")->required();
  simulate->add_option("--seed", sim.seed, "Override the config seed");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "Fit a dataset and write result JSON");
  fitc->add_option("--data", fit.data, "Dataset CSV")->required();
  fitc->add_option("--method", fit.method, "mel, acem or gold")->check(CLI::IsMember({"mel", "acem", "gold"}));
  fitc->add_option("--boots", fit.boots, "Bootstrap replicates (0 = none)")->check(CLI::NonNegativeNumber);
  fitc->add_option("--seed", fit.seed, "Bootstrap seed");
  fitc->add_option("--nodes", fit.nodes, "Gauss-Hermite nodes")->check(CLI::Range(1, 200));
  fitc->add_option("--nuisance", fit.nuisance, "normal or categorical");
  fitc->add_option("--grid", fit.grid, "Visit times t1,...,tK (default: unit spacing)")->delimiter(',');
  fitc->add_option("--design", fit.design, "Declared design (BIP, CPV, BIP+CPV); checked against the data");
  fitc->add_option("--alpha", fit.alpha, "One-sided level of the beta3 test");
  fitc->add_option("--threads", fit.threads, "Bootstrap worker threads")->check(CLI::PositiveNumber);
  fitc->add_option("--out", fit.out, "Output JSON (default stdout)");

  StudyArgs st;
  auto* study = app.add_subcommand("mc-study", "Run a Monte Carlo study and write the summary CSV");
  study->add_option("--config", st.config, "Study config JSON")->required();
  study->add_option("--seed", st.seed, "Override the master seed");
  study->add_option("--reps", st.reps, "Override replicates per scenario");
  study->add_option("--boots", st.boots, "Override bootstrap replicates");
  study->add_option("--nodes", st.nodes, "Override Gauss-Hermite nodes");
  study->add_option("--threads", st.threads, "Worker threads");
  study->add_option("--out", st.out, "Summary CSV (default stdout)");
  study->add_option("--replicates", st.replicates, "Optional per-replicate CSV");

  CurveArgs cv;
  auto* curve = app.add_subcommand("ve-curve", "Evaluate VE(s1) on a grid");
  curve->add_option("--beta1", cv.beta1, "Vaccine main effect")->required();
  curve->add_option("--beta3", cv.beta3, "Marker-by-vaccine interaction")->required();
  curve->add_option("--from", cv.from, "Lower end of the s1 range");
  curve->add_option("--to", cv.to, "Upper end of the s1 range");
  curve->add_option("--points", cv.points, "Number of grid points");
  curve->add_option("--out", cv.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, out);
    if (fitc->parsed()) return cmd_fit(fit, out);
    if (study->parsed()) return cmd_mc_study(st, out, err);
    if (curve->parsed()) return cmd_ve_curve(cv, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace vaxsurr::cli
