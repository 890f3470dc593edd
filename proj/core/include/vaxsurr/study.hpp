#pragma once

// Monte Carlo study engine: simulate -> mask -> fit the design estimator
// (+ bootstrap) -> fit the gold standard on the same unmasked replicate ->
// aggregate bias, SD, ASE, RE and power per scenario.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaxsurr/mel.hpp"
#include "vaxsurr/sim.hpp"

namespace vaxsurr {

enum class StudyMethod { Mel, Acem, Gold };
std::string to_string(StudyMethod method);
StudyMethod parse_study_method(const std::string& text);

struct StudyScenario {
  ScenarioConfig config;  // config.seed is ignored; the study seed governs
  StudyMethod method = StudyMethod::Mel;
};

struct StudyConfig {
  std::vector<StudyScenario> scenarios;
  int n_reps = 100;
  int n_boots = 30;
  std::uint64_t seed = 1;
  int nodes = 15;
  double alpha = 0.05;
  NuisanceModel nuisance = NuisanceModel::Normal;
  int threads = 1;
  std::function<void(const std::string&)> log;  // optional progress stream

  void validate() const;
};

// {"seed", "n_reps", "n_boots", "nodes", "alpha", "nuisance", "threads",
//  "base": {scenario fields}, "scenarios": [{overrides + "method"}]} or
//  "grid": {"design": [...], "missing": [...], "rho": [...], "beta": [...], "method": [...]}.
StudyConfig study_from_json(const nlohmann::json& j);

struct ReplicateRecord {
  int rep = 0;
  bool ok = false;
  std::string failure;
  std::array<double, 3> estimate{};  // beta1..beta3
  std::array<double, 3> se{};        // NaN without bootstrap
  std::array<double, 3> gold_estimate{};
  std::array<double, 3> gold_se{};
  bool reject = false;
  int placebo_infections = 0;
  int censored_before_end = 0;
};

struct ParamSummary {
  double bias = 0.0;
  double sd = 0.0;
  double ase = 0.0;  // NaN without bootstrap
  double re = 0.0;   // NaN without bootstrap
};

struct McSummary {
  StudyScenario scenario;
  int n_reps = 0;
  int n_failed = 0;
  std::array<ParamSummary, 3> beta{};
  double power = 0.0;  // percent; NaN without bootstrap
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ReplicateRecord> replicates;
};

// Throws EstimationError if more than 10% of a scenario's replicates fail.
std::vector<McSummary> run_study(const StudyConfig& config);

std::string summary_csv(const std::vector<McSummary>& rows);

// Key of the simulation-relevant fields (design and rho excluded): replicates
// sharing it share S(1), event and censoring draws.
std::uint64_t simulation_key(const ScenarioConfig& config);

// Masked replicate `rep` of a scenario exactly as run_study builds it.
SimulatedTrial study_trial(const ScenarioConfig& config, const CalibratedRates& rates, std::uint64_t seed, int rep);
MaskedTrial study_masked_trial(const ScenarioConfig& config, const SimulatedTrial& trial, std::uint64_t seed, int rep);

}  // namespace vaxsurr
