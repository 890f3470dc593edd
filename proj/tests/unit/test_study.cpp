#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "vaxsurr/error.hpp"
#include "vaxsurr/json_io.hpp"
#include "vaxsurr/study.hpp"

using namespace vaxsurr;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    study_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

StudyConfig smoke_study(StudyMethod method = StudyMethod::Mel) {
  StudyConfig cfg;
  StudyScenario sc;
  sc.config.n_total = 1000;
  sc.config.target_placebo_infections = 67;
  sc.method = method;
  cfg.scenarios = {sc};
  cfg.n_reps = 3;
  cfg.n_boots = 2;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST(ScenarioJson, RoundTripAndHash) {
  ScenarioConfig c;
  c.rho = 0.6;
  c.beta_truth = kBeta4;
  c.design = DesignSpec::preset(DesignKind::BipCpv, MissingPattern::Large);
  c.seed = 99;
  const ScenarioConfig back = scenario_from_json(to_json(c));
  EXPECT_EQ(back, c);
  ScenarioConfig other = c;
  other.seed = 100;
  EXPECT_EQ(config_hash(c), config_hash(other));  // seed excluded
  other.rho = 0.9;
  EXPECT_NE(config_hash(c), config_hash(other));
  EXPECT_EQ(config_hash_hex(c).size(), 16u);
}

TEST(ScenarioJson, FieldNamedErrors) {
  try {
    scenario_from_json(json{{"rho", "high"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'rho'"), std::string::npos) << e.what();
  }
  try {
    scenario_from_json(json{{"n_totl", 10}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'n_totl'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(scenario_from_json(json{{"beta", "beta9"}}), ConfigError);
  EXPECT_EQ(scenario_from_json(json{{"beta", {-1.0, -1.0, -0.5}}}).beta_truth, (BetaTruth{-1.0, -1.0, -0.5}));
  EXPECT_THROW(parse_json("{\"a\": ", "cfg"), ConfigError);
}

TEST(DesignJson, PresetThenOverrides) {
  const auto d = design_from_json(json{{"kind", "CPV"}, {"missing", "Large"}, {"cpv_noise_var", 0.2}});
  EXPECT_EQ(d.kind, DesignKind::Cpv);
  EXPECT_EQ(d.cpv_frac, 0.25);
  EXPECT_EQ(d.cpv_noise_var, 0.2);
  EXPECT_EQ(design_from_json(to_json(d)), d);
  EXPECT_THROW(design_from_json(json{{"kind", "BIP"}, {"frac", 0.1}}), ConfigError);
}

TEST(StudyJson, GridIsCrossProduct) {
  const json j = {{"n_reps", 5},
                  {"grid",
                   {{"design", {"BIP", "CPV", "BIP+CPV"}},
                    {"missing", {"Large", "Medium"}},
                    {"rho", {0.6, 0.9}},
                    {"beta", {"beta0", "beta7"}}}}};
  const StudyConfig cfg = study_from_json(j);
  EXPECT_EQ(cfg.scenarios.size(), 24u);
  EXPECT_EQ(cfg.n_reps, 5);
  int cpv_large = 0;
  for (const auto& s : cfg.scenarios) {
    if (s.config.design.kind == DesignKind::Cpv && s.config.design.missing == MissingPattern::Large) {
      ++cpv_large;
      EXPECT_EQ(s.config.design.cpv_frac, 0.25);
    }
  }
  EXPECT_EQ(cpv_large, 4);
}

TEST(StudyJson, Errors) {
  EXPECT_NE(config_error(json{{"n_rep", 3}}).find("'n_rep'"), std::string::npos);
  EXPECT_NE(config_error(json{{"n_reps", 1}}).find("'n_reps'"), std::string::npos);
  EXPECT_NE(config_error(json{{"n_boots", 1}}).find("'n_boots'"), std::string::npos);
  EXPECT_NE(config_error(json{{"scenarios", {{{"design", "CPV"}, {"method", "acem"}}}}}).find("BIP-alone"),
            std::string::npos);
  EXPECT_NE(config_error(json{{"scenarios", {{{"method", "em"}}}}}).find("em"), std::string::npos);
  EXPECT_NE(config_error(json{{"grid", {{"rho", json::array()}}}}).find("grid.rho"), std::string::npos);
}

TEST(SimulationKey, IgnoresDesignRhoAndSeed) {
  ScenarioConfig a;
  ScenarioConfig b = a;
  b.rho = 0.6;
  b.seed = 5;
  b.design = DesignSpec::preset(DesignKind::Cpv, MissingPattern::Large);
  EXPECT_EQ(simulation_key(a), simulation_key(b));
  b.beta_truth = kBeta0;
  EXPECT_NE(simulation_key(a), simulation_key(b));
}

TEST(Study, SmokeRunProducesWellFormedCsv) {
  const auto rows = run_study(smoke_study());
  ASSERT_EQ(rows.size(), 1u);
  const auto& r = rows[0];
  EXPECT_EQ(r.n_reps, 3);
  EXPECT_EQ(r.n_failed, 0);
  EXPECT_EQ(r.replicates.size(), 3u);
  EXPECT_TRUE(std::isfinite(r.beta[2].ase));
  EXPECT_GE(r.power, 0.0);
  EXPECT_LE(r.power, 100.0);
  const std::string csv = summary_csv(rows);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header,
            "design,missing,rho,beta,method,n_reps,n_failed,b1_bias,b1_sd,b1_ase,b1_re,b2_bias,b2_sd,b2_ase,b2_re,"
            "b3_bias,b3_sd,b3_ase,b3_re,power,seed,config_hash");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  const std::string line = csv.substr(header.size() + 1);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), std::count(header.begin(), header.end(), ','));
}

TEST(Study, DeterministicAcrossThreads) {
  auto cfg = smoke_study();
  cfg.n_boots = 0;
  const auto a = run_study(cfg);
  cfg.threads = 3;
  const auto b = run_study(cfg);
  EXPECT_EQ(summary_csv(a), summary_csv(b));
  // Without bootstrap the ASE, RE and power columns are NA.
  EXPECT_NE(summary_csv(a).find(",NA,"), std::string::npos);
}

TEST(Study, GoldReplicatesShareSimulation) {
  auto cfg = smoke_study();
  StudyScenario cpv = cfg.scenarios[0];
  cpv.config.design = DesignSpec::preset(DesignKind::Cpv, MissingPattern::Medium);
  cfg.scenarios.push_back(cpv);
  const auto rows = run_study(cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (int rep = 0; rep < 3; ++rep) {
    EXPECT_TRUE(std::isfinite(rows[0].replicates[static_cast<std::size_t>(rep)].gold_estimate[2]));
    EXPECT_EQ(rows[0].replicates[static_cast<std::size_t>(rep)].gold_estimate,
              rows[1].replicates[static_cast<std::size_t>(rep)].gold_estimate);
  }
}

TEST(Study, AcemScenarioRuns) {
  auto cfg = smoke_study(StudyMethod::Acem);
  cfg.n_reps = 2;
  cfg.n_boots = 0;
  const auto rows = run_study(cfg);
  EXPECT_EQ(rows[0].n_failed, 0);
  EXPECT_TRUE(std::isfinite(rows[0].beta[2].bias));
}
