#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "vaxsurr/dataset_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "vaxsurr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = vaxsurr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::path(VAXSURR_TEST_TMPDIR);
  fs::create_directories(dir);
  return dir / name;
}

std::string write(const std::string& name, const std::string& content) {
  const auto p = tmp(name);
  std::ofstream(p) << content;
  return p.string();
}

std::string slurp(const fs::path& p) { return vaxsurr::read_file(p.string()); }

}  // namespace

TEST(Cli, SimulateIsByteIdenticalAndHasExactHeader) {
  const auto cfg = write("sim.json", R"({"seed": 17})");
  const auto a = tmp("sim_a"), b = tmp("sim_b");
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", b.string()}).code, 0);
  for (const char* f : {"trial.csv", "trial_full.csv", "trial_continuous.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string csv = slurp(a / "trial.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,V,R,M,delta,S1,Sc,B");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5001);
  const json manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest.at("seed"), 17);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>().size(), 16u);
}

TEST(Cli, MalformedConfigNamesField) {
  const auto cfg = write("bad.json", R"({"rho": 2.0})");
  const auto r = run({"simulate", "--config", cfg, "--out", tmp("bad_out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rho"), std::string::npos) << r.err;
  const auto syntax = write("syntax.json", "{ not json");
  EXPECT_EQ(run({"simulate", "--config", syntax, "--out", tmp("bad_out").string()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"fit", "--data", "/nonexistent.csv"}).code, 2);
}

TEST(Cli, FitMelAndGoldOnSimulatedTrial) {
  const auto cfg = write("fit.json", R"({"seed": 3, "n_total": 1500, "target_placebo_infections": 100})");
  const auto dir = tmp("fit_sim");
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", dir.string()}).code, 0);
  const auto mel = run({"fit", "--data", (dir / "trial.csv").string(), "--method", "mel", "--boots", "3",
                        "--seed", "4", "--design", "BIP"});
  ASSERT_EQ(mel.code, 0) << mel.err;
  const json j = json::parse(mel.out);
  EXPECT_EQ(j.at("class_counts").at("L2"), 0);  // BIP-alone: no closeout markers
  EXPECT_TRUE(j.at("fit").at("converged").get<bool>());
  EXPECT_TRUE(j.contains("test_beta3"));
  const auto gold = run({"fit", "--data", (dir / "trial_full.csv").string(), "--method", "gold"});
  ASSERT_EQ(gold.code, 0) << gold.err;
  const auto gold_masked = run({"fit", "--data", (dir / "trial.csv").string(), "--method", "gold"});
  EXPECT_EQ(gold_masked.code, 2);
}

TEST(Cli, AcemRejectsCpvData) {
  const auto cfg = write("cpv.json", R"({"seed": 5, "n_total": 1000, "target_placebo_infections": 67,
                                         "design": {"kind": "CPV"}})");
  const auto dir = tmp("cpv_sim");
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", dir.string()}).code, 0);
  const auto r = run({"fit", "--data", (dir / "trial_continuous.csv").string(), "--method", "acem"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("BIP-alone"), std::string::npos) << r.err;
}

TEST(Cli, VeCurve) {
  const auto r = run({"ve-curve", "--beta1", "0", "--beta3", "-0.7", "--from", "-1", "--to", "1", "--points", "3"});
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string header, l1, l2, l3;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(header, "s1,ve");
  EXPECT_EQ(l2.substr(0, l2.find(',')), "0");
  EXPECT_DOUBLE_EQ(std::stod(l2.substr(l2.find(',') + 1)), 0.0);
  EXPECT_NEAR(std::stod(l3.substr(l3.find(',') + 1)), 1 - std::exp(-0.7), 1e-15);
  const auto flat = run({"ve-curve", "--beta1", "-0.693", "--beta3", "0", "--points", "5"});
  std::istringstream f(flat.out);
  std::string line;
  std::getline(f, line);
  std::set<std::string> values;
  while (std::getline(f, line)) values.insert(line.substr(line.find(',') + 1));
  EXPECT_EQ(values.size(), 1u);
}

TEST(Cli, McStudySmoke) {
  const auto cfg = write("study.json", R"({"n_reps": 2, "n_boots": 2, "seed": 9,
      "base": {"n_total": 1000, "target_placebo_infections": 67}})");
  const auto out = tmp("study.csv");
  const auto r = run({"mc-study", "--config", cfg, "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(out);
  EXPECT_EQ(csv.rfind("design,missing,rho,beta,method", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}
