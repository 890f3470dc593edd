#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/error.hpp"

using namespace vaxsurr;

namespace {

ContinuousDataset cox_data(int n, std::uint64_t seed, double rho, double ic_frac, double bip_frac) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  ContinuousDataset d;
  const double sd = std::sqrt(0.4);
  for (int i = 0; i < n; ++i) {
    ContinuousSubject s;
    s.id = i + 1;
    s.arm = i < n / 2 ? 1 : 0;
    const double z1 = z(rng), z2 = z(rng);
    const double s1 = sd * z1, b = sd * (rho * z1 + std::sqrt(1 - rho * rho) * z2);
    const double eta = -0.996 * s.arm - 1.109 * s1 - 0.7 * s.arm * s1;
    const double t = -std::log(u(rng)) / (0.08 * std::exp(eta));
    const double c = std::min(3.0, -std::log(u(rng)) / 0.035);
    s.time = std::min(t, c);
    s.event = t <= c;
    const double draw = u(rng);
    if (s.arm == 1 && (s.event || draw < ic_frac)) s.marker = s1;
    if (s.marker || draw > 1.0 - bip_frac) s.bip = b;
    d.subjects.push_back(s);
  }
  return d;
}

// Independent Breslow partial-likelihood Newton fitter, O(n^2).
Eigen::Vector3d cox_pl_fit(const std::vector<Eigen::Vector3d>& z, const std::vector<double>& t,
                           const std::vector<bool>& ev) {
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  for (int it = 0; it < 50; ++it) {
    Eigen::Vector3d score = Eigen::Vector3d::Zero();
    Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!ev[i]) continue;
      double s0 = 0.0;
      Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
      Eigen::Matrix3d s2 = Eigen::Matrix3d::Zero();
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (t[j] < t[i]) continue;
        const double r = std::exp(z[j].dot(beta));
        s0 += r;
        s1 += r * z[j];
        s2 += r * z[j] * z[j].transpose();
      }
      const Eigen::Vector3d m = s1 / s0;
      score += z[i] - m;
      info += s2 / s0 - m * m.transpose();
    }
    const Eigen::Vector3d step = info.ldlt().solve(score);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return beta;
}

}  // namespace

TEST(Calibration, ExactLine) {
  ContinuousDataset d;
  for (int i = 0; i < 5; ++i) {
    ContinuousSubject s;
    s.id = i;
    s.arm = 1;
    s.time = 1.0;
    s.event = i == 0;
    s.bip = 0.5 * i - 1.0;
    s.marker = 2.0 * *s.bip;
    d.subjects.push_back(s);
  }
  const auto m = fit_calibration(d);
  EXPECT_NEAR(m.theta0, 0.0, 1e-14);
  EXPECT_NEAR(m.theta1, 2.0, 1e-14);
  EXPECT_NEAR(m.residual_var, 0.0, 1e-28);
}

TEST(Calibration, FivePointLeastSquares) {
  const double b[5] = {-1.0, 0.0, 0.5, 1.0, 2.0};
  const double s[5] = {-0.8, 0.3, 0.2, 1.1, 1.4};
  ContinuousDataset d;
  for (int i = 0; i < 5; ++i) {
    ContinuousSubject c;
    c.id = i;
    c.arm = 1;
    c.time = 1.0;
    c.bip = b[i];
    c.marker = s[i];
    d.subjects.push_back(c);
  }
  // Normal equations solved by hand: sum b = 2.5, sum b^2 = 6.25, sum s = 2.2, sum bs = 4.8.
  const double theta1 = (5 * 4.8 - 2.5 * 2.2) / (5 * 6.25 - 2.5 * 2.5);
  const double theta0 = (2.2 - theta1 * 2.5) / 5;
  double rss = 0.0;
  for (int i = 0; i < 5; ++i) rss += std::pow(s[i] - theta0 - theta1 * b[i], 2);
  const auto m = fit_calibration(d);
  EXPECT_NEAR(m.theta1, theta1, 1e-14);
  EXPECT_NEAR(m.theta0, theta0, 1e-14);
  EXPECT_NEAR(m.residual_var, rss / 3, 1e-14);
}

TEST(Calibration, RecoversGeneratorSlope) {
  const auto d = cox_data(5000, 3, 0.9, 0.5, 0.4);
  const auto m = fit_calibration(d);
  // Slope rho for equal variances; SE about sqrt((1 - rho^2) / n_pairs).
  EXPECT_NEAR(m.theta1, 0.9, 3 * std::sqrt(0.19 / 1200.0));
  EXPECT_NEAR(m.theta0, 0.0, 3 * std::sqrt(0.4 * 0.19 / 1200.0));
}

TEST(Calibration, Errors) {
  ContinuousDataset d;
  for (int i = 0; i < 4; ++i) {
    ContinuousSubject c;
    c.id = i;
    c.arm = 1;
    c.time = 1.0;
    c.marker = 0.1 * i;
    c.bip = i < 2 ? 0.5 : std::optional<double>{};
    d.subjects.push_back(c);
  }
  EXPECT_THROW(fit_calibration(d), InputError);
  for (auto& c : d.subjects) c.bip = 0.5;
  EXPECT_THROW(fit_calibration(d), EstimationError);
}

TEST(Breslow, MatchesDirectSums) {
  const std::vector<double> t{2.0, 1.0, 3.0, 1.0, 2.5};
  const bool ev[5] = {true, true, false, true, true};
  const std::vector<double> lp{0.1, -0.3, 0.4, 0.0, -1.0};
  const auto b = breslow(t, ev, lp);
  ASSERT_EQ(b.event_times, (std::vector<double>{1.0, 2.0, 2.5}));
  auto risk = [&](double at) {
    double r = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) r += t[i] >= at ? std::exp(lp[i]) : 0.0;
    return r;
  };
  EXPECT_NEAR(b.jumps[0], 2.0 / risk(1.0), 1e-15);
  EXPECT_NEAR(b.jumps[1], 1.0 / risk(2.0), 1e-15);
  EXPECT_NEAR(b.jumps[2], 1.0 / risk(2.5), 1e-15);
}

TEST(Acem, AllMarkersObservedIsCoxMle) {
  auto d = cox_data(1200, 11, 0.9, 1.0, 0.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (auto& s : d.subjects) {
    if (!s.marker) s.marker = std::sqrt(0.4) * z(rng);
  }
  AcemOptions opts;
  opts.tolerance = 1e-10;
  const auto res = fit_acem(d, opts);
  ASSERT_TRUE(res.converged);
  EXPECT_EQ(res.n_em_subjects, 0);

  std::vector<Eigen::Vector3d> zs;
  std::vector<double> t;
  std::vector<bool> ev;
  std::vector<double> lp;
  for (const auto& s : d.subjects) {
    zs.emplace_back(s.arm, *s.marker, s.arm * *s.marker);
    t.push_back(s.time);
    ev.push_back(s.event);
  }
  const Eigen::Vector3d beta = cox_pl_fit(zs, t, ev);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(res.state.beta[static_cast<std::size_t>(c)], beta[c], 1e-6);

  // Baseline equals the classical Breslow estimator at the fitted beta.
  for (const auto& zi : zs) lp.push_back(zi.dot(beta));
  std::unique_ptr<bool[]> evb(new bool[ev.size()]);
  for (std::size_t i = 0; i < ev.size(); ++i) evb[i] = ev[i];
  const auto b = breslow(t, std::span<const bool>(evb.get(), ev.size()), lp);
  ASSERT_EQ(b.event_times, res.state.event_times);
  for (std::size_t k = 0; k < b.jumps.size(); ++k) EXPECT_NEAR(res.state.hazard_jumps[k], b.jumps[k], 1e-8 * b.jumps[k] + 1e-12);
}

TEST(Acem, ExactEmPathIsMonotone) {
  const auto d = cox_data(1500, 5, 0.9, 0.5, 0.3);
  AcemOptions opts;
  opts.calibrate = false;
  const auto res = fit_acem(d, opts);
  EXPECT_GT(res.n_em_subjects, 0);
  EXPECT_EQ(res.n_imputed, 0);
  for (std::size_t i = 1; i < res.loglik_trace.size(); ++i) {
    EXPECT_GE(res.loglik_trace[i], res.loglik_trace[i - 1] - 1e-8 * std::abs(res.loglik_trace[i - 1])) << i;
  }
  const double total = std::accumulate(res.state.mass_probs.begin(), res.state.mass_probs.end(), 0.0);
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (double p : res.state.mass_probs) EXPECT_GE(p, 0.0);
  EXPECT_NEAR(acem_observed_loglik(d, res.state, std::nullopt), res.loglik, 1e-9 * std::abs(res.loglik));
}

TEST(Acem, PosteriorWeightsSumToOne) {
  const auto d = cox_data(800, 9, 0.6, 0.5, 0.375);
  const auto res = fit_acem(d);
  EXPECT_GT(res.n_imputed, 0);
  const auto w = acem_posterior_weights(d, res.state, res.calibration);
  ASSERT_EQ(static_cast<int>(w.size()), res.n_em_subjects);
  for (const auto& row : w) {
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
    for (double x : row) EXPECT_GE(x, 0.0);
  }
  // Lambda_0 is a nondecreasing step function starting at 0.
  EXPECT_EQ(res.state.cumulative_hazard(0.0), 0.0);
  double prev = 0.0;
  for (double t = 0.1; t <= 3.0; t += 0.1) {
    const double c = res.state.cumulative_hazard(t);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Acem, RejectsUnsupportedInput) {
  auto d = cox_data(300, 4, 0.9, 0.5, 0.3);
  auto cpv = d;
  for (auto& s : cpv.subjects) {
    if (s.arm == 0 && !s.event) {
      s.closeout_marker = 0.1;
      break;
    }
  }
  try {
    fit_acem(cpv);
    FAIL() << "expected rejection";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("BIP-alone"), std::string::npos);
  }
  auto no_ic = d;
  for (auto& s : no_ic.subjects) s.marker.reset();
  AcemOptions opts;
  opts.calibrate = false;
  EXPECT_THROW(fit_acem(no_ic, opts), InputError);
  auto bad_time = d;
  bad_time.subjects[0].time = 0.0;
  EXPECT_THROW(fit_acem(bad_time), InputError);
}
