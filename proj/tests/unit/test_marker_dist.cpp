#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "vaxsurr/error.hpp"
#include "vaxsurr/marker_dist.hpp"

using namespace vaxsurr;
using vaxsurr::testing::subject;

namespace {

// Vaccine arm: 2 infected of 8. IC_V holds both cases and 3 controls.
Dataset small_categorical() {
  Dataset d;
  d.grid = TimeGrid::uniform(3.0, 3);
  d.subjects = {
      subject(1, 1, 2, true, 1.0, 0.0),  subject(2, 1, 3, true, 2.0, 1.0),  subject(3, 1, 4, false, 0.0, 0.0),
      subject(4, 1, 4, false, 0.0, 1.0), subject(5, 1, 4, false, 2.0, 1.0), subject(6, 1, 4, false),
      subject(7, 1, 4, false),           subject(8, 1, 4, false, std::nullopt, 0.0),
      subject(9, 0, 4, false, std::nullopt, 1.0),
  };
  return d;
}

}  // namespace

TEST(MarkerDist, StratumProbsCountAtRiskVaccinees) {
  Dataset d = small_categorical();
  d.subjects.push_back(subject(10, 1, 1, false));
  d.subjects.back().at_risk = false;
  const auto p = estimate_stratum_probs(d);
  EXPECT_DOUBLE_EQ(p.p11, 0.25);
  EXPECT_DOUBLE_EQ(p.p10, 0.75);
}

TEST(MarkerDist, CategoricalMatchesHandTabulation) {
  const auto law = estimate_categorical(small_categorical());
  ASSERT_EQ(law.support, (std::vector<double>{0.0, 1.0, 2.0}));
  ASSERT_EQ(law.bip_levels, (std::vector<double>{0.0, 1.0}));
  // Cases: S = 1, 2 (each 1/2). Controls: S = 0, 0, 2 (2/3, 0, 1/3).
  const std::vector<double> marginal{0.75 * 2.0 / 3.0, 0.25 * 0.5, 0.25 * 0.5 + 0.75 / 3.0};
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(law.marginal_pmf[j], marginal[j], 1e-15);
  // B = 0: case S = 1, control S = 0. B = 1: case S = 2, controls S = 0, 2.
  const std::vector<double> b0{0.75, 0.25, 0.0};
  const std::vector<double> b1{0.375, 0.0, 0.25 + 0.375};
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(law.conditional_pmf[0][j], b0[j], 1e-15);
    EXPECT_NEAR(law.conditional_pmf[1][j], b1[j], 1e-15);
  }
  EXPECT_EQ(law.level_index(1.0), 1u);
  EXPECT_THROW((void)law.level_index(0.5), InputError);
}

TEST(MarkerDist, CategoricalPmfsSumToOne) {
  const Dataset d = vaxsurr::testing::mixed_dataset(400, 8);
  // Coarsen markers so the BIP cells are populated.
  Dataset coarse = d;
  for (auto& s : coarse.subjects) {
    if (s.marker) *s.marker = std::round(*s.marker * 2.0);
    if (s.bip) *s.bip = *s.bip > 0.0 ? 1.0 : 0.0;
    if (s.closeout_marker) *s.closeout_marker = std::round(*s.closeout_marker * 2.0);
  }
  const auto law = estimate_categorical(coarse);
  EXPECT_NEAR(std::accumulate(law.marginal_pmf.begin(), law.marginal_pmf.end(), 0.0), 1.0, 1e-14);
  for (const auto& row : law.conditional_pmf) {
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-14);
  }
}

TEST(MarkerDist, EmptyCellIsEstimationError) {
  Dataset d = small_categorical();
  d.subjects[0].bip = 5.0;  // level 5 has a case but no control
  EXPECT_THROW(estimate_categorical(d), EstimationError);
  d.subjects[0].event = false;
  d.subjects[1].event = false;
  EXPECT_NO_THROW(estimate_stratum_probs(d));
}

TEST(MarkerDist, NormalMomentsRecombineStrata) {
  // Direct oracle: mixture moments p11 * E_1 + p10 * E_0.
  const Dataset d = vaxsurr::testing::mixed_dataset(2000, 21);
  double n[2] = {0, 0}, es[2] = {0, 0}, es2[2] = {0, 0};
  double nb[2] = {0, 0}, eb[2] = {0, 0}, eb2[2] = {0, 0};
  double nsb[2] = {0, 0}, esb[2] = {0, 0};
  double vacc = 0, cases = 0;
  for (const auto& s : d.subjects) {
    if (s.arm != 1) continue;
    vacc += 1;
    cases += s.event;
    const int h = s.event;
    if (s.marker) {
      n[h] += 1;
      es[h] += *s.marker;
      es2[h] += *s.marker * *s.marker;
    }
    if (s.bip) {
      nb[h] += 1;
      eb[h] += *s.bip;
      eb2[h] += *s.bip * *s.bip;
    }
    if (s.marker && s.bip) {
      nsb[h] += 1;
      esb[h] += *s.marker * *s.bip;
    }
  }
  const double p[2] = {1 - cases / vacc, cases / vacc};
  auto mix = [&](const double* sum, const double* cnt) { return p[0] * sum[0] / cnt[0] + p[1] * sum[1] / cnt[1]; };
  const double ms = mix(es, n), vs = mix(es2, n) - ms * ms;
  const double mb = mix(eb, nb), vb = mix(eb2, nb) - mb * mb;
  const double rho = (mix(esb, nsb) - ms * mb) / std::sqrt(vs * vb);

  const auto law = estimate_normal(d);
  EXPECT_NEAR(law.mean_s, ms, 1e-12);
  EXPECT_NEAR(law.var_s, vs, 1e-12);
  EXPECT_NEAR(law.mean_b, mb, 1e-12);
  EXPECT_NEAR(law.var_b, vb, 1e-12);
  EXPECT_NEAR(law.rho, rho, 1e-12);
  EXPECT_TRUE(law.has_bip);
  EXPECT_NEAR(law.conditional_mean(mb + 1.0), ms + rho * std::sqrt(vs / vb), 1e-12);
  EXPECT_NEAR(law.conditional_var(), vs * (1 - rho * rho), 1e-12);
  // Generated with corr(S, B) near 0.9.
  EXPECT_GT(law.rho, 0.8);
}

TEST(MarkerDist, NormalWithoutBip) {
  Dataset d = vaxsurr::testing::mixed_dataset(600, 5);
  for (auto& s : d.subjects) s.bip.reset();
  const auto law = estimate_normal(d);
  EXPECT_FALSE(law.has_bip);
  EXPECT_EQ(law.rho, 0.0);
}

TEST(MarkerDist, NormalNeedsTwoMarkersPerStratum) {
  Dataset d = small_categorical();
  d.subjects[1].marker.reset();
  EXPECT_THROW(estimate_normal(d), EstimationError);
}
