#include "vaxsurr/marker_dist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "vaxsurr/dataset_io.hpp"
#include "vaxsurr/error.hpp"

namespace vaxsurr {
namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::size_t index_of(const std::vector<double>& levels, double x) {
  const auto it = std::lower_bound(levels.begin(), levels.end(), x);
  return static_cast<std::size_t>(it - levels.begin());
}

bool is_vaccinee(const SubjectRecord& s) { return s.arm == 1 && s.at_risk; }

struct Moments {
  double n = 0.0, sum = 0.0, sum_sq = 0.0;
  void add(double x) {
    n += 1.0;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return sum / n; }
  double second() const { return sum_sq / n; }
};

}  // namespace

StratumProbs estimate_stratum_probs(const Dataset& data) {
  double n = 0.0, infected = 0.0;
  for (const auto& s : data.subjects) {
    if (!is_vaccinee(s)) continue;
    n += 1.0;
    if (s.event) infected += 1.0;
  }
  if (n == 0.0) throw EstimationError("no at-risk vaccine recipients to estimate Pr(delta = 1 | V = 1)");
  const double p11 = infected / n;
  return {p11, 1.0 - p11};
}

StratifiedSample collect_ic_sample(const Dataset& data) {
  StratifiedSample out;
  for (const auto& s : data.subjects) {
    if (is_vaccinee(s) && s.marker) out.push_back({*s.marker, s.bip, s.event});
  }
  return out;
}

std::size_t CategoricalMarkerLaw::level_index(double b) const {
  const auto i = index_of(bip_levels, b);
  if (i == bip_levels.size() || bip_levels[i] != b) {
    throw InputError("BIP level " + format_real(b) + " was not observed in IC_V");
  }
  return i;
}

CategoricalMarkerLaw estimate_categorical(const Dataset& data) {
  CategoricalMarkerLaw law;
  law.probs = estimate_stratum_probs(data);
  law.sample = collect_ic_sample(data);

  std::vector<double> s_values, b_values;
  for (const auto& o : law.sample) {
    s_values.push_back(o.s);
    if (o.b) b_values.push_back(*o.b);
  }
  law.support = sorted_unique(std::move(s_values));
  law.bip_levels = sorted_unique(std::move(b_values));
  const std::size_t J = law.support.size();
  const std::size_t L = law.bip_levels.size();

  // counts[h][j] and per-cell counts[l][h][j]
  std::array<std::vector<double>, 2> count{std::vector<double>(J, 0.0), std::vector<double>(J, 0.0)};
  std::array<double, 2> total{0.0, 0.0};
  std::vector<std::array<std::vector<double>, 2>> cell(L, {std::vector<double>(J, 0.0), std::vector<double>(J, 0.0)});
  std::vector<std::array<double, 2>> cell_total(L, {0.0, 0.0});
  for (const auto& o : law.sample) {
    const int h = o.event ? 1 : 0;
    const auto j = index_of(law.support, o.s);
    count[h][j] += 1.0;
    total[h] += 1.0;
    if (o.b) {
      const auto l = index_of(law.bip_levels, *o.b);
      cell[l][h][j] += 1.0;
      cell_total[l][h] += 1.0;
    }
  }
  for (int h = 0; h < 2; ++h) {
    if (total[h] == 0.0) {
      throw EstimationError(std::string("empty IC_V stratum delta = ") + (h ? "1" : "0"));
    }
  }
  const double p11 = law.probs.p11, p10 = law.probs.p10;
  law.marginal_pmf.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    law.marginal_pmf[j] = p11 * count[1][j] / total[1] + p10 * count[0][j] / total[0];
  }
  law.conditional_pmf.assign(L, std::vector<double>(J, 0.0));
  for (std::size_t l = 0; l < L; ++l) {
    for (int h = 0; h < 2; ++h) {
      if (cell_total[l][h] == 0.0) {
        throw EstimationError("empty cell B = " + format_real(law.bip_levels[l]) + ", delta = " + (h ? "1" : "0"));
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      law.conditional_pmf[l][j] = p11 * cell[l][1][j] / cell_total[l][1] + p10 * cell[l][0][j] / cell_total[l][0];
    }
  }
  return law;
}

double NormalMarkerLaw::conditional_mean(double b) const {
  return mean_s + rho * std::sqrt(var_s / var_b) * (b - mean_b);
}

NormalMarkerLaw estimate_normal(const Dataset& data) {
  const StratumProbs probs = estimate_stratum_probs(data);
  // Per stratum: S and S*B from IC_V; B from every vaccinee with B measured.
  std::array<Moments, 2> s_mom, b_mom;
  std::array<double, 2> sb_sum{0.0, 0.0}, sb_n{0.0, 0.0};
  for (const auto& subj : data.subjects) {
    if (!is_vaccinee(subj)) continue;
    const int h = subj.event ? 1 : 0;
    if (subj.marker) s_mom[h].add(*subj.marker);
    if (subj.bip) b_mom[h].add(*subj.bip);
    if (subj.marker && subj.bip) {
      sb_sum[h] += *subj.marker * *subj.bip;
      sb_n[h] += 1.0;
    }
  }
  const bool any_bip = b_mom[0].n + b_mom[1].n > 0.0;
  const double p[2] = {probs.p10, probs.p11};
  for (int h = 0; h < 2; ++h) {
    if (p[h] == 0.0) continue;  // stratum absent from the population
    const std::string name = std::string("delta = ") + (h ? "1" : "0");
    if (s_mom[h].n < 2.0) throw EstimationError("fewer than 2 IC_V markers in stratum " + name);
    if (any_bip && (b_mom[h].n < 2.0 || sb_n[h] < 2.0)) {
      throw EstimationError("fewer than 2 (S1, B) pairs in stratum " + name);
    }
  }

  NormalMarkerLaw law;
  law.has_bip = any_bip;
  double es = 0.0, es2 = 0.0, eb = 0.0, eb2 = 0.0, esb = 0.0;
  for (int h = 0; h < 2; ++h) {
    if (p[h] == 0.0) continue;
    es += p[h] * s_mom[h].mean();
    es2 += p[h] * s_mom[h].second();
    if (any_bip) {
      eb += p[h] * b_mom[h].mean();
      eb2 += p[h] * b_mom[h].second();
      esb += p[h] * sb_sum[h] / sb_n[h];
    }
  }
  law.mean_s = es;
  law.var_s = es2 - es * es;
  if (!(law.var_s > 0.0)) throw EstimationError("degenerate marker variance");
  if (!any_bip) {
    law.mean_b = 0.0;
    law.var_b = 1.0;
    law.rho = 0.0;
    return law;
  }
  law.mean_b = eb;
  law.var_b = eb2 - eb * eb;
  if (!(law.var_b > 0.0)) throw EstimationError("degenerate BIP variance");
  law.rho = (esb - es * eb) / std::sqrt(law.var_s * law.var_b);
  if (!(std::abs(law.rho) < 1.0)) {
    throw EstimationError("combined S-B correlation " + format_real(law.rho) + " is outside (-1, 1)");
  }
  return law;
}

}  // namespace vaxsurr
