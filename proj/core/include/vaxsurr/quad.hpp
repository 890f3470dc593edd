#pragma once

// Integration engines for expectations over the marker law.
//   GaussHermite(n):   probabilists' rule, E[g(mu + sigma U)], U ~ N(0, 1);
//                      weights sum to one.
//   ExactCategorical:  sum_j pmf_j g(s_j).
//   EmpiricalMixture:  p11 * mean_{delta=1} g(S) + p10 * mean_{delta=0} g(S)
//                      over IC_V, optionally restricted to one BIP cell.

#include <cmath>
#include <concepts>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vaxsurr/error.hpp"
#include "vaxsurr/marker_dist.hpp"

namespace vaxsurr {

struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Cached per node count; thread-safe.
const GaussHermiteRule& gauss_hermite_rule(int n_nodes);

class IntegrationEngine {
 public:
  enum class Kind { GaussHermite, ExactCategorical, EmpiricalMixture };

  static IntegrationEngine gauss_hermite(int n_nodes = 15);
  static IntegrationEngine exact_categorical() { return IntegrationEngine(Kind::ExactCategorical, 0); }
  static IntegrationEngine empirical_mixture() { return IntegrationEngine(Kind::EmpiricalMixture, 0); }

  Kind kind() const { return kind_; }
  int n_nodes() const { return n_nodes_; }
  // Only valid for GaussHermite.
  const GaussHermiteRule& rule() const;

  std::string describe() const;

 private:
  IntegrationEngine(Kind kind, int n) : kind_(kind), n_nodes_(n) {}
  Kind kind_;
  int n_nodes_;
  const GaussHermiteRule* rule_ = nullptr;
};

template <std::invocable<double> G>
double expect_normal(G&& g, double mu, double sigma, const IntegrationEngine& engine) {
  if (engine.kind() != IntegrationEngine::Kind::GaussHermite) {
    throw InputError("expect_normal requires a Gauss-Hermite engine");
  }
  if (!(sigma > 0.0)) throw InputError("expect_normal requires sigma > 0");
  const auto& rule = engine.rule();
  double total = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double v = g(mu + sigma * rule.nodes[q]);
    if (!std::isfinite(v)) throw NumericError("integrand is non-finite at quadrature node " + std::to_string(q));
    total += rule.weights[q] * v;
  }
  return total;
}

template <std::invocable<double> G>
double expect_empirical(G&& g, const StratifiedSample& sample, const StratumProbs& probs,
                        std::optional<double> b_cell = std::nullopt) {
  double sum[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (const auto& o : sample) {
    if (b_cell && (!o.b || *o.b != *b_cell)) continue;
    const int h = o.event ? 1 : 0;
    sum[h] += g(o.s);
    count[h] += 1.0;
  }
  const double p[2] = {probs.p10, probs.p11};
  double total = 0.0;
  for (int h = 0; h < 2; ++h) {
    if (p[h] == 0.0) continue;
    if (count[h] == 0.0) {
      throw NumericError(std::string("empty stratum delta = ") + (h ? "1" : "0") +
                         (b_cell ? " in BIP cell " + std::to_string(*b_cell) : std::string(" (marginal)")));
    }
    total += p[h] * sum[h] / count[h];
  }
  return total;
}

// A discretized law: expectations are sum_q weight_q * g(s_q).
struct MarkerNode {
  double s;
  double weight;
};

// Nodes for the law of S given the subject's BIP (conditional) or the
// marginal law (bip empty), under the chosen engine.
std::vector<MarkerNode> marker_nodes(const MarkerDistribution& dist, const IntegrationEngine& engine,
                                     std::optional<double> bip);

}  // namespace vaxsurr
