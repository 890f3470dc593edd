#include "vaxsurr/quad.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace vaxsurr {
namespace {

// Orthonormal probabilists' Hermite polynomials p_0..p_n at x:
//   p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k + 1).
void orthonormal_hermite(int n, double x, std::vector<double>& p) {
  p.assign(static_cast<std::size_t>(n) + 1, 0.0);
  p[0] = 1.0;
  if (n >= 1) p[1] = x;
  for (int k = 1; k < n; ++k) {
    p[static_cast<std::size_t>(k) + 1] =
        (x * p[static_cast<std::size_t>(k)] - std::sqrt(static_cast<double>(k)) * p[static_cast<std::size_t>(k) - 1]) /
        std::sqrt(static_cast<double>(k) + 1.0);
  }
}

GaussHermiteRule build_rule(int n) {
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 1.0;
    return rule;
  }
  // Golub-Welsch starting values from the Jacobi matrix.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);
  std::vector<double> p;
  for (int i = 0; i < n; ++i) {
    double x = solver.eigenvalues()(i);
    // Newton polish on p_n, with p_n' = sqrt(n) p_{n-1}.
    for (int it = 0; it < 10; ++it) {
      orthonormal_hermite(n, x, p);
      const double step = p[static_cast<std::size_t>(n)] /
                          (std::sqrt(static_cast<double>(n)) * p[static_cast<std::size_t>(n) - 1]);
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    orthonormal_hermite(n - 1, x, p);
    double christoffel = 0.0;
    for (double v : p) christoffel += v * v;
    rule.nodes[static_cast<std::size_t>(i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = 1.0 / christoffel;
  }
  // Symmetrize: the rule is exactly symmetric about zero.
  for (int i = 0; i < n / 2; ++i) {
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(n - 1 - i);
    const double x = 0.5 * (rule.nodes[b] - rule.nodes[a]);
    const double w = 0.5 * (rule.weights[a] + rule.weights[b]);
    rule.nodes[a] = -x;
    rule.nodes[b] = x;
    rule.weights[a] = rule.weights[b] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int n_nodes) {
  if (n_nodes < 1 || n_nodes > 200) throw InputError("Gauss-Hermite node count must lie in 1..200");
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n_nodes);
  if (it == cache.end()) it = cache.emplace(n_nodes, build_rule(n_nodes)).first;
  return it->second;
}

IntegrationEngine IntegrationEngine::gauss_hermite(int n_nodes) {
  IntegrationEngine e(Kind::GaussHermite, n_nodes);
  e.rule_ = &gauss_hermite_rule(n_nodes);
  return e;
}

const GaussHermiteRule& IntegrationEngine::rule() const {
  if (rule_ == nullptr) throw InputError("engine has no quadrature rule");
  return *rule_;
}

std::string IntegrationEngine::describe() const {
  switch (kind_) {
    case Kind::GaussHermite: return "gauss-hermite(" + std::to_string(n_nodes_) + ")";
    case Kind::ExactCategorical: return "exact-categorical";
    case Kind::EmpiricalMixture: return "empirical-mixture";
  }
  return "?";
}

std::vector<MarkerNode> marker_nodes(const MarkerDistribution& dist, const IntegrationEngine& engine,
                                     std::optional<double> bip) {
  using Kind = IntegrationEngine::Kind;
  std::vector<MarkerNode> out;
  if (const auto* pm = std::get_if<PointMass>(&dist)) {
    out.push_back({pm->s0, 1.0});
    return out;
  }
  if (const auto* normal = std::get_if<NormalMarkerLaw>(&dist)) {
    if (engine.kind() != Kind::GaussHermite) throw InputError("normal marker law requires a Gauss-Hermite engine");
    double mu = normal->mean_s, var = normal->var_s;
    if (bip) {
      if (!normal->has_bip) throw InputError("marker law was fitted without BIP data");
      mu = normal->conditional_mean(*bip);
      var = normal->conditional_var();
    }
    const double sigma = std::sqrt(var);
    const auto& rule = engine.rule();
    out.reserve(rule.nodes.size());
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) out.push_back({mu + sigma * rule.nodes[q], rule.weights[q]});
    return out;
  }
  const auto& cat = std::get<CategoricalMarkerLaw>(dist);
  if (engine.kind() == Kind::ExactCategorical) {
    const auto& pmf = bip ? cat.conditional_pmf[cat.level_index(*bip)] : cat.marginal_pmf;
    for (std::size_t j = 0; j < cat.support.size(); ++j) {
      if (pmf[j] > 0.0) out.push_back({cat.support[j], pmf[j]});
    }
    return out;
  }
  if (engine.kind() == Kind::EmpiricalMixture) {
    double count[2] = {0.0, 0.0};
    for (const auto& o : cat.sample) {
      if (bip && (!o.b || *o.b != *bip)) continue;
      count[o.event ? 1 : 0] += 1.0;
    }
    const double p[2] = {cat.probs.p10, cat.probs.p11};
    for (int h = 0; h < 2; ++h) {
      if (p[h] > 0.0 && count[h] == 0.0) {
        throw NumericError(std::string("empty stratum delta = ") + (h ? "1" : "0") + " for empirical integration");
      }
    }
    for (const auto& o : cat.sample) {
      if (bip && (!o.b || *o.b != *bip)) continue;
      const int h = o.event ? 1 : 0;
      if (p[h] > 0.0) out.push_back({o.s, p[h] / count[h]});
    }
    return out;
  }
  throw InputError("categorical marker law requires an exact-categorical or empirical-mixture engine");
}

}  // namespace vaxsurr
