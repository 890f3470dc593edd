#include "vaxsurr/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kernel.hpp"
#include "vaxsurr/error.hpp"

namespace vaxsurr {
namespace {

double logistic(double g) { return g >= 0.0 ? 1.0 / (1.0 + std::exp(-g)) : std::exp(g) / (1.0 + std::exp(g)); }

// -log(1 - logistic(g)) = log(1 + e^g)
double softplus(double g) { return g > 0.0 ? g + std::log1p(std::exp(-g)) : std::log1p(std::exp(g)); }

std::vector<MarkerNode> nodes_for(const SubjectRecord& s, const MarkerDistribution& dist,
                                  const IntegrationEngine& engine) {
  switch (classify(s)) {
    case ObservationClass::Complete: return {{*s.marker, 1.0}};
    case ObservationClass::Closeout: return {{*s.closeout_marker, 1.0}};
    case ObservationClass::BipOnly: return marker_nodes(dist, engine, s.bip);
    case ObservationClass::Missing: return marker_nodes(dist, engine, std::nullopt);
  }
  return {};
}

}  // namespace

int parameter_count(int w_dim, int visit_count) { return 3 + w_dim + (visit_count - 1); }

std::vector<double> to_unconstrained(const CoxParams& params) {
  std::vector<double> theta{params.beta1, params.beta2, params.beta3};
  theta.insert(theta.end(), params.beta4.begin(), params.beta4.end());
  for (double l : params.lambda0) {
    if (!(l > 0.0 && l < 1.0)) throw InputError("baseline hazards must lie strictly in (0, 1)");
    theta.push_back(std::log(l) - std::log1p(-l));
  }
  return theta;
}

CoxParams from_unconstrained(std::span<const double> theta, int w_dim) {
  const auto w = static_cast<std::size_t>(w_dim);
  if (theta.size() < 4 + w) throw InputError("parameter vector too short");
  CoxParams p;
  p.beta1 = theta[0];
  p.beta2 = theta[1];
  p.beta3 = theta[2];
  p.beta4.assign(theta.begin() + 3, theta.begin() + 3 + static_cast<std::ptrdiff_t>(w));
  for (std::size_t i = 3 + w; i < theta.size(); ++i) p.lambda0.push_back(logistic(theta[i]));
  return p;
}

std::vector<std::string> parameter_names(int w_dim, int visit_count) {
  std::vector<std::string> names{"beta1", "beta2", "beta3"};
  for (int d = 1; d <= w_dim; ++d) names.push_back("beta4_" + std::to_string(d));
  for (int k = 2; k <= visit_count; ++k) names.push_back("lambda" + std::to_string(k));
  return names;
}

double loglik_integrated(const SubjectRecord& subject, const CoxParams& params, const MarkerDistribution& dist,
                         const IntegrationEngine& engine) {
  const auto cls = classify(subject);
  if (cls != ObservationClass::BipOnly && cls != ObservationClass::Missing) {
    throw InputError("subject " + std::to_string(subject.id) + " is not in an integrated class (L3/L4)");
  }
  if (!subject.at_risk) throw InputError("subject " + std::to_string(subject.id) + " is not at risk at t1");
  const auto nodes = marker_nodes(dist, engine, cls == ObservationClass::BipOnly ? subject.bip : std::nullopt);
  double lmax = -std::numeric_limits<double>::infinity();
  std::vector<double> l(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    l[q] = loglik_complete(subject, nodes[q].s, params);
    lmax = std::max(lmax, l[q]);
  }
  double sum = 0.0;
  for (std::size_t q = 0; q < nodes.size(); ++q) sum += nodes[q].weight * std::exp(l[q] - lmax);
  const double out = lmax + std::log(sum);
  if (!(sum > 0.0) || !std::isfinite(out)) {
    throw NumericError("integrated likelihood is not positive and finite for subject " + std::to_string(subject.id));
  }
  return out;
}

double total_loglik(const Dataset& data, const CoxParams& params, const MarkerDistribution& dist,
                    const IntegrationEngine& engine) {
  return LikelihoodPlan(data, dist, engine).value(params);
}

LikelihoodPlan::LikelihoodPlan(const Dataset& data, const MarkerDistribution& dist, const IntegrationEngine& engine)
    : w_dim_(data.w_dim), visit_count_(data.grid.visit_count()) {
  // key: (node-set tag, tag value, V, M, delta, W...) -> unit index
  std::map<std::vector<double>, std::size_t> index;
  for (const auto& s : data.subjects) {
    if (!s.at_risk) continue;
    const auto cls = classify(s);
    ++class_counts_[static_cast<std::size_t>(cls)];
    if (s.last_visit == 1 && !s.event) continue;  // empty product
    if (s.last_visit < 1 || s.last_visit > visit_count_ || (s.event && s.last_visit < 2)) {
      throw InputError("subject " + std::to_string(s.id) + ": last visit incompatible with the grid");
    }
    if (static_cast<int>(s.covariates.size()) != w_dim_) {
      throw InputError("subject " + std::to_string(s.id) + ": covariate count differs from w_dim");
    }
    double tag = 0.0, tag_value = 0.0;
    switch (cls) {
      case ObservationClass::Complete: tag_value = *s.marker; break;
      case ObservationClass::Closeout: tag_value = *s.closeout_marker; break;
      case ObservationClass::BipOnly: tag = 1.0; tag_value = *s.bip; break;
      case ObservationClass::Missing: tag = 2.0; break;
    }
    std::vector<double> key{tag, tag_value, static_cast<double>(s.arm), static_cast<double>(s.last_visit),
                            s.event ? 1.0 : 0.0};
    key.insert(key.end(), s.covariates.begin(), s.covariates.end());
    const auto [it, inserted] = index.try_emplace(std::move(key), units_.size());
    if (!inserted) {
      units_[it->second].multiplicity += 1.0;
      continue;
    }
    std::vector<MarkerNode> nodes;
    try {
      nodes = nodes_for(s, dist, engine);
    } catch (const std::exception& e) {
      throw NumericError("subject " + std::to_string(s.id) + ": " + e.what());
    }
    Unit u{s.arm, s.last_visit, s.event, 1.0, covariates_.size(), node_s_.size(), 0, s.id, cls};
    covariates_.insert(covariates_.end(), s.covariates.begin(), s.covariates.end());
    for (const auto& n : nodes) {
      node_s_.push_back(n.s);
      node_w_.push_back(n.weight);
    }
    u.node_end = node_s_.size();
    units_.push_back(u);
  }
  // Deterministic, input-order-free summation order.
  std::vector<Unit> by_key;
  by_key.reserve(units_.size());
  for (const auto& kv : index) by_key.push_back(units_[kv.second]);
  units_ = std::move(by_key);
}

double LikelihoodPlan::value(const CoxParams& params) const {
  params.validate(w_dim_, visit_count_);
  const auto theta = to_unconstrained(params);
  return evaluate(theta, {});
}

double LikelihoodPlan::evaluate(std::span<const double> theta, std::span<double> grad) const {
  const int K = visit_count_;
  const auto w = static_cast<std::size_t>(w_dim_);
  if (static_cast<int>(theta.size()) != dimension()) throw InputError("parameter vector has the wrong length");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != theta.size()) throw InputError("gradient buffer has the wrong length");

  const double b1 = theta[0], b2 = theta[1], b3 = theta[2];
  const std::span<const double> b4 = theta.subspan(3, w);
  // Indexed by visit k = 0..K (entries 0, 1 unused for hazards).
  std::vector<double> lambda(static_cast<std::size_t>(K) + 1, 0.0), inc(lambda.size(), 0.0), cum(lambda.size(), 0.0);
  for (int k = 2; k <= K; ++k) {
    const double g = theta[3 + w + static_cast<std::size_t>(k - 2)];
    lambda[static_cast<std::size_t>(k)] = logistic(g);
    inc[static_cast<std::size_t>(k)] = softplus(g);
    cum[static_cast<std::size_t>(k)] = cum[static_cast<std::size_t>(k) - 1] + inc[static_cast<std::size_t>(k)];
  }
  std::vector<double> upto(lambda.size(), 0.0), at(lambda.size(), 0.0);
  double g_b1 = 0.0, g_b2 = 0.0, g_b3 = 0.0;
  std::vector<double> g_b4(w, 0.0);

  std::vector<double> l, d_eta, d_cum, d_last;
  double total = 0.0;
  for (const auto& unit : units_) {
    const auto m = static_cast<std::size_t>(unit.last_visit);
    const double* wv = covariates_.data() + unit.w_offset;
    double base = unit.arm * b1;
    for (std::size_t d = 0; d < w; ++d) base += wv[d] * b4[d];
    const double slope = b2 + unit.arm * b3;
    const double cum_before = cum[m - 1];
    const double at_last = inc[m];
    const std::size_t nq = unit.node_end - unit.node_begin;
    const double* s = node_s_.data() + unit.node_begin;
    const double* wq = node_w_.data() + unit.node_begin;

    double ll = 0.0, e_deta = 0.0, e_deta_s = 0.0, e_dcum = 0.0, e_dlast = 0.0;
    if (nq == 1) {
      const auto t = detail::node_terms(std::exp(base + s[0] * slope), cum_before, at_last, unit.event);
      ll = t.loglik + std::log(wq[0]);
      e_deta = t.d_eta;
      e_deta_s = t.d_eta * s[0];
      e_dcum = t.d_cum;
      e_dlast = t.d_last;
    } else {
      l.resize(nq);
      d_eta.resize(nq);
      d_cum.resize(nq);
      d_last.resize(nq);
      double lmax = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < nq; ++q) {
        const auto t = detail::node_terms(std::exp(base + s[q] * slope), cum_before, at_last, unit.event);
        l[q] = t.loglik;
        d_eta[q] = t.d_eta;
        d_cum[q] = t.d_cum;
        d_last[q] = t.d_last;
        lmax = std::max(lmax, l[q]);
      }
      double sum = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        l[q] = wq[q] * std::exp(l[q] - lmax);
        sum += l[q];
      }
      ll = lmax + std::log(sum);
      if (want_grad) {
        for (std::size_t q = 0; q < nq; ++q) {
          const double pi = l[q] / sum;
          e_deta += pi * d_eta[q];
          e_deta_s += pi * d_eta[q] * s[q];
          e_dcum += pi * d_cum[q];
          e_dlast += pi * d_last[q];
        }
      }
    }
    if (!std::isfinite(ll)) {
      throw NumericError(std::string("non-finite ") + to_string(unit.cls) + " contribution for subject " +
                         std::to_string(unit.subject_id));
    }
    const double mult = unit.multiplicity;
    total += mult * ll;
    if (want_grad) {
      g_b1 += mult * unit.arm * e_deta;
      g_b2 += mult * e_deta_s;
      g_b3 += mult * unit.arm * e_deta_s;
      for (std::size_t d = 0; d < w; ++d) g_b4[d] += mult * wv[d] * e_deta;
      upto[m - 1] += mult * e_dcum;
      at[m] += mult * e_dlast;
    }
  }

  if (want_grad) {
    grad[0] = g_b1;
    grad[1] = g_b2;
    grad[2] = g_b3;
    for (std::size_t d = 0; d < w; ++d) grad[3 + d] = g_b4[d];
    double suffix = 0.0;
    for (int k = K; k >= 2; --k) {
      suffix += upto[static_cast<std::size_t>(k)];
      const double d_inc = suffix + at[static_cast<std::size_t>(k)];
      grad[3 + w + static_cast<std::size_t>(k - 2)] = d_inc * lambda[static_cast<std::size_t>(k)];
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient component " + std::to_string(i));
    }
  }
  return total;
}

}  // namespace vaxsurr
