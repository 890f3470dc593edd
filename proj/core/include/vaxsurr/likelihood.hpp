#pragma once

// Estimated log-likelihood over the four observation classes:
//   log L = sum_{L1} log L1 + sum_{L2} log L2 + sum_{L3} log L3 + sum_{L4} log L4.
// L3/L4 integrate the L1 form against the fitted marker law (given B, or
// marginal). The nuisance law is fixed while (beta, lambda0) vary.
//
// Optimization works in unconstrained coordinates
//   theta = (beta1, beta2, beta3, beta4..., logit lambda_2, ..., logit lambda_K).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vaxsurr/dft_cox.hpp"
#include "vaxsurr/marker_dist.hpp"
#include "vaxsurr/quad.hpp"

namespace vaxsurr {

int parameter_count(int w_dim, int visit_count);
std::vector<double> to_unconstrained(const CoxParams& params);
CoxParams from_unconstrained(std::span<const double> theta, int w_dim);
std::vector<std::string> parameter_names(int w_dim, int visit_count);

double loglik_integrated(const SubjectRecord& subject, const CoxParams& params, const MarkerDistribution& dist,
                         const IntegrationEngine& engine);

double total_loglik(const Dataset& data, const CoxParams& params, const MarkerDistribution& dist,
                    const IntegrationEngine& engine);

// Precomputed evaluation plan: subjects sharing (class, V, M, delta, W and
// integration nodes) are merged into one weighted unit.
class LikelihoodPlan {
 public:
  LikelihoodPlan(const Dataset& data, const MarkerDistribution& dist, const IntegrationEngine& engine);

  double value(const CoxParams& params) const;
  // Value and gradient with respect to theta; grad may be empty to skip it.
  double evaluate(std::span<const double> theta, std::span<double> grad) const;

  int w_dim() const { return w_dim_; }
  int visit_count() const { return visit_count_; }
  int dimension() const { return parameter_count(w_dim_, visit_count_); }
  std::size_t unit_count() const { return units_.size(); }
  // Number of at-risk subjects per class L1..L4.
  const std::array<std::size_t, 4>& class_counts() const { return class_counts_; }

 private:
  struct Unit {
    int arm;
    int last_visit;
    bool event;
    double multiplicity;
    std::size_t w_offset;
    std::size_t node_begin;
    std::size_t node_end;
    std::int64_t subject_id;
    ObservationClass cls;
  };

  int w_dim_;
  int visit_count_;
  std::vector<Unit> units_;
  std::vector<double> node_s_;
  std::vector<double> node_w_;
  std::vector<double> covariates_;
  std::array<std::size_t, 4> class_counts_{};
};

}  // namespace vaxsurr
