#pragma once

// Maximum estimated likelihood: the nuisance marker law is estimated from the
// vaccine arm first, then held fixed while (beta, lambda0) maximize the
// estimated log-likelihood. Standard errors come from the bootstrap.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vaxsurr/design.hpp"
#include "vaxsurr/dft_cox.hpp"
#include "vaxsurr/marker_dist.hpp"
#include "vaxsurr/quad.hpp"

namespace vaxsurr {

enum class NuisanceModel {
  Normal,       // bivariate-normal moments
  Categorical,  // nonparametric tables
  None,         // complete-marker data only (gold standard)
};

std::string to_string(NuisanceModel model);
NuisanceModel parse_nuisance_model(const std::string& text);

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  std::optional<CoxParams> initial_params;
  IntegrationEngine engine = IntegrationEngine::gauss_hermite(15);
  NuisanceModel nuisance = NuisanceModel::Normal;
  std::uint64_t seed = 0;
  // Empty: all coordinates free. Otherwise one flag per theta coordinate;
  // fixed coordinates stay at their initial value.
  std::vector<bool> free_mask;
};

struct FitResult {
  CoxParams params;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool at_boundary = false;  // some lambda_k within 1e-6 of 0 or 1
  double initial_loglik = 0.0;
};

MarkerDistribution estimate_nuisance(const Dataset& data, NuisanceModel model);

// beta = 0; every lambda_k = pooled event fraction per at-risk interval.
CoxParams initial_params(const Dataset& data);

FitResult fit_mel(const Dataset& data, const MarkerDistribution& dist, const FitOptions& opts = {});

// Complete-data fit: every at-risk subject must carry S1.
FitResult fit_gold(const Dataset& complete, FitOptions opts = {});

// Analytic gradient in theta = (beta, logit lambda0).
std::vector<double> loglik_gradient(const Dataset& data, const CoxParams& params, const MarkerDistribution& dist,
                                    const IntegrationEngine& engine);

struct BootstrapResult {
  std::vector<CoxParams> replicate_estimates;  // converged replicates only
  std::vector<double> se;  // (beta1, beta2, beta3, beta4..., lambda_2..lambda_K)
  int n_requested = 0;
  int n_converged = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> warning;

  double se_beta(int j) const { return se.at(static_cast<std::size_t>(j - 1)); }
};

// Resamples subjects with replacement within each arm; ids are renumbered.
Dataset resample_by_arm(const Dataset& data, std::mt19937_64& rng);

// Each replicate re-estimates the nuisance law (opts.nuisance) and refits.
BootstrapResult bootstrap_se(const Dataset& data, const std::optional<DesignSpec>& design, int n_reps,
                             const FitOptions& opts, int threads = 1);

struct SurrogateTest {
  double z = 0.0;
  double critical = 0.0;  // z_{1 - alpha}
  bool reject = false;    // one-sided: H1 beta3 < 0
};

SurrogateTest test_beta3(const FitResult& fit, const BootstrapResult& boot, double alpha = 0.05);
SurrogateTest test_beta3(double beta3, double se, double alpha = 0.05);

}  // namespace vaxsurr
