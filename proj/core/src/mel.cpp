#include "vaxsurr/mel.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>

#include "vaxsurr/error.hpp"
#include "vaxsurr/likelihood.hpp"
#include "vaxsurr/optimize.hpp"
#include "vaxsurr/parallel.hpp"
#include "vaxsurr/seeding.hpp"

namespace vaxsurr {

std::string to_string(NuisanceModel model) {
  switch (model) {
    case NuisanceModel::Normal: return "normal";
    case NuisanceModel::Categorical: return "categorical";
    case NuisanceModel::None: return "none";
  }
  return "?";
}

NuisanceModel parse_nuisance_model(const std::string& text) {
  if (text == "normal") return NuisanceModel::Normal;
  if (text == "categorical") return NuisanceModel::Categorical;
  if (text == "none") return NuisanceModel::None;
  throw ConfigError("unknown nuisance model '" + text + "' (expected normal, categorical or none)");
}

MarkerDistribution estimate_nuisance(const Dataset& data, NuisanceModel model) {
  switch (model) {
    case NuisanceModel::Normal: return estimate_normal(data);
    case NuisanceModel::Categorical: return estimate_categorical(data);
    case NuisanceModel::None: return PointMass{0.0};
  }
  throw InputError("unknown nuisance model");
}

CoxParams initial_params(const Dataset& data) {
  double events = 0.0, exposure = 0.0;
  for (const auto& s : data.subjects) {
    if (!s.at_risk) continue;
    events += s.event ? 1.0 : 0.0;
    exposure += std::max(0, s.last_visit - 1);
  }
  const double pooled = exposure > 0.0 ? std::clamp(events / exposure, 1e-4, 0.5) : 0.01;
  CoxParams p;
  p.beta4.assign(static_cast<std::size_t>(data.w_dim), 0.0);
  p.lambda0.assign(static_cast<std::size_t>(data.grid.visit_count() - 1), pooled);
  return p;
}

FitResult fit_mel(const Dataset& data, const MarkerDistribution& dist, const FitOptions& opts) {
  if (opts.max_iterations < 1) throw InputError("max_iterations must be >= 1");
  if (!(opts.gradient_tolerance > 0.0)) throw InputError("gradient_tolerance must be > 0");
  const LikelihoodPlan plan(data, dist, opts.engine);
  const CoxParams init = opts.initial_params.value_or(initial_params(data));
  init.validate(data.w_dim, data.grid.visit_count());
  const std::vector<double> theta0 = to_unconstrained(init);
  const std::size_t dim = theta0.size();

  std::vector<std::size_t> free;
  if (opts.free_mask.empty()) {
    free.resize(dim);
    std::iota(free.begin(), free.end(), 0);
  } else {
    if (opts.free_mask.size() != dim) throw InputError("free_mask length differs from the parameter count");
    for (std::size_t i = 0; i < dim; ++i) {
      if (opts.free_mask[i]) free.push_back(i);
    }
  }

  std::vector<double> theta = theta0, grad(dim);
  const auto expand = [&](std::span<const double> x) {
    for (std::size_t i = 0; i < free.size(); ++i) theta[free[i]] = x[i];
  };
  const Objective objective = [&](std::span<const double> x, std::span<double> g) {
    expand(x);
    const double ll = plan.evaluate(theta, grad);
    for (std::size_t i = 0; i < free.size(); ++i) g[i] = -grad[free[i]];
    return -ll;
  };

  std::vector<double> x0(free.size());
  for (std::size_t i = 0; i < free.size(); ++i) x0[i] = theta0[free[i]];
  const double init_ll = plan.evaluate(theta0, {});
  if (!std::isfinite(init_ll)) throw InputError("estimated likelihood is not finite at the initial parameters");

  MinimizeOptions mopts;
  mopts.max_iterations = opts.max_iterations;
  mopts.gradient_tolerance = opts.gradient_tolerance;
  const MinimizeResult res = minimize_bfgs(objective, std::move(x0), mopts);

  expand(res.x);
  FitResult out;
  out.params = from_unconstrained(theta, data.w_dim);
  out.loglik = -res.f;
  out.initial_loglik = init_ll;
  out.converged = res.converged;
  out.iterations = res.iterations;
  out.gradient_norm = res.gradient_norm;
  out.at_boundary = std::any_of(out.params.lambda0.begin(), out.params.lambda0.end(),
                                [](double l) { return l < 1e-6 || l > 1.0 - 1e-6; });
  return out;
}

FitResult fit_gold(const Dataset& complete, FitOptions opts) {
  for (const auto& s : complete.subjects) {
    if (s.at_risk && !s.marker) {
      throw InputError("gold-standard fit requires S1 on every at-risk subject (subject " + std::to_string(s.id) +
                       " has none)");
    }
  }
  opts.nuisance = NuisanceModel::None;
  return fit_mel(complete, PointMass{0.0}, opts);
}

std::vector<double> loglik_gradient(const Dataset& data, const CoxParams& params, const MarkerDistribution& dist,
                                    const IntegrationEngine& engine) {
  const LikelihoodPlan plan(data, dist, engine);
  params.validate(data.w_dim, data.grid.visit_count());
  const auto theta = to_unconstrained(params);
  std::vector<double> grad(theta.size());
  plan.evaluate(theta, grad);
  return grad;
}

Dataset resample_by_arm(const Dataset& data, std::mt19937_64& rng) {
  std::vector<std::size_t> arm_index[2];
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    arm_index[data.subjects[i].arm == 1 ? 1 : 0].push_back(i);
  }
  Dataset out;
  out.grid = data.grid;
  out.w_dim = data.w_dim;
  out.subjects.reserve(data.subjects.size());
  std::int64_t next_id = 0;
  for (const auto& idx : arm_index) {
    if (idx.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      SubjectRecord s = data.subjects[idx[pick(rng)]];
      s.id = next_id++;
      out.subjects.push_back(std::move(s));
    }
  }
  return out;
}

BootstrapResult bootstrap_se(const Dataset& data, const std::optional<DesignSpec>& design, int n_reps,
                             const FitOptions& opts, int threads) {
  if (n_reps < 2) throw InputError("bootstrap needs at least 2 replicates");
  if (design) check_design(data, *design);
  // Fails early (EstimationError) when the original data cannot support the nuisance fit.
  (void)estimate_nuisance(data, opts.nuisance);

  BootstrapResult out;
  out.n_requested = n_reps;
  out.seed = opts.seed;
  std::vector<std::optional<CoxParams>> estimates(static_cast<std::size_t>(n_reps));
  parallel_for(estimates.size(), threads, [&](std::size_t r) {
    std::mt19937_64 rng(derive_seed(opts.seed, {r}));
    const Dataset replicate = resample_by_arm(data, rng);
    try {
      const auto dist = estimate_nuisance(replicate, opts.nuisance);
      const FitResult fit = fit_mel(replicate, dist, opts);
      if (fit.converged) estimates[r] = fit.params;
    } catch (const EstimationError&) {
    } catch (const NumericError&) {
    } catch (const InputError&) {
    }
  });

  for (auto& e : estimates) {
    if (e) out.replicate_estimates.push_back(std::move(*e));
  }
  out.n_converged = static_cast<int>(out.replicate_estimates.size());

  const int w_dim = data.w_dim;
  const int dim = parameter_count(w_dim, data.grid.visit_count());
  out.se.assign(static_cast<std::size_t>(dim), std::numeric_limits<double>::quiet_NaN());
  if (out.n_converged >= 2) {
    const auto flatten = [](const CoxParams& p) {
      std::vector<double> v{p.beta1, p.beta2, p.beta3};
      v.insert(v.end(), p.beta4.begin(), p.beta4.end());
      v.insert(v.end(), p.lambda0.begin(), p.lambda0.end());
      return v;
    };
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0), sq(static_cast<std::size_t>(dim), 0.0);
    for (const auto& p : out.replicate_estimates) {
      const auto v = flatten(p);
      for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
    for (auto& m : mean) m /= out.n_converged;
    for (const auto& p : out.replicate_estimates) {
      const auto v = flatten(p);
      for (std::size_t i = 0; i < v.size(); ++i) sq[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
    }
    for (std::size_t i = 0; i < sq.size(); ++i) out.se[i] = std::sqrt(sq[i] / (out.n_converged - 1));
  }
  const int failed = n_reps - out.n_converged;
  if (failed * 5 > n_reps) {
    out.warning = std::to_string(failed) + " of " + std::to_string(n_reps) + " bootstrap replicates did not converge";
  }
  return out;
}

SurrogateTest test_beta3(double beta3, double se, double alpha) {
  if (!(se > 0.0) || !std::isfinite(se)) throw NumericError("standard error of beta3 must be positive and finite");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  SurrogateTest t;
  t.z = beta3 / se;
  t.critical = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha);
  t.reject = t.z < -t.critical;
  return t;
}

SurrogateTest test_beta3(const FitResult& fit, const BootstrapResult& boot, double alpha) {
  return test_beta3(fit.params.beta3, boot.se.empty() ? 0.0 : boot.se[2], alpha);
}

}  // namespace vaxsurr
