#include <benchmark/benchmark.h>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/likelihood.hpp"
#include "vaxsurr/mel.hpp"
#include "vaxsurr/sim.hpp"

using namespace vaxsurr;

namespace {

const SimulatedTrial& trial() {
  static const SimulatedTrial t = [] {
    ScenarioConfig c;
    c.seed = 7;
    return simulate_trial(c);
  }();
  return t;
}

const MaskedTrial& masked() {
  static const MaskedTrial m = apply_design(trial(), DesignSpec::preset(DesignKind::Bip, MissingPattern::Medium), 3);
  return m;
}

void BM_LoglikWithGradient(benchmark::State& state) {
  const auto& d = masked().discrete;
  const auto law = estimate_normal(d);
  const LikelihoodPlan plan(d, law, IntegrationEngine::gauss_hermite(static_cast<int>(state.range(0))));
  const auto theta = to_unconstrained(initial_params(d));
  std::vector<double> grad(theta.size());
  for (auto _ : state) benchmark::DoNotOptimize(plan.evaluate(theta, grad));
}
BENCHMARK(BM_LoglikWithGradient)->Arg(15)->Arg(61)->Unit(benchmark::kMicrosecond);

void BM_FitMel(benchmark::State& state) {
  const auto& d = masked().discrete;
  for (auto _ : state) {
    const auto law = estimate_normal(d);
    benchmark::DoNotOptimize(fit_mel(d, law));
  }
}
BENCHMARK(BM_FitMel)->Unit(benchmark::kMillisecond);

void BM_FitGold(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fit_gold(trial().full));
}
BENCHMARK(BM_FitGold)->Unit(benchmark::kMillisecond);

void BM_FitAcem(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fit_acem(masked().continuous));
}
BENCHMARK(BM_FitAcem)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_SimulateTrial(benchmark::State& state) {
  ScenarioConfig c;
  const auto rates = calibrate_rates(c);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_trial(c, rates, ++seed));
}
BENCHMARK(BM_SimulateTrial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
