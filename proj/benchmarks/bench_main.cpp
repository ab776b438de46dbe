#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "essvi_mm/env.hpp"
#include "essvi_mm/mlp.hpp"
#include "essvi_mm/noarb.hpp"
#include "essvi_mm/pricing.hpp"
#include "essvi_mm/risk.hpp"

namespace {

using namespace essvi_mm;

void BM_BsCall(benchmark::State& state) {
  double k = 80.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bs_call(BsQuoteInputs{100.0, k, 0.5, 0.2}));
    k = k > 120.0 ? 80.0 : k + 0.1;
  }
}
BENCHMARK(BM_BsCall);

void BM_BsGreeks(benchmark::State& state) {
  double k = 80.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bs_greeks(BsQuoteInputs{100.0, k, 0.5, 0.2}));
    k = k > 120.0 ? 80.0 : k + 0.1;
  }
}
BENCHMARK(BM_BsGreeks);

void BM_EnvStep(benchmark::State& state) {
  MarketMakingEnv env(EnvConfig::defaults(), 0);
  env.reset();
  for (auto _ : state) {
    if (env.done()) env.reset();
    benchmark::DoNotOptimize(env.step(anchor_action()));
  }
}
BENCHMARK(BM_EnvStep);

void BM_SurfacePenalties(benchmark::State& state) {
  const EnvConfig cfg = EnvConfig::defaults();
  std::mt19937_64 rng(0);
  const MarketState s = reset(cfg, rng);
  const PriceLattice lat = surface_lattice(s.estimate, s.spot, penalty_strikes(s.spot, cfg), cfg.caps);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bf_penalty(lat, cfg.penalty).value + cal_penalty(lat, cfg.penalty).value);
  }
}
BENCHMARK(BM_SurfacePenalties);

void BM_CvarSmoothed(benchmark::State& state) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> normal;
  ScenarioBatch batch;
  batch.pnl.resize(static_cast<std::size_t>(state.range(0)));
  for (double& x : batch.pnl) x = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(cvar_smoothed(batch, CvarConfig{}));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CvarSmoothed)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

void BM_MlpForwardBackward(benchmark::State& state) {
  std::mt19937_64 rng(0);
  const MlpParams p = make_mlp({15, 64, 64, 6}, rng);
  MlpParams grads = p;
  const Eigen::VectorXd x = Eigen::VectorXd::Random(15);
  const Eigen::VectorXd dy = Eigen::VectorXd::Ones(6);
  MlpCache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mlp_forward(p, x, &cache));
    benchmark::DoNotOptimize(mlp_backward(p, cache, dy, &grads));
  }
}
BENCHMARK(BM_MlpForwardBackward);

}  // namespace

BENCHMARK_MAIN();
