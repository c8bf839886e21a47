// Entropy and gradient kernels: serial reference vs OpenMP vs the dense
// observable-operator route, on the gridworld (N = 180, T = 10) and the
// illustrative model.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "opacity/cost_value.hpp"
#include "opacity/entropy.hpp"
#include "opacity/inference.hpp"
#include "opacity/kernels.hpp"
#include "opacity/scenarios.hpp"

using namespace opacity;

namespace {

struct Fixture {
  MaskMdp mdp;
  PolicyParams theta;
  std::vector<ObservationSeq> samples;
};

const Fixture& gridworld() {
  static const Fixture f = [] {
    const HmmSpec spec = build_gridworld(default_gridworld_config());
    MaskMdp mdp = build_mask_mdp(spec);
    PolicyParams theta = final_state_masking_policy(spec);
    // Soften the baseline so every action has some mass.
    theta.values() *= 0.1;
    auto samples = observation_sequences(sample_trajectories(mdp, theta, 1500, 1));
    return Fixture{std::move(mdp), std::move(theta), std::move(samples)};
  }();
  return f;
}

const Fixture& illustrative() {
  static const Fixture f = [] {
    MaskMdp mdp = build_mask_mdp(build_illustrative());
    PolicyParams theta = PolicyParams::zeros(mdp);
    return Fixture{std::move(mdp), std::move(theta), {}};
  }();
  return f;
}

void BM_BatchSerial(benchmark::State& state) {
  const Fixture& f = gridworld();
  const bool grad = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_batch_serial(f.mdp, f.theta, f.samples, grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.samples.size()));
}
BENCHMARK(BM_BatchSerial)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BatchParallel(benchmark::State& state) {
  const Fixture& f = gridworld();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(static_cast<int>(state.range(1)));
  const bool grad = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_batch_parallel(f.mdp, f.theta, f.samples, grad));
  omp_set_num_threads(saved);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.samples.size()));
}
BENCHMARK(BM_BatchParallel)->ArgsProduct({{0, 1}, {1, 2, 4}})->UseRealTime()->Unit(benchmark::kMillisecond);

// The dense route builds 180 × 180 operators and their derivatives; only a
// slice of the batch is used so a run finishes in reasonable time.
void BM_DenseOperatorRoute(benchmark::State& state) {
  const Fixture& f = gridworld();
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const ObserverHmm hmm(f.mdp, f.theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += secret_posterior(hmm, f.samples[i], true).grad_p_secret.sum();
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_DenseOperatorRoute)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_KernelPosteriorSlice(benchmark::State& state) {
  const Fixture& f = gridworld();
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::span<const ObservationSeq> slice(f.samples.data(), n);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_batch_serial(f.mdp, f.theta, slice, true));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_KernelPosteriorSlice)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_ExactSerial(benchmark::State& state) {
  const Fixture& f = illustrative();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_exact_serial(f.mdp, f.theta, true, kDefaultEnumerationCap));
}
BENCHMARK(BM_ExactSerial)->Unit(benchmark::kMicrosecond);

void BM_ExactParallel(benchmark::State& state) {
  const Fixture& f = illustrative();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::entropy_exact_parallel(f.mdp, f.theta, true, kDefaultEnumerationCap));
}
BENCHMARK(BM_ExactParallel)->UseRealTime()->Unit(benchmark::kMicrosecond);

void BM_SampleTrajectories(benchmark::State& state) {
  const Fixture& f = gridworld();
  for (auto _ : state) benchmark::DoNotOptimize(sample_trajectories(f.mdp, f.theta, 1500, 2));
}
BENCHMARK(BM_SampleTrajectories)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
