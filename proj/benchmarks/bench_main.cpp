#include <benchmark/benchmark.h>

#include "nucdiff/nuclear_diffusion.hpp"
#include "nucdiff/proxops.hpp"
#include "nucdiff/rpca.hpp"
#include "nucdiff/synth.hpp"

using namespace nucdiff;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols) {
  Rng rng(42);
  return standard_normal(rng, rows, cols);
}

void BM_Svt(benchmark::State& state) {
  const Eigen::MatrixXd m = random_matrix(state.range(0), 7);
  for (auto _ : state) benchmark::DoNotOptimize(svt(m, 0.5));
}
BENCHMARK(BM_Svt)->Arg(1024)->Arg(4096)->Arg(65536);

void BM_GmmPredictNoise(benchmark::State& state) {
  const SynthInstance inst = generate(SynthSpec{});
  const auto sched = make_schedule(ScheduleKind::vp_linear, 5000);
  const Frame x = inst.y.frame(0);
  for (auto _ : state) benchmark::DoNotOptimize(inst.gmm_prior->predict_noise(x, 500, sched));
}
BENCHMARK(BM_GmmPredictNoise);

void BM_RpcaSolve(benchmark::State& state) {
  const SynthInstance inst = generate(SynthSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(rpca_solve(inst.y));
}
BENCHMARK(BM_RpcaSolve)->Unit(benchmark::kMillisecond);

void BM_NuclearDiffusion(benchmark::State& state) {
  const SynthInstance inst = generate(SynthSpec{});
  NucDiffConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(nuclear_diffusion_sample(inst.y, *inst.gmm_prior, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NuclearDiffusion)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
