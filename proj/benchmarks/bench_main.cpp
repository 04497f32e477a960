#include <benchmark/benchmark.h>

#include "qfluct/harness.hpp"
#include "qfluct/runtime.hpp"

using namespace qfluct;

namespace {

void BM_LmgDiagonalize(benchmark::State& st) {
  const LmgParams p{static_cast<int>(st.range(0)), 0.5, Parity::even};
  for (auto _ : st) benchmark::DoNotOptimize(diagonalize_shared(p));
  st.SetComplexityN(st.range(0) / 2);
}
BENCHMARK(BM_LmgDiagonalize)->RangeMultiplier(2)->Range(250, 2000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_DickeDiagonalize(benchmark::State& st) {
  DickeParams d;
  d.two_j = static_cast<int>(st.range(0));
  d.n_max = 14 * d.two_j;
  d.alpha = 0.6;
  d.sector = Parity::even;
  for (auto _ : st) benchmark::DoNotOptimize(diagonalize_shared(d));
}
BENCHMARK(BM_DickeDiagonalize)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_TransitionMatrix(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto a = diagonalize_shared(LmgParams{n, 0.2, Parity::even});
  const auto b = diagonalize_shared(LmgParams{n, 0.5, Parity::even});
  for (auto _ : st) benchmark::DoNotOptimize(transition_matrix(*a, *b));
}
BENCHMARK(BM_TransitionMatrix)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_WorkDistribution(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  SpectrumCache cache(LmgParams{n, 0.2, Parity::even});
  const Trajectory tr{{0.2, 0.5}};
  const auto init = microcanonical_window_ensemble(cache.get(0.2), -0.4 * n, 25);
  const auto bins = support_bins(init, tr, cache, 0.0, 0.005 * n);
  cache.propagator(tr);
  for (auto _ : st) benchmark::DoNotOptimize(tpm_work_distribution(init, tr, cache, bins));
}
BENCHMARK(BM_WorkDistribution)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_FluctuationVariance(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto target = diagonalize_shared(LmgParams{n, 0.5, Parity::even});
  const auto s = prepare_procedure_i(target, -0.24 * n);
  const auto obs = observable_matrix("nt_over_N", target->model);
  for (auto _ : st) benchmark::DoNotOptimize(fluctuation_variance(s, obs, VarianceMode::exact));
}
BENCHMARK(BM_FluctuationVariance)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_LmgPhaseIntegral(benchmark::State& st) {
  double e = -0.5;
  for (auto _ : st) {
    benchmark::DoNotOptimize(lmg_phase_integral(0.5, e, LmgClassicalForm::qq_consistent, nullptr));
    e = e > 0.4 ? -0.5 : e + 0.01;
  }
}
BENCHMARK(BM_LmgPhaseIntegral);

void BM_ShellAverage(benchmark::State& st) {
  const auto obs = lmg_classical_observable("nt_over_N");
  for (auto _ : st) benchmark::DoNotOptimize(lmg_shell_average_reduced(0.5, obs, -0.24, 0.002));
}
BENCHMARK(BM_ShellAverage)->Unit(benchmark::kMicrosecond);

void BM_RStatistic(benchmark::State& st) {
  const auto lv = goe_spectrum(static_cast<std::size_t>(st.range(0)), 3);
  for (auto _ : st) benchmark::DoNotOptimize(r_statistic_range(lv, lv[lv.size() / 4], lv[3 * lv.size() / 4]));
}
BENCHMARK(BM_RStatistic)->Arg(1600);

}  // namespace

int main(int argc, char** argv) {
  if (!ensure_sound_blas(argc, argv)) return 3;
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 2;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
