#include <benchmark/benchmark.h>

#include "csud/image.hpp"
#include "csud/rain.hpp"

namespace {

void BM_Ssim(benchmark::State& state) {
  const auto side = state.range(0);
  const auto a = csud::synth_clean_scene(side, side, 1);
  const auto b = csud::synth_rain_ccp(a, csud::RainParams{});
  for (auto _ : state) benchmark::DoNotOptimize(csud::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(96)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_StreakLayer(benchmark::State& state) {
  csud::RainParams params;
  params.num_streaks = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(csud::streak_layer(256, 256, params, 3));
}
BENCHMARK(BM_StreakLayer)->Arg(60)->Arg(240)->Unit(benchmark::kMillisecond);

}  // namespace
