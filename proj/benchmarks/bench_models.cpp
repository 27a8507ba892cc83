#include <benchmark/benchmark.h>

#include <filesystem>

#include "csud/config.hpp"
#include "csud/models.hpp"
#include "csud/rain.hpp"
#include "csud/trainer.hpp"

namespace {

csud::TrainConfig desk_config() {
  csud::TrainConfig c;
  csud::apply_desk_scale_profile(c);
  return c;
}

void BM_GeneratorForward(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto side = state.range(0);
  auto models = csud::init_models(desk_config().models, 0);
  auto x = torch::rand({2, 3, side, side});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(models.generator->forward(x, x));
}
BENCHMARK(BM_GeneratorForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DerainerForward(benchmark::State& state) {
  torch::set_num_threads(1);
  auto models = csud::init_models(desk_config().models, 0);
  auto x = torch::rand({1, 3, 96, 96});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(models.derainer->forward(x));
}
BENCHMARK(BM_DerainerForward)->Unit(benchmark::kMillisecond);

// One full joint iteration (D update plus combined G/Der update) at desk scale.
void BM_TrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto root = std::filesystem::temp_directory_path() / "csud_bench_corpus";
  for (const auto* side : {"clean", "rainy"}) csud::write_clean_scenes(root / side, 4, 72, 72, 7);
  auto config = desk_config();
  config.num_gan_constraints = static_cast<int>(state.range(0));
  auto sampler = std::make_shared<const csud::UnpairedSampler>(csud::UnpairedCorpus::from_root(root, 64, 0));
  csud::Trainer trainer(config, sampler);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step());
  std::filesystem::remove_all(root);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->Iterations(10);

}  // namespace
