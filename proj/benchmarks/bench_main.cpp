#include <benchmark/benchmark.h>

#include "efgan/losses.hpp"
#include "efgan/metrics.hpp"
#include "efgan/model.hpp"
#include "efgan/trainer.hpp"
#include "support.hpp"

using namespace efgan;

static void BM_StageForward(benchmark::State& state) {
  torch::set_num_threads(1);
  const int size = static_cast<int>(state.range(0));
  auto model = make_model(testing::toy_config(testing::centered_layout(size)), 1);
  model->eval();
  torch::NoGradGuard no_grad;
  auto x = testing::random_faces(2, size);
  auto aus = torch::rand({2, 4});
  for (auto _ : state) benchmark::DoNotOptimize(model->stage(0)->forward(x, aus).refined);
}
BENCHMARK(BM_StageForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  auto cfg = testing::toy_config(testing::centered_layout(64));
  cfg.n_stages = static_cast<int>(state.range(0));
  auto model = make_model(cfg, 2);
  TrainConfig train;
  Trainer trainer(model, train, {torch::rand({4})});
  Batch batch;
  batch.source = testing::random_faces(2, 64);
  batch.target = testing::random_faces(2, 64);
  batch.source_aus = torch::rand({2, 4});
  batch.target_aus = torch::rand({2, 4});
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch).cascade_total);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

static void BM_Psnr(benchmark::State& state) {
  auto a = torch::rand({16, 3, 128, 128}), b = torch::rand({16, 3, 128, 128});
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b, 2.0));
}
BENCHMARK(BM_Psnr);

static void BM_Frechet(benchmark::State& state) {
  const int64_t d = state.range(0);
  auto fa = torch::randn({4 * d, d}, torch::kDouble), fb = torch::randn({4 * d, d}, torch::kDouble);
  auto a = stats_from_features(fa), b = stats_from_features(fb);
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_Frechet)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
