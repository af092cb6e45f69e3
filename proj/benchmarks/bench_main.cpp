#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "outpaint/evaluation.hpp"
#include "outpaint/layout_data.hpp"
#include "outpaint/networks.hpp"

using namespace outpaint;

namespace {

ImageSample random_sample(std::int64_t height, std::int64_t width, std::int64_t classes) {
  torch::manual_seed(0);
  return {torch::rand({3, height, width}) * 2 - 1,
          SemanticLayout(torch::randint(classes, {height, width}, torch::kLong), classes),
          BinaryMask::ones(height, width), "bench"};
}

void BM_GeneratorSegForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  const auto profile = state.range(0) == 0 ? NetworkProfile::desk() : NetworkProfile::full();
  auto generator = build_generator_seg(generator_seg_spec(8, profile), 1);
  generator->eval();
  auto input = torch::randn({1, 3 + 8 + 1, profile.image_size, profile.image_size});
  for (auto _ : state) benchmark::DoNotOptimize(generator->forward(input));
}
BENCHMARK(BM_GeneratorSegForward)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_GeneratorImgForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  const auto profile = NetworkProfile::desk();
  auto generator = build_generator_img(generator_img_spec(8, profile), 1);
  generator->eval();
  auto input = torch::randn({1, 12, 64, 64});
  auto condition = torch::randn({1, 9, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(generator->forward(input, condition));
}
BENCHMARK(BM_GeneratorImgForward)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = state.range(0);
  MomentAccumulator a(d), b(d);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Random(4 * d, d);
  a.add_rows(rows);
  b.add_rows(rows.array() + 0.1);
  const auto sa = a.stats(), sb = b.stats();
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(sa, sb));
}
BENCHMARK(BM_FrechetDistance)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ApplyMask(benchmark::State& state) {
  auto sample = random_sample(256, 256, 150);
  sample.mask = make_right_mask(256, 256, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(apply_mask(sample));
}
BENCHMARK(BM_ApplyMask)->Unit(benchmark::kMillisecond);

void BM_CityscapesSplitMerge(benchmark::State& state) {
  const auto sample = random_sample(256, 512, 35);
  for (auto _ : state) {
    auto [left, right] = cityscapes_split(sample);
    benchmark::DoNotOptimize(cityscapes_merge(left, right));
  }
}
BENCHMARK(BM_CityscapesSplitMerge)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
