#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "facedub/config.hpp"
#include "facedub/geometry.hpp"
#include "facedub/inpainting.hpp"
#include "facedub/metrics.hpp"
#include "facedub/warping.hpp"

using namespace facedub;

namespace {

void BM_ConvexHull(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<Point2> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = {u(rng), u(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(convex_hull(pts));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConvexHull)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNLogN);

void BM_Warp(benchmark::State& state) {
  torch::NoGradGuard ng;
  const auto n = state.range(0);
  const auto f = torch::randn({4, 40, n, n * 3 / 4});
  const auto flow = 0.05 * torch::randn({4, 2, n, n * 3 / 4});
  for (auto _ : state) benchmark::DoNotOptimize(warp(f, flow));
}
BENCHMARK(BM_Warp)->Arg(16)->Arg(32)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const auto n = state.range(0);
  const auto a = torch::rand({3, n, n * 3 / 4});
  const auto b = (a + 0.1 * torch::randn_like(a)).clamp(0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128)->Arg(256);

void BM_SmoothMask(benchmark::State& state) {
  auto m = torch::zeros({128, 96});
  m.slice(0, 40, 100).slice(1, 20, 76).fill_(1.0);
  const RegionMask mask{m, MaskKind::binary};
  for (auto _ : state) benchmark::DoNotOptimize(smooth_mask(mask, default_smoothing_sigma(128)));
}
BENCHMARK(BM_SmoothMask);

void BM_GeneratorForward(benchmark::State& state) {
  torch::NoGradGuard ng;
  ModelConfig cfg;
  cfg.height = 64;
  cfg.width = 48;
  cfg.embed_dim = 64;
  cfg.avau_layers = 2;
  cfg.feature_channels = 40;
  cfg.encoder_width = 16;
  cfg.unet_width = 32;
  cfg.decoder_width = 32;
  torch::manual_seed(0);
  Generator g(cfg);
  g->eval();
  const auto b = state.range(0);
  const auto src = torch::rand({b, 3, 64, 48});
  const auto refs = torch::rand({b, 5, 3, 64, 48});
  const auto mouths = torch::rand({b, 5, 3, 32, 24});
  const auto audio = torch::randn({b, 9, 29});
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(src, refs, mouths, audio).image);
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_GeneratorForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
