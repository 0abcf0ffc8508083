#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "facedub/errors.hpp"
#include "facedub/nn_common.hpp"
#include "facedub/warping.hpp"
#include "support.hpp"

using namespace facedub;
using torch::indexing::Slice;

TEST(FeatureEncoder, StrideArithmetic) {
  torch::manual_seed(0);
  FeatureEncoder enc(16, 8);
  EXPECT_EQ(enc->forward(torch::rand({2, 3, 64, 48})).sizes(), (std::vector<int64_t>{2, 16, 16, 12}));
  EXPECT_THROW(enc->forward(torch::rand({1, 3, 62, 48})), ShapeError);
  EXPECT_THROW(enc->forward(torch::rand({1, 1, 64, 48})), ShapeError);
}

TEST(WarpingNet, ReferenceChannelsConcatenate) {
  auto cfg = fdtest::tiny_model();
  cfg.feature_channels = 80;
  torch::manual_seed(1);
  WarpingNet net(cfg);
  const auto f_r = net->encode_references(torch::rand({2, 5, 3, 64, 48}));
  EXPECT_EQ(f_r.sizes(), (std::vector<int64_t>{2, 80, 16, 12}));
  // block i of the concatenation comes from reference i alone
  auto refs = torch::rand({1, 5, 3, 64, 48});
  const auto single = net->reference_encoder()->forward(refs.index({Slice(), 2}));
  EXPECT_TRUE(torch::allclose(net->encode_references(refs).index({Slice(), Slice(32, 48)}), single, 1e-6, 1e-6));
}

TEST(Fusion, IdentityAndCommutativity) {
  torch::manual_seed(2);
  FusionBlock fuse(20);
  const auto a = torch::randn({2, 20, 16, 12});
  const auto b = torch::randn({2, 20, 16, 12});
  EXPECT_TRUE(torch::equal(fuse->forward(a, b), fuse->forward(b, a)));
  EXPECT_EQ(fuse->forward(a, b).sizes(), a.sizes());
  layers::zero_parameters(*fuse->residual_output());
  EXPECT_TRUE(torch::equal(fuse->forward(a, torch::zeros_like(a)), a));
  EXPECT_THROW(fuse->forward(a, torch::randn({2, 20, 16, 11})), ShapeError);
}

TEST(AdaIN, UnitScaleIsInstanceNorm) {
  torch::manual_seed(3);
  AdaIN norm(6, 32);
  layers::zero_parameters(*norm->affine());
  const auto out = norm->forward(torch::randn({2, 6, 10, 8}) * 3 + 1, torch::randn({2, 32}));
  EXPECT_LT(out.mean({2, 3}).abs().max().item<float>(), 1e-6F);
  EXPECT_LT((out.std({2, 3}, false) - 1).abs().max().item<float>(), 1e-4F);
}

TEST(AdaIN, MomentsMatchPredictedAffine) {
  torch::manual_seed(4);
  AdaIN norm(6, 32);
  const auto v = torch::randn({2, 32});
  const auto out = norm->forward(torch::randn({2, 6, 10, 8}), v);
  const auto params = norm->affine()->forward(v);
  const auto gamma = 1 + params.index({Slice(), Slice(0, 6)});
  const auto beta = params.index({Slice(), Slice(6, 12)});
  EXPECT_LT((out.mean({2, 3}) - beta).abs().max().item<float>(), 1e-4F);
  EXPECT_LT((out.std({2, 3}, false) - gamma.abs()).abs().max().item<float>(), 1e-4F);
}

TEST(AdaIN, AffineInvarianceAndErrors) {
  torch::manual_seed(5);
  AdaIN norm(6, 32);
  // large variance so the epsilon in the normaliser is negligible
  const auto x = 4 * torch::randn({1, 6, 10, 8});
  const auto v = torch::randn({1, 32});
  EXPECT_LT((norm->forward(2.5 * x - 0.7, v) - norm->forward(x, v)).abs().max().item<float>(), 1e-5F);
  EXPECT_THROW(norm->forward(torch::randn({1, 6, 1, 1}), v), NumericalError);
  EXPECT_THROW(norm->forward(torch::randn({1, 5, 4, 4}), v), ShapeError);
}

TEST(FlowUNet, ZeroHeadAndBounds) {
  torch::manual_seed(6);
  FlowUNet net(20, 8, 32, 2.0);
  const auto fused = torch::randn({2, 20, 16, 12});
  const auto v = torch::randn({2, 32});
  const auto flow = net->forward(fused, v);
  EXPECT_EQ(flow.sizes(), (std::vector<int64_t>{2, 2, 16, 12}));
  layers::scale_parameters(*net->head(), 1e4);
  const auto big = net->forward(fused * 50, v * 50);
  EXPECT_LE(big.abs().max().item<float>(), 2.0F);
  layers::zero_parameters(*net->head());
  EXPECT_EQ(net->forward(fused, v).abs().max().item<float>(), 0.0F);
}

TEST(Warp, ZeroFlowIsIdentity) {
  torch::manual_seed(7);
  const auto f = torch::randn({2, 5, 16, 12});
  const auto out = warp(f, torch::zeros({2, 2, 16, 12}));
  // at most one ulp apart
  const auto ulp = torch::nextafter(f.abs(), torch::full_like(f, INFINITY)) - f.abs();
  EXPECT_TRUE(((out - f).abs() <= ulp).all().item<bool>());
}

TEST(Warp, OnePixelShiftOracle) {
  auto f = torch::zeros({1, 1, 4, 4});
  f[0][0][1][2] = 1.0;
  auto flow = torch::zeros({1, 2, 4, 4});
  flow.index_put_({0, 0}, 2.0 / 4.0);  // one pixel to the right in normalised units
  const auto out = warp(f, flow);
  // out(y, x) = f(y, x + 1), border column repeats
  auto expect = torch::zeros({1, 1, 4, 4});
  expect[0][0][1][1] = 1.0;
  EXPECT_TRUE(torch::allclose(out, expect, 0.0, 1e-6));

  auto ramp = torch::arange(16, torch::kFloat32).view({1, 1, 4, 4});
  const auto shifted = warp(ramp, flow).view({4, 4});
  const float oracle[4][4] = {{1, 2, 3, 3}, {5, 6, 7, 7}, {9, 10, 11, 11}, {13, 14, 15, 15}};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(shifted[y][x].item<float>(), oracle[y][x], 1e-6);
  }
  // half-pixel step down blends rows
  auto down = torch::zeros({1, 2, 4, 4});
  down.index_put_({0, 1}, 0.25);
  EXPECT_NEAR(warp(ramp, down)[0][0][0][0].item<float>(), 2.0, 1e-6);
  EXPECT_THROW(warp(ramp, torch::zeros({1, 2, 4, 3})), ShapeError);
}

TEST(Warp, FlowGradientMatchesFiniteDifferences) {
  torch::manual_seed(8);
  const auto f = torch::randn({1, 3, 8, 6}, torch::kFloat64);
  // 0.3 * 8 / 2 = 1.2 px max displacement keeps samples off integer points
  auto flow = (torch::rand({1, 2, 8, 6}, torch::kFloat64) * 0.3 - 0.15).requires_grad_(true);
  const auto weights = torch::randn({1, 3, 8, 6}, torch::kFloat64);
  auto objective = [&](const torch::Tensor& m) { return (warp(f, m) * weights).sum(); };
  objective(flow).backward();
  const auto grad = flow.grad().view({-1});
  std::mt19937_64 rng(9);
  int checked = 0;
  while (checked < 20) {
    const auto idx = static_cast<int64_t>(rng() % flow.numel());
    const auto fd = fdtest::finite_difference(flow.detach(), idx, 1e-7,
                                              [&] { return objective(flow.detach()).item<double>(); });
    EXPECT_LT(fdtest::rel_err(grad[idx].item<double>(), fd), 1e-3) << idx;
    ++checked;
  }
}

TEST(Warp, FeatureGradientMatchesFiniteDifferences) {
  torch::manual_seed(10);
  auto f = torch::randn({1, 2, 6, 6}, torch::kFloat64).requires_grad_(true);
  const auto flow = torch::rand({1, 2, 6, 6}, torch::kFloat64) * 0.4 - 0.2;
  warp(f, flow).pow(2).sum().backward();
  for (int64_t idx : {0, 7, 20, 41, 66}) {
    const auto fd = fdtest::finite_difference(f.detach(), idx, 1e-6,
                                              [&] { return warp(f.detach(), flow).pow(2).sum().item<double>(); });
    EXPECT_LT(fdtest::rel_err(f.grad().view({-1})[idx].item<double>(), fd), 1e-4) << idx;
  }
}

TEST(Warp, LinearInFeatures) {
  torch::manual_seed(11);
  const auto f1 = torch::randn({2, 4, 10, 8});
  const auto f2 = torch::randn({2, 4, 10, 8});
  const auto flow = torch::rand({2, 2, 10, 8}) - 0.5;
  const auto lhs = warp(1.5 * f1 - 0.5 * f2, flow);
  const auto rhs = 1.5 * warp(f1, flow) - 0.5 * warp(f2, flow);
  EXPECT_LT((lhs - rhs).abs().max().item<float>(), 1e-5F);
}

TEST(Warp, TranslationEquivariance) {
  torch::manual_seed(12);
  const int k = 3;
  const auto f = torch::randn({1, 2, 12, 16});
  // small flow so interior samples never touch the border
  const auto flow = (torch::rand({1, 2, 12, 16}) - 0.5) * 0.2;
  const auto out = warp(f, flow);
  const auto out_shifted = warp(f.roll(k, 3), flow.roll(k, 3));
  const auto a = out.index({Slice(), Slice(), Slice(2, 10), Slice(2, 11)});
  const auto b = out_shifted.index({Slice(), Slice(), Slice(2, 10), Slice(2 + k, 11 + k)});
  EXPECT_LT((a - b).abs().max().item<float>(), 1e-5F);
}

TEST(WarpingNet, GradientsReachInputs) {
  torch::manual_seed(13);
  WarpingNet net(fdtest::tiny_model());
  auto src = torch::rand({2, 3, 64, 48}).requires_grad_(true);
  auto refs = torch::rand({2, 5, 3, 64, 48}).requires_grad_(true);
  auto v = torch::randn({2, 32}).requires_grad_(true);
  const auto r = net->forward(src, refs, v);
  EXPECT_EQ(r.flow.sizes(), (std::vector<int64_t>{2, 2, 16, 12}));
  EXPECT_EQ(r.warped.sizes(), (std::vector<int64_t>{2, 20, 16, 12}));
  (r.warped.pow(2).sum() + r.source_features.pow(2).sum()).backward();
  EXPECT_GT(src.grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(refs.grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(v.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : net->named_parameters()) {
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_GT(p.value().grad().abs().sum().item<double>(), 0.0) << p.key();
  }
}
