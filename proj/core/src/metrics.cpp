#include "facedub/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "facedub/dataio.hpp"
#include "facedub/errors.hpp"

namespace facedub {

torch::Tensor to_grayscale(const torch::Tensor& image) {
  const auto x = image.to(torch::kFloat64);
  if (x.dim() == 2) return x;
  if (x.dim() == 3 && x.size(0) == 1) return x[0];
  if (x.dim() == 3 && x.size(0) == 3) return 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2];
  throw ShapeError("expected an H x W, 1 x H x W or 3 x H x W image");
}

torch::Tensor ssim_kernel_1d() {
  auto g = torch::empty({kSsimWindow}, torch::kFloat64);
  auto* p = g.data_ptr<double>();
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    p[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += p[i];
  }
  return g / sum;
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("ssim inputs differ in shape");
  const auto ga = to_grayscale(a);
  const auto gb = to_grayscale(b);
  if (ga.size(0) < kSsimWindow || ga.size(1) < kSsimWindow) throw ShapeError("image smaller than the SSIM window");

  const auto g = ssim_kernel_1d();
  const auto kx = g.view({1, 1, 1, kSsimWindow});
  const auto ky = g.view({1, 1, kSsimWindow, 1});
  auto filt = [&](const torch::Tensor& x) { return torch::conv2d(torch::conv2d(x.view({1, 1, x.size(0), x.size(1)}), kx), ky); };

  const auto mu_a = filt(ga);
  const auto mu_b = filt(gb);
  const auto var_a = filt(ga * ga) - mu_a * mu_a;
  const auto var_b = filt(gb * gb) - mu_b * mu_b;
  const auto cov = filt(ga * gb) - mu_a * mu_b;
  constexpr double c1 = kSsimK1 * kSsimK1;
  constexpr double c2 = kSsimK2 * kSsimK2;
  const auto map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

double psnr_from_mse(double mse) {
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("psnr inputs differ in shape");
  const auto d = a.to(torch::kFloat64) - b.to(torch::kFloat64);
  return psnr_from_mse((d * d).mean().item<double>());
}

double perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& extractor) {
  if (a.sizes() != b.sizes()) throw ShapeError("perceptual distance inputs differ in shape");
  const auto xa = a.dim() == 3 ? a.unsqueeze(0) : a;
  const auto xb = b.dim() == 3 ? b.unsqueeze(0) : b;
  const auto fa = extractor.features(xa.to(torch::kFloat64));
  const auto fb = extractor.features(xb.to(torch::kFloat64));
  double total = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const auto na = fa[i] / (fa[i].norm(2, {1}, true) + 1e-10);
    const auto nb = fb[i] / (fb[i].norm(2, {1}, true) + 1e-10);
    total += (na - nb).norm(2, {1}).mean().item<double>();
  }
  return total / static_cast<double>(fa.size());
}

SyncScores sync_scores(const torch::Tensor& crops, const torch::Tensor& audio, SyncScorer& scorer) {
  if (crops.dim() != 4) throw ShapeError("sync_scores expects F x 3 x h x w crops");
  const int frames = static_cast<int>(crops.size(0));
  if (audio.dim() != 2 || audio.size(0) < frames) throw LengthMismatch("audio shorter than the frame sequence");
  torch::NoGradGuard guard;

  const auto v = torch::nn::functional::normalize(
      scorer->embed_visual(crops.to(torch::kFloat32)).to(torch::kFloat64),
      torch::nn::functional::NormalizeFuncOptions().dim(1));
  const int rows = static_cast<int>(audio.size(0));
  std::vector<torch::Tensor> windows;
  for (int t = 0; t < rows; ++t) windows.push_back(AudioWindow::centered(audio, t, scorer->window()).features);
  const auto a = torch::nn::functional::normalize(
      scorer->embed_audio(torch::stack(windows).to(torch::kFloat32)).to(torch::kFloat64),
      torch::nn::functional::NormalizeFuncOptions().dim(1));

  SyncScores s;
  double best_other = -std::numeric_limits<double>::infinity();
  for (int d = -kSyncMaxOffset; d <= kSyncMaxOffset; ++d) {
    std::vector<int64_t> idx;
    for (int t = 0; t < frames; ++t) idx.push_back(std::clamp(t + d, 0, rows - 1));
    const auto shifted = a.index_select(0, torch::tensor(idx, torch::kLong));
    const double mean_cos = (shifted * v).sum(1).mean().item<double>();
    s.curve.push_back(mean_cos);
    if (d != 0) best_other = std::max(best_other, mean_cos);
  }
  s.confidence = s.curve[kSyncMaxOffset] - best_other;
  s.distance = (a.narrow(0, 0, frames) - v).norm(2, {1}).mean().item<double>();
  return s;
}

}  // namespace facedub
