#include "facedub/nn_common.hpp"

#include "facedub/errors.hpp"

namespace facedub::layers {
namespace F = torch::nn::functional;

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

torch::nn::Conv2d conv2d(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

torch::nn::Conv1d conv1d(int64_t in, int64_t out, int64_t kernel) {
  return torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, kernel).padding(kernel / 2));
}

torch::Tensor instance_normalize(const torch::Tensor& x, double eps) {
  if (x.dim() != 4) throw ShapeError("instance_normalize expects B x C x H x W");
  if (x.size(2) * x.size(3) < 2) throw NumericalError("instance normalisation needs at least 2 spatial sites");
  const auto mean = x.mean({2, 3}, /*keepdim=*/true);
  const auto var = (x - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  return (x - mean) / torch::sqrt(var + eps);
}

torch::Tensor resize_to(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(2) == height && x.size(3) == width) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

void zero_parameters(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& p : module.parameters()) p.zero_();
}

void scale_parameters(torch::nn::Module& module, double factor) {
  torch::NoGradGuard guard;
  for (auto& p : module.parameters()) p.mul_(factor);
}

}  // namespace facedub::layers
