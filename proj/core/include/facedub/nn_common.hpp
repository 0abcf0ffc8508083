#pragma once

#include <torch/torch.h>

namespace facedub::layers {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEps = 1e-5;

torch::Tensor lrelu(const torch::Tensor& x);

// k x k convolution with "same" padding.
torch::nn::Conv2d conv2d(int64_t in, int64_t out, int64_t kernel = 3, int64_t stride = 1);
torch::nn::Conv1d conv1d(int64_t in, int64_t out, int64_t kernel = 3);

// Per-sample, per-channel normalisation over the spatial dims of a
// B x C x H x W tensor (biased variance). Throws NumericalError when H*W < 2.
torch::Tensor instance_normalize(const torch::Tensor& x, double eps = kNormEps);

// Bilinear resize of a B x C x H x W tensor (align_corners = false).
torch::Tensor resize_to(const torch::Tensor& x, int64_t height, int64_t width);

// Sets every parameter of `module` to zero.
void zero_parameters(torch::nn::Module& module);

// Scales every parameter of `module` by `factor`.
void scale_parameters(torch::nn::Module& module, double factor);

}  // namespace facedub::layers
