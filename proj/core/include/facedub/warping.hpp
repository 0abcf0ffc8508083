#pragma once

// Flow-based spatial deformation of reference features. Source and reference
// images are encoded to H/4 x W/4 feature maps, fused, and an AdaIN-conditioned
// encoder-decoder predicts a 2-channel motion flow that backward-warps the
// concatenated reference features.

#include <torch/torch.h>

#include "facedub/config.hpp"

namespace facedub {

// Two stride-2 conv blocks after a stride-1 stem: 3 x H x W -> out x H/4 x W/4.
class FeatureEncoderImpl : public torch::nn::Module {
 public:
  FeatureEncoderImpl(int out_channels, int width);

  // Throws ShapeError unless H and W are divisible by 4.
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
};
TORCH_MODULE(FeatureEncoder);

// F_u = E_u(F_S + F_R) with E_u a residual conv block.
class FusionBlockImpl : public torch::nn::Module {
 public:
  explicit FusionBlockImpl(int channels);

  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& reference);

  // Zeroing this layer turns the block into the identity on F_S + F_R.
  torch::nn::Conv2d& residual_output() { return conv2_; }

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(FusionBlock);

// Instance normalisation followed by a per-channel affine map predicted from
// the conditioning vector: out = (1 + g(v)) * norm(x) + b(v).
class AdaINImpl : public torch::nn::Module {
 public:
  AdaINImpl(int channels, int embed_dim);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& v);

  torch::nn::Linear& affine() { return affine_; }

 private:
  int channels_;
  torch::nn::Linear affine_{nullptr};
};
TORCH_MODULE(AdaIN);

// Encoder-decoder (two downsamplings, two upsamplings, skip connections) with
// an AdaIN before every convolution. Output: 2 x h x w flow in normalised
// units, flow_clamp * tanh(head).
class FlowUNetImpl : public torch::nn::Module {
 public:
  FlowUNetImpl(int in_channels, int width, int embed_dim, double flow_clamp);

  torch::Tensor forward(const torch::Tensor& fused, const torch::Tensor& v);

  torch::nn::Conv2d& head() { return head_; }

 private:
  double flow_clamp_;
  AdaIN n_in_{nullptr}, n_down1_{nullptr}, n_down2_{nullptr}, n_up1_{nullptr}, n_up0_{nullptr}, n_head_{nullptr};
  torch::nn::Conv2d c_in_{nullptr}, c_down1_{nullptr}, c_down2_{nullptr}, c_up1_{nullptr}, c_up0_{nullptr},
      head_{nullptr};
};
TORCH_MODULE(FlowUNet);

// Backward warp with bilinear sampling and border clamping:
//   out[:, y, x] = features at (x + u * w / 2, y + v * h / 2)
// where (u, v) = flow[:, y, x] and coordinates index pixel centres.
// Differentiable in both arguments. Throws ShapeError on mismatched sizes.
torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow);

struct WarpResult {
  torch::Tensor source_features;     // F_S, B x C x h x w
  torch::Tensor reference_features;  // F_R, B x C x h x w (N blocks of C/N)
  torch::Tensor fused;               // F_u
  torch::Tensor flow;                // M, B x 2 x h x w
  torch::Tensor warped;              // F_w
};

class WarpingNetImpl : public torch::nn::Module {
 public:
  explicit WarpingNetImpl(const ModelConfig& config);

  // B x 3 x H x W -> B x C x H/4 x W/4
  torch::Tensor encode_source(const torch::Tensor& masked_source);
  // B x N x 3 x H x W -> B x C x H/4 x W/4, references concatenated channel-wise.
  torch::Tensor encode_references(const torch::Tensor& references);

  WarpResult forward(const torch::Tensor& masked_source, const torch::Tensor& references,
                     const torch::Tensor& condition);

  FeatureEncoder& source_encoder() { return source_encoder_; }
  FeatureEncoder& reference_encoder() { return reference_encoder_; }
  FusionBlock& fusion() { return fusion_; }
  FlowUNet& flow_net() { return flow_net_; }

 private:
  ModelConfig config_;
  FeatureEncoder source_encoder_{nullptr}, reference_encoder_{nullptr};
  FusionBlock fusion_{nullptr};
  FlowUNet flow_net_{nullptr};
};
TORCH_MODULE(WarpingNet);

}  // namespace facedub
