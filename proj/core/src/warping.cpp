#include "facedub/warping.hpp"

#include "facedub/errors.hpp"
#include "facedub/nn_common.hpp"

namespace facedub {
using torch::indexing::Slice;

FeatureEncoderImpl::FeatureEncoderImpl(int out_channels, int width)
    : stem_(register_module("stem", layers::conv2d(3, width))),
      down1_(register_module("down1", layers::conv2d(width, 2 * width, 3, 2))),
      down2_(register_module("down2", layers::conv2d(2 * width, out_channels, 3, 2))) {}

torch::Tensor FeatureEncoderImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("feature encoder expects B x 3 x H x W");
  if (image.size(2) % 4 != 0 || image.size(3) % 4 != 0) {
    throw ShapeError("image height and width must be divisible by 4");
  }
  auto x = layers::lrelu(stem_(image));
  x = layers::lrelu(down1_(x));
  return down2_(x);
}

FusionBlockImpl::FusionBlockImpl(int channels)
    : conv1_(register_module("conv1", layers::conv2d(channels, channels))),
      conv2_(register_module("conv2", layers::conv2d(channels, channels))) {}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& source, const torch::Tensor& reference) {
  if (source.sizes() != reference.sizes()) throw ShapeError("F_S and F_R must share C x h x w");
  const auto x = source + reference;
  return x + conv2_(layers::lrelu(conv1_(x)));
}

AdaINImpl::AdaINImpl(int channels, int embed_dim)
    : channels_(channels), affine_(register_module("affine", torch::nn::Linear(embed_dim, 2 * channels))) {}

torch::Tensor AdaINImpl::forward(const torch::Tensor& x, const torch::Tensor& v) {
  if (x.dim() != 4 || x.size(1) != channels_) throw ShapeError("AdaIN channel mismatch");
  if (v.dim() != 2 || v.size(0) != x.size(0)) throw ShapeError("AdaIN condition must be B x D");
  const auto params = affine_(v);
  const auto gamma = 1.0 + params.index({Slice(), Slice(0, channels_)}).unsqueeze(-1).unsqueeze(-1);
  const auto beta = params.index({Slice(), Slice(channels_, 2 * channels_)}).unsqueeze(-1).unsqueeze(-1);
  return gamma * layers::instance_normalize(x) + beta;
}

FlowUNetImpl::FlowUNetImpl(int in_channels, int width, int embed_dim, double flow_clamp)
    : flow_clamp_(flow_clamp),
      n_in_(register_module("n_in", AdaIN(in_channels, embed_dim))),
      n_down1_(register_module("n_down1", AdaIN(width, embed_dim))),
      n_down2_(register_module("n_down2", AdaIN(width, embed_dim))),
      n_up1_(register_module("n_up1", AdaIN(2 * width, embed_dim))),
      n_up0_(register_module("n_up0", AdaIN(2 * width, embed_dim))),
      n_head_(register_module("n_head", AdaIN(width, embed_dim))),
      c_in_(register_module("c_in", layers::conv2d(in_channels, width))),
      c_down1_(register_module("c_down1", layers::conv2d(width, width, 3, 2))),
      c_down2_(register_module("c_down2", layers::conv2d(width, width, 3, 2))),
      c_up1_(register_module("c_up1", layers::conv2d(2 * width, width))),
      c_up0_(register_module("c_up0", layers::conv2d(2 * width, width))),
      head_(register_module("head", layers::conv2d(width, 2))) {
  // Start close to the identity warp.
  layers::scale_parameters(*head_, 0.01);
}

torch::Tensor FlowUNetImpl::forward(const torch::Tensor& fused, const torch::Tensor& v) {
  const auto e0 = layers::lrelu(c_in_(n_in_(fused, v)));
  const auto e1 = layers::lrelu(c_down1_(n_down1_(e0, v)));
  const auto e2 = layers::lrelu(c_down2_(n_down2_(e1, v)));
  auto d1 = torch::cat({layers::resize_to(e2, e1.size(2), e1.size(3)), e1}, 1);
  d1 = layers::lrelu(c_up1_(n_up1_(d1, v)));
  auto d0 = torch::cat({layers::resize_to(d1, e0.size(2), e0.size(3)), e0}, 1);
  d0 = layers::lrelu(c_up0_(n_up0_(d0, v)));
  return flow_clamp_ * torch::tanh(head_(n_head_(d0, v)));
}

torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow) {
  if (features.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2 || flow.size(0) != features.size(0) ||
      flow.size(2) != features.size(2) || flow.size(3) != features.size(3)) {
    throw ShapeError("warp needs B x C x h x w features and a matching B x 2 x h x w flow");
  }
  const auto b = features.size(0);
  const auto c = features.size(1);
  const auto h = features.size(2);
  const auto w = features.size(3);
  const auto opts = features.options();

  const auto xs = torch::arange(w, opts).view({1, 1, w});
  const auto ys = torch::arange(h, opts).view({1, h, 1});
  const auto sx = (xs + flow.select(1, 0) * (static_cast<double>(w) / 2.0)).clamp(0.0, static_cast<double>(w - 1));
  const auto sy = (ys + flow.select(1, 1) * (static_cast<double>(h) / 2.0)).clamp(0.0, static_cast<double>(h - 1));

  const auto x0 = sx.detach().floor();
  const auto y0 = sy.detach().floor();
  const auto wx = sx - x0;
  const auto wy = sy - y0;
  const auto x0i = x0.to(torch::kLong);
  const auto y0i = y0.to(torch::kLong);
  const auto x1i = (x0i + 1).clamp_max(w - 1);
  const auto y1i = (y0i + 1).clamp_max(h - 1);

  const auto flat = features.reshape({b, c, h * w});
  auto gather = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    const auto idx = (yi * w + xi).view({b, 1, h * w}).expand({b, c, h * w});
    return flat.gather(2, idx).view({b, c, h, w});
  };
  const auto wx_ = wx.unsqueeze(1);
  const auto wy_ = wy.unsqueeze(1);
  return gather(y0i, x0i) * ((1.0 - wx_) * (1.0 - wy_)) + gather(y0i, x1i) * (wx_ * (1.0 - wy_)) +
         gather(y1i, x0i) * ((1.0 - wx_) * wy_) + gather(y1i, x1i) * (wx_ * wy_);
}

WarpingNetImpl::WarpingNetImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  source_encoder_ = register_module("source_encoder", FeatureEncoder(config.feature_channels, config.encoder_width));
  reference_encoder_ =
      register_module("reference_encoder", FeatureEncoder(config.reference_channels(), config.encoder_width));
  fusion_ = register_module("fusion", FusionBlock(config.feature_channels));
  flow_net_ = register_module(
      "flow_net", FlowUNet(config.feature_channels, config.unet_width, config.embed_dim, config.flow_clamp));
}

torch::Tensor WarpingNetImpl::encode_source(const torch::Tensor& masked_source) {
  return source_encoder_(masked_source);
}

torch::Tensor WarpingNetImpl::encode_references(const torch::Tensor& references) {
  if (references.dim() != 5 || references.size(2) != 3) throw ShapeError("references must be B x N x 3 x H x W");
  const auto b = references.size(0);
  const auto n = references.size(1);
  const auto flat = references.reshape({b * n, 3, references.size(3), references.size(4)});
  const auto feats = reference_encoder_(flat);
  return feats.view({b, n * feats.size(1), feats.size(2), feats.size(3)});
}

WarpResult WarpingNetImpl::forward(const torch::Tensor& masked_source, const torch::Tensor& references,
                                   const torch::Tensor& condition) {
  WarpResult r;
  r.source_features = encode_source(masked_source);
  r.reference_features = encode_references(references);
  r.fused = fusion_(r.source_features, r.reference_features);
  r.flow = flow_net_(r.fused, condition);
  r.warped = warp(r.reference_features, r.flow);
  return r;
}

}  // namespace facedub
