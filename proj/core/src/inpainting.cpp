#include "facedub/inpainting.hpp"

#include "facedub/errors.hpp"
#include "facedub/nn_common.hpp"

namespace facedub {
namespace F = torch::nn::functional;

namespace {

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

torch::Tensor concat_features(const torch::Tensor& warped, const torch::Tensor& source_features) {
  if (warped.sizes() != source_features.sizes()) throw ShapeError("F_w and F_S must share C x h x w");
  return torch::cat({warped, source_features}, 1);
}

torch::nn::Conv2d spade_conv(int64_t in, int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

}  // namespace

SpadeNormImpl::SpadeNormImpl(int channels, int cond_channels, int hidden)
    : trunk_(register_module("trunk", spade_conv(cond_channels, hidden))),
      gamma_(register_module("gamma", spade_conv(hidden, channels))),
      beta_(register_module("beta", spade_conv(hidden, channels))) {}

torch::Tensor SpadeNormImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  if (x.dim() != 4 || cond.dim() != 4 || x.size(0) != cond.size(0)) {
    throw ShapeError("SPADE expects B x C x H x W input and condition");
  }
  const auto c = layers::resize_to(cond, x.size(2), x.size(3));
  const auto t = torch::relu(trunk_(c));
  return (1.0 + gamma_(t)) * layers::instance_normalize(x) + beta_(t);
}

SpadeDecoderImpl::SpadeDecoderImpl(int in_channels, int width)
    : norm1_(register_module("norm1", SpadeNorm(in_channels, in_channels))),
      norm2_(register_module("norm2", SpadeNorm(width, in_channels))),
      conv1_(register_module("conv1", layers::conv2d(in_channels, width))),
      conv2_(register_module("conv2", layers::conv2d(width, width))),
      out_(register_module("out", layers::conv2d(width, 3))) {}

torch::Tensor SpadeDecoderImpl::forward(const torch::Tensor& warped, const torch::Tensor& source_features) {
  const auto x = concat_features(warped, source_features);
  auto h = conv1_(upsample2(layers::lrelu(norm1_(x, x))));
  h = conv2_(upsample2(layers::lrelu(norm2_(h, x))));
  return torch::sigmoid(out_(layers::lrelu(h)));
}

ConvDecoderImpl::ConvDecoderImpl(int in_channels, int width)
    : conv1_(register_module("conv1", layers::conv2d(in_channels, width))),
      conv2_(register_module("conv2", layers::conv2d(width, width))),
      out_(register_module("out", layers::conv2d(width, 3))) {}

torch::Tensor ConvDecoderImpl::forward(const torch::Tensor& warped, const torch::Tensor& source_features) {
  const auto x = concat_features(warped, source_features);
  auto h = conv1_(upsample2(layers::lrelu(x)));
  h = conv2_(upsample2(layers::lrelu(h)));
  return torch::sigmoid(out_(layers::lrelu(h)));
}

GeneratorImpl::GeneratorImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  if (config.ablation.no_alignment) {
    audio_encoder_ = register_module("audio_encoder", AudioEncoder(config.audio_window, config.embed_dim));
  } else {
    alignment_ = register_module("alignment", AlignmentNet(config));
  }
  warping_ = register_module("warping", WarpingNet(config));
  if (config.ablation.no_spade) {
    conv_decoder_ = register_module("decoder", ConvDecoder(2 * config.feature_channels, config.decoder_width));
  } else {
    spade_decoder_ = register_module("decoder", SpadeDecoder(2 * config.feature_channels, config.decoder_width));
  }
}

torch::Tensor GeneratorImpl::condition(const torch::Tensor& audio, const torch::Tensor& mouths) {
  if (!audio_encoder_.is_empty()) {
    if (!torch::isfinite(audio).all().item<bool>()) throw NumericalError("non-finite audio features");
    return audio_encoder_(audio);
  }
  return alignment_(audio, mouths).v_alg;
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& masked_source, const torch::Tensor& references,
                                       const torch::Tensor& mouths, const torch::Tensor& audio) {
  GeneratorOutput out;
  out.v_alg = condition(audio, mouths);
  auto w = warping_(masked_source, references, out.v_alg);
  out.flow = w.flow;
  out.warped = w.warped;
  out.source_features = w.source_features;
  out.image = spade_decoder_.is_empty() ? conv_decoder_(w.warped, w.source_features)
                                        : spade_decoder_(w.warped, w.source_features);
  return out;
}

GeneratorOutput GeneratorImpl::forward(const Batch& batch) {
  return forward(batch.masked_source, batch.references, batch.mouths, batch.audio);
}

GeneratorOutput generate_frame(const Sample& sample, Generator& generator) {
  const Sample one[] = {sample};
  auto out = generator->forward(collate(one));
  out.image = out.image.squeeze(0);
  out.v_alg = out.v_alg.squeeze(0);
  out.flow = out.flow.squeeze(0);
  out.warped = out.warped.squeeze(0);
  out.source_features = out.source_features.squeeze(0);
  return out;
}

}  // namespace facedub
