#pragma once

// Decoder from the warped reference features and the source features back to
// a full-resolution face, plus the generator that chains all three stages.

#include <torch/torch.h>

#include "facedub/alignment.hpp"
#include "facedub/config.hpp"
#include "facedub/dataio.hpp"
#include "facedub/warping.hpp"

namespace facedub {

// Instance norm with spatially varying scale and shift predicted from a
// conditioning map resized (bilinear) to the input:
//   out = (1 + g(cond)) * norm(x) + b(cond)
class SpadeNormImpl : public torch::nn::Module {
 public:
  SpadeNormImpl(int channels, int cond_channels, int hidden = 64);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

  torch::nn::Conv2d& gamma_head() { return gamma_; }
  torch::nn::Conv2d& beta_head() { return beta_; }

 private:
  torch::nn::Conv2d trunk_{nullptr}, gamma_{nullptr}, beta_{nullptr};
};
TORCH_MODULE(SpadeNorm);

// [F_w || F_S] (2C x h x w) -> 3 x 4h x 4w in (0, 1). Each of the two
// upsampling stages is spade -> lrelu -> nearest x2 -> conv; the conditioning
// map of every SPADE layer is the decoder input itself.
class SpadeDecoderImpl : public torch::nn::Module {
 public:
  SpadeDecoderImpl(int in_channels, int width);

  torch::Tensor forward(const torch::Tensor& warped, const torch::Tensor& source_features);

 private:
  SpadeNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(SpadeDecoder);

// Same layout without any normalisation; used by the no_spade ablation.
class ConvDecoderImpl : public torch::nn::Module {
 public:
  ConvDecoderImpl(int in_channels, int width);

  torch::Tensor forward(const torch::Tensor& warped, const torch::Tensor& source_features);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(ConvDecoder);

struct GeneratorOutput {
  torch::Tensor image;            // I_O, B x 3 x H x W
  torch::Tensor v_alg;            // conditioning vector, B x D
  torch::Tensor flow;             // B x 2 x H/4 x W/4
  torch::Tensor warped;           // F_w
  torch::Tensor source_features;  // F_S
};

// Alignment (or the audio-only encoder), warping and decoding in one module.
// Submodule names: "alignment" | "audio_encoder", "warping", "decoder".
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const ModelConfig& config);

  // v_alg from B x T x 29 audio and B x N x 3 x h x w mouth crops.
  torch::Tensor condition(const torch::Tensor& audio, const torch::Tensor& mouths);

  GeneratorOutput forward(const torch::Tensor& masked_source, const torch::Tensor& references,
                          const torch::Tensor& mouths, const torch::Tensor& audio);
  GeneratorOutput forward(const Batch& batch);

  const ModelConfig& config() const { return config_; }
  AlignmentNet& alignment() { return alignment_; }
  WarpingNet& warping() { return warping_; }

 private:
  ModelConfig config_;
  AlignmentNet alignment_{nullptr};
  AudioEncoder audio_encoder_{nullptr};
  WarpingNet warping_{nullptr};
  SpadeDecoder spade_decoder_{nullptr};
  ConvDecoder conv_decoder_{nullptr};
};
TORCH_MODULE(Generator);

// Runs the generator on one sample; the outputs drop the batch dimension.
GeneratorOutput generate_frame(const Sample& sample, Generator& generator);

}  // namespace facedub
