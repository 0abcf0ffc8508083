#pragma once

// Identity-audio correspondence embedding: encodes the driving audio and the
// N reference mouth crops, lets them attend to each other through a stack of
// audio-visual alignment units (AVAU), and compresses the resulting tokens
// into one D-dim conditioning vector with an audio skip connection.
//
// Token layout everywhere: index 0 is the audio token, 1..N the references.
// There are no positional encodings, so the units are equivariant to the
// order of the references.

#include <vector>

#include <torch/torch.h>

#include "facedub/config.hpp"

namespace facedub {

// E_a without the modality token: temporal convs over the T x 29 window,
// flattened and projected to D. Also serves as the stand-alone audio encoder
// of the no-alignment ablation.
class AudioEncoderImpl : public torch::nn::Module {
 public:
  AudioEncoderImpl(int window, int embed_dim, int width = 64);

  // B x T x 29 -> B x D
  torch::Tensor forward(const torch::Tensor& audio);

  int window() const { return window_; }

 private:
  int window_;
  torch::nn::Conv1d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(AudioEncoder);

// E_v without the modality token: strided convs, global average pool, linear.
class MouthEncoderImpl : public torch::nn::Module {
 public:
  MouthEncoderImpl(int embed_dim, int width);

  // B x 3 x h x w -> B x D
  torch::Tensor forward(const torch::Tensor& crops);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(MouthEncoder);

struct AttentionResult {
  torch::Tensor values;   // B x Lq x D
  torch::Tensor weights;  // B x heads x Lq x Lk, rows sum to 1
};

class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(int embed_dim, int heads);

  AttentionResult forward(const torch::Tensor& query, const torch::Tensor& context);

 private:
  int heads_;
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(MultiHeadAttention);

struct AvauResult {
  torch::Tensor tokens;         // B x (N+1) x D
  torch::Tensor self_weights;   // B x heads x (N+1) x (N+1)
  torch::Tensor cross_weights;  // B x heads x 1 x N, audio over references
};

// One alignment unit, pre-norm residual wiring:
//   x  <- x + SelfAttn(LN(x))
//   xa <- xa + CrossAttn(LN(xa), LN(xv))     audio token queries the references
//   x  <- x + FF(LN(x))
class AvauImpl : public torch::nn::Module {
 public:
  AvauImpl(int embed_dim, int heads);

  AvauResult forward(const torch::Tensor& tokens);

 private:
  torch::nn::LayerNorm norm_self_{nullptr}, norm_query_{nullptr}, norm_context_{nullptr}, norm_ff_{nullptr};
  MultiHeadAttention self_attn_{nullptr}, cross_attn_{nullptr};
  torch::nn::Linear ff1_{nullptr}, ff2_{nullptr};
};
TORCH_MODULE(Avau);

// E_cm: two width-preserving 1-D convolutions (kernel 3) over the token
// sequence, then mean pooling to a single D-dim vector.
class CrossModalEncoderImpl : public torch::nn::Module {
 public:
  explicit CrossModalEncoderImpl(int embed_dim);

  // B x L x D -> B x D
  torch::Tensor forward(const torch::Tensor& tokens);

  // The last convolution; zeroing it makes the encoder output exactly zero.
  torch::nn::Conv1d& output_layer() { return conv2_; }

 private:
  torch::nn::Conv1d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(CrossModalEncoder);

struct AlignmentResult {
  torch::Tensor v_alg;       // B x D
  torch::Tensor e_a;         // B x D, audio embedding including e_alpha
  torch::Tensor e_v;         // B x N x D, visual embeddings including e_beta
  torch::Tensor tokens;      // B x (N+1) x D after the last unit
  torch::Tensor relevance;   // B x N, audio-to-reference attention of the last unit (head mean)
  torch::Tensor order;       // B x N, reference indices sorted by decreasing relevance
  std::vector<AvauResult> units;
};

class AlignmentNetImpl : public torch::nn::Module {
 public:
  explicit AlignmentNetImpl(const ModelConfig& config);

  // e_a = E_a(A) + e_alpha. Throws NumericalError on non-finite input.
  torch::Tensor encode_audio(const torch::Tensor& audio);
  // e_v = E_v(I_M) + e_beta for B x N x 3 x h x w crops -> B x N x D.
  torch::Tensor encode_mouths(const torch::Tensor& mouths);
  // Runs the AVAU stack over [e_a, e_v^1..N].
  std::vector<AvauResult> run_units(const torch::Tensor& tokens);

  // Full module. Before compression the reference tokens are put in
  // decreasing order of audio relevance, which makes v_alg independent of
  // the order in which references were supplied. With `no_cm` the ordered
  // tokens are flattened and linearly projected to D, without audio skip.
  AlignmentResult forward(const torch::Tensor& audio, const torch::Tensor& mouths);

  torch::Tensor& audio_token() { return e_alpha_; }
  torch::Tensor& visual_token() { return e_beta_; }
  AudioEncoder& audio_encoder() { return audio_encoder_; }
  MouthEncoder& mouth_encoder() { return mouth_encoder_; }
  CrossModalEncoder& cross_modal() { return cross_modal_; }
  bool uses_cross_modal() const { return !cross_modal_.is_empty(); }

 private:
  ModelConfig config_;
  AudioEncoder audio_encoder_{nullptr};
  MouthEncoder mouth_encoder_{nullptr};
  torch::Tensor e_alpha_, e_beta_;
  torch::nn::ModuleList units_;
  CrossModalEncoder cross_modal_{nullptr};
  torch::nn::Linear token_projection_{nullptr};
};
TORCH_MODULE(AlignmentNet);

}  // namespace facedub
