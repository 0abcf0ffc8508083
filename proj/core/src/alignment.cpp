#include "facedub/alignment.hpp"

#include <cmath>

#include "facedub/errors.hpp"
#include "facedub/nn_common.hpp"

namespace facedub {
using torch::indexing::Slice;

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

AudioEncoderImpl::AudioEncoderImpl(int window, int embed_dim, int width)
    : window_(window),
      conv1_(register_module("conv1", layers::conv1d(29, width))),
      conv2_(register_module("conv2", layers::conv1d(width, width))),
      proj_(register_module("proj", torch::nn::Linear(width * window, embed_dim))) {}

torch::Tensor AudioEncoderImpl::forward(const torch::Tensor& audio) {
  if (audio.dim() != 3 || audio.size(1) != window_ || audio.size(2) != 29) {
    throw ShapeError("audio encoder expects B x " + std::to_string(window_) + " x 29");
  }
  auto x = audio.transpose(1, 2);
  x = layers::lrelu(conv1_(x));
  x = layers::lrelu(conv2_(x));
  return proj_(x.flatten(1));
}

MouthEncoderImpl::MouthEncoderImpl(int embed_dim, int width)
    : conv1_(register_module("conv1", layers::conv2d(3, width, 3, 2))),
      conv2_(register_module("conv2", layers::conv2d(width, 2 * width, 3, 2))),
      conv3_(register_module("conv3", layers::conv2d(2 * width, 2 * width, 3, 2))),
      proj_(register_module("proj", torch::nn::Linear(2 * width, embed_dim))) {}

torch::Tensor MouthEncoderImpl::forward(const torch::Tensor& crops) {
  auto x = layers::lrelu(conv1_(crops));
  x = layers::lrelu(conv2_(x));
  x = layers::lrelu(conv3_(x));
  return proj_(x.mean({2, 3}));
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int embed_dim, int heads)
    : heads_(heads),
      q_(register_module("q", torch::nn::Linear(embed_dim, embed_dim))),
      k_(register_module("k", torch::nn::Linear(embed_dim, embed_dim))),
      v_(register_module("v", torch::nn::Linear(embed_dim, embed_dim))),
      out_(register_module("out", torch::nn::Linear(embed_dim, embed_dim))) {}

AttentionResult MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& context) {
  const auto b = query.size(0);
  const auto lq = query.size(1);
  const auto lk = context.size(1);
  const auto d = query.size(2);
  const auto dh = d / heads_;
  auto split = [&](const torch::Tensor& t, int64_t len) { return t.view({b, len, heads_, dh}).transpose(1, 2); };
  const auto q = split(q_(query), lq);
  const auto k = split(k_(context), lk);
  const auto v = split(v_(context), lk);
  const auto weights = torch::softmax(torch::matmul(q, k.transpose(2, 3)) / std::sqrt(static_cast<double>(dh)), -1);
  const auto mixed = torch::matmul(weights, v).transpose(1, 2).reshape({b, lq, d});
  return {out_(mixed), weights};
}

AvauImpl::AvauImpl(int embed_dim, int heads)
    : norm_self_(register_module("norm_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})))),
      norm_query_(register_module("norm_query", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})))),
      norm_context_(
          register_module("norm_context", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})))),
      norm_ff_(register_module("norm_ff", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})))),
      self_attn_(register_module("self_attn", MultiHeadAttention(embed_dim, heads))),
      cross_attn_(register_module("cross_attn", MultiHeadAttention(embed_dim, heads))),
      ff1_(register_module("ff1", torch::nn::Linear(embed_dim, 2 * embed_dim))),
      ff2_(register_module("ff2", torch::nn::Linear(2 * embed_dim, embed_dim))) {}

AvauResult AvauImpl::forward(const torch::Tensor& tokens) {
  if (tokens.dim() != 3 || tokens.size(1) < 2) throw InvalidParameter("AVAU needs the audio token and >= 1 reference");
  AvauResult r;
  const auto normed = norm_self_(tokens);
  auto sa = self_attn_(normed, normed);
  r.self_weights = sa.weights;
  auto x = tokens + sa.values;

  auto audio = x.index({Slice(), Slice(0, 1)});
  auto visual = x.index({Slice(), Slice(1, torch::indexing::None)});
  auto ca = cross_attn_(norm_query_(audio), norm_context_(visual));
  r.cross_weights = ca.weights;
  x = torch::cat({audio + ca.values, visual}, 1);

  r.tokens = x + ff2_(torch::gelu(ff1_(norm_ff_(x))));
  return r;
}

CrossModalEncoderImpl::CrossModalEncoderImpl(int embed_dim)
    : conv1_(register_module("conv1", layers::conv1d(embed_dim, embed_dim))),
      conv2_(register_module("conv2", layers::conv1d(embed_dim, embed_dim))) {}

torch::Tensor CrossModalEncoderImpl::forward(const torch::Tensor& tokens) {
  auto x = tokens.transpose(1, 2);  // B x D x L
  x = conv2_(layers::lrelu(conv1_(x)));
  return x.mean(2);
}

AlignmentNetImpl::AlignmentNetImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int d = config.embed_dim;
  audio_encoder_ = register_module("audio_encoder", AudioEncoder(config.audio_window, d));
  mouth_encoder_ = register_module("mouth_encoder", MouthEncoder(d, config.mouth_width));
  e_alpha_ = register_parameter("e_alpha", torch::randn({d}) * 0.02);
  e_beta_ = register_parameter("e_beta", torch::randn({d}) * 0.02);
  units_ = register_module("units", torch::nn::ModuleList());
  for (int i = 0; i < config.avau_layers; ++i) units_->push_back(Avau(d, config.heads));
  if (config.ablation.no_cm) {
    token_projection_ =
        register_module("token_projection", torch::nn::Linear((config.n_refs + 1) * d, d));
  } else {
    cross_modal_ = register_module("cross_modal", CrossModalEncoder(d));
  }
}

torch::Tensor AlignmentNetImpl::encode_audio(const torch::Tensor& audio) {
  require_finite(audio, "audio features");
  return audio_encoder_(audio) + e_alpha_;
}

torch::Tensor AlignmentNetImpl::encode_mouths(const torch::Tensor& mouths) {
  if (mouths.dim() != 5) throw ShapeError("mouth crops must be B x N x 3 x h x w");
  require_finite(mouths, "mouth crops");
  const auto b = mouths.size(0);
  const auto n = mouths.size(1);
  const auto flat = mouths.reshape({b * n, mouths.size(2), mouths.size(3), mouths.size(4)});
  return mouth_encoder_(flat).view({b, n, -1}) + e_beta_;
}

std::vector<AvauResult> AlignmentNetImpl::run_units(const torch::Tensor& tokens) {
  std::vector<AvauResult> out;
  auto x = tokens;
  for (const auto& unit : *units_) {
    out.push_back(unit->as<AvauImpl>()->forward(x));
    x = out.back().tokens;
  }
  return out;
}

AlignmentResult AlignmentNetImpl::forward(const torch::Tensor& audio, const torch::Tensor& mouths) {
  if (mouths.dim() != 5 || mouths.size(1) < 1) throw InvalidParameter("alignment needs at least one reference");
  AlignmentResult r;
  r.e_a = encode_audio(audio);
  r.e_v = encode_mouths(mouths);
  r.units = run_units(torch::cat({r.e_a.unsqueeze(1), r.e_v}, 1));
  r.tokens = r.units.back().tokens;
  r.relevance = r.units.back().cross_weights.mean(1).squeeze(1);
  r.order = std::get<1>(torch::sort(r.relevance.detach(), /*stable=*/true, /*dim=*/1, /*descending=*/true));

  const auto d = r.tokens.size(2);
  auto visual = r.tokens.index({Slice(), Slice(1, torch::indexing::None)});
  visual = visual.gather(1, r.order.unsqueeze(-1).expand({-1, -1, d}));
  const auto ordered = torch::cat({r.tokens.index({Slice(), Slice(0, 1)}), visual}, 1);

  if (uses_cross_modal()) {
    r.v_alg = cross_modal_(ordered) + r.e_a;
  } else {
    r.v_alg = token_projection_(ordered.flatten(1));
  }
  return r;
}

}  // namespace facedub
