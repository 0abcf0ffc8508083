#include "facedub/losses.hpp"

#include <cmath>
#include <random>

#include "facedub/errors.hpp"
#include "facedub/nn_common.hpp"

namespace facedub {

PerceptualExtractor::PerceptualExtractor(uint64_t seed) {
  struct LayerShape {
    int in, out, stride;
  };
  constexpr LayerShape shapes[] = {{3, 16, 1}, {16, 32, 2}, {32, 64, 2}, {64, 64, 2}, {64, 64, 2}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0F, 1.0F);
  for (const auto& s : shapes) {
    const int fan_in = s.in * 9;
    const float scale = std::sqrt(2.0F / static_cast<float>(fan_in));
    auto w = torch::empty({s.out, s.in, 3, 3});
    auto* p = w.data_ptr<float>();
    for (int64_t i = 0; i < w.numel(); ++i) p[i] = scale * normal(rng);
    layers_.push_back({w, torch::zeros({s.out}), s.stride, true});
  }
}

PerceptualExtractor::PerceptualExtractor(std::vector<Layer> layers, double input_offset)
    : layers_(std::move(layers)), input_offset_(input_offset) {
  if (layers_.empty()) throw InvalidParameter("perceptual extractor needs at least one layer");
}

std::vector<torch::Tensor> PerceptualExtractor::features(const torch::Tensor& images) const {
  std::vector<torch::Tensor> out;
  auto x = images - input_offset_;
  for (const auto& l : layers_) {
    const auto w = l.weight.to(x.dtype());
    const auto b = l.bias.to(x.dtype());
    x = torch::conv2d(x, w, b, l.stride, w.size(2) / 2);
    if (l.activation) x = layers::lrelu(x);
    out.push_back(x);
  }
  return out;
}

torch::Tensor perception_loss(const torch::Tensor& output, const torch::Tensor& target,
                              const PerceptualExtractor& extractor) {
  if (output.sizes() != target.sizes()) throw ShapeError("perception loss inputs differ in shape");
  const auto a = output.dim() == 3 ? output.unsqueeze(0) : output;
  const auto b = target.dim() == 3 ? target.unsqueeze(0) : target;
  if (a.dim() != 4) throw ShapeError("perception loss expects 3 x H x W or B x 3 x H x W");
  const auto h = a.size(2);
  const auto w = a.size(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("perception loss needs even height and width");

  const auto fa = extractor.features(a);
  const auto fb = extractor.features(b);
  const auto ha = extractor.features(layers::resize_to(a, h / 2, w / 2));
  const auto hb = extractor.features(layers::resize_to(b, h / 2, w / 2));
  auto total = torch::zeros({}, a.options());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    total = total + (fa[i] - fb[i]).abs().mean() + (ha[i] - hb[i]).abs().mean();
  }
  return total / (2.0 * static_cast<double>(fa.size()));
}

DiscriminatorImpl::DiscriminatorImpl(int width)
    : conv1_(register_module("conv1", layers::conv2d(3, width, 3, 2))),
      conv2_(register_module("conv2", layers::conv2d(width, 2 * width, 3, 2))),
      conv3_(register_module("conv3", layers::conv2d(2 * width, 4 * width, 3, 2))),
      out_(register_module("out", layers::conv2d(4 * width, 1))) {}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  auto x = layers::lrelu(conv1_(images));
  x = layers::lrelu(conv2_(x));
  x = layers::lrelu(conv3_(x));
  return out_(x).mean({1, 2, 3});
}

torch::Tensor gan_d_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake) {
  const auto d_real = critic(real);
  const auto d_fake = critic(fake.detach());
  return 0.5 * (d_real - 1.0).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
}

torch::Tensor gan_g_loss(const Critic& critic, const torch::Tensor& fake) {
  return (critic(fake) - 1.0).pow(2).mean();
}

SyncScorerImpl::SyncScorerImpl(int window, int embed_dim, int mouth_height, int mouth_width, int width)
    : window_(window), embed_dim_(embed_dim), mouth_height_(mouth_height), mouth_width_(mouth_width) {
  if (mouth_height % 8 != 0 || mouth_width % 8 != 0) {
    throw InvalidParameter("sync scorer mouth crops must be divisible by 8");
  }
  a_conv1_ = register_module("a_conv1", layers::conv1d(29, width));
  a_conv2_ = register_module("a_conv2", layers::conv1d(width, width));
  a_proj_ = register_module("a_proj", torch::nn::Linear(width * window, embed_dim));
  v_conv1_ = register_module("v_conv1", layers::conv2d(3, width, 3, 2));
  v_conv2_ = register_module("v_conv2", layers::conv2d(width, width, 3, 2));
  v_conv3_ = register_module("v_conv3", layers::conv2d(width, width, 3, 2));
  v_proj_ = register_module("v_proj", torch::nn::Linear(width * (mouth_height / 8), embed_dim));
  // starts as a smooth map of cosine; training sharpens and shifts it
  log_scale_ = register_parameter("log_scale", torch::full({1}, std::log(2.0)));
  bias_ = register_parameter("bias", torch::zeros({1}));
}

torch::Tensor SyncScorerImpl::embed_audio(const torch::Tensor& audio) {
  if (audio.dim() != 3 || audio.size(1) != window_ || audio.size(2) != 29) {
    throw ShapeError("sync scorer audio must be B x " + std::to_string(window_) + " x 29");
  }
  auto x = audio.transpose(1, 2);
  x = layers::lrelu(a_conv1_(x));
  x = layers::lrelu(a_conv2_(x));
  return a_proj_(x.flatten(1));
}

torch::Tensor SyncScorerImpl::embed_visual(const torch::Tensor& crops) {
  if (crops.dim() != 4 || crops.size(1) != 3 || crops.size(2) != mouth_height_ || crops.size(3) != mouth_width_) {
    throw ShapeError("sync scorer crops must be B x 3 x " + std::to_string(mouth_height_) + " x " +
                     std::to_string(mouth_width_));
  }
  auto x = layers::lrelu(v_conv1_(crops - 0.5));
  x = layers::lrelu(v_conv2_(x));
  x = layers::lrelu(v_conv3_(x));
  // opening is a vertical extent; pooling across columns keeps rows only
  return v_proj_(x.mean(3).flatten(1));
}

torch::Tensor SyncScorerImpl::similarity(const torch::Tensor& audio, const torch::Tensor& crops) {
  return torch::cosine_similarity(embed_audio(audio), embed_visual(crops), 1, 1e-8);
}

torch::Tensor SyncScorerImpl::confidence(const torch::Tensor& audio, const torch::Tensor& crops) {
  return torch::sigmoid(log_scale_.exp() * similarity(audio, crops) + bias_);
}

void SyncScorerImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
  frozen_ = true;
}

torch::Tensor sync_penalty(const torch::Tensor& confidence) { return (confidence - 1.0).pow(2).mean(); }

torch::Tensor sync_loss(SyncScorer& scorer, const torch::Tensor& audio, const torch::Tensor& crops) {
  if (!scorer->frozen()) throw ContractError("sync loss needs a pretrained, frozen scorer");
  return sync_penalty(scorer->confidence(audio, crops));
}

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + name);
}

}  // namespace

torch::Tensor total_loss(const torch::Tensor& l_p, const torch::Tensor& l_sync, const torch::Tensor& l_g,
                         const LossWeights& weights) {
  require_finite(l_p.item<double>(), "perception loss");
  require_finite(l_sync.item<double>(), "sync loss");
  require_finite(l_g.item<double>(), "generator loss");
  return weights.perception * l_p + weights.sync * l_sync + l_g;
}

double total_loss(double l_p, double l_sync, double l_g, const LossWeights& weights) {
  require_finite(l_p, "perception loss");
  require_finite(l_sync, "sync loss");
  require_finite(l_g, "generator loss");
  return weights.perception * l_p + weights.sync * l_sync + l_g;
}

}  // namespace facedub
