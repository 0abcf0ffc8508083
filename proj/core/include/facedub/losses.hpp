#pragma once

// Training objectives: two-scale perceptual loss on a fixed random conv
// pyramid, least-squares GAN losses, the lip-sync penalty and their weighted sum.

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "facedub/config.hpp"

namespace facedub {

inline constexpr uint64_t kPerceptualSeed = 0x5eedf00dULL;

// Frozen feature pyramid. Weights are drawn once from `seed` (He-scaled
// normal, zero bias) and never receive gradients.
class PerceptualExtractor {
 public:
  struct Layer {
    torch::Tensor weight;  // out x in x k x k
    torch::Tensor bias;    // out
    int stride = 1;
    bool activation = true;  // leaky ReLU after the conv
  };

  // Five layers: 3->16 (stride 1), 16->32, 32->64, 64->64, 64->64 (stride 2).
  explicit PerceptualExtractor(uint64_t seed = kPerceptualSeed);
  // Custom pyramid; the input is shifted by -input_offset before layer 1.
  PerceptualExtractor(std::vector<Layer> layers, double input_offset);

  // Activations V_1..V_n of a B x 3 x H x W batch, in the batch's dtype.
  std::vector<torch::Tensor> features(const torch::Tensor& images) const;

  int num_layers() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<Layer> layers_;
  double input_offset_ = 0.5;
};

// L_p = sum_i [ mean|V_i(a) - V_i(b)| + mean|V_i(a/2) - V_i(b/2)| ] / (2 n),
// where x/2 is the bilinear half-resolution image. Accepts 3 x H x W or
// B x 3 x H x W. Throws ShapeError on mismatched or odd sizes.
torch::Tensor perception_loss(const torch::Tensor& output, const torch::Tensor& target,
                              const PerceptualExtractor& extractor);

// Strided conv patch critic; D(I) is the mean of its output map, one value per image.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(int width = 32);

  torch::Tensor forward(const torch::Tensor& images);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Discriminator);

// Anything mapping B x 3 x H x W images to B scores.
using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

// L_D = 1/2 E[(D(real) - 1)^2] + 1/2 E[D(fake)^2]; `fake` is detached here.
torch::Tensor gan_d_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake);
// L_G = E[(D(fake) - 1)^2]
torch::Tensor gan_g_loss(const Critic& critic, const torch::Tensor& fake);

// Two-tower audio/visual scorer. The visual tower sees the lower-half mouth
// crop of a frame; the score is the cosine of the two embeddings, mapped to a
// confidence (cos + 1) / 2.
class SyncScorerImpl : public torch::nn::Module {
 public:
  SyncScorerImpl(int window, int embed_dim, int mouth_height, int mouth_width, int width = 32);

  torch::Tensor embed_audio(const torch::Tensor& audio);   // B x T x 29 -> B x E
  torch::Tensor embed_visual(const torch::Tensor& crops);  // B x 3 x h x w -> B x E
  torch::Tensor similarity(const torch::Tensor& audio, const torch::Tensor& crops);  // B, in [-1, 1]
  // sigmoid(s * cos + b) with learned s > 0 and b, monotone in the similarity.
  torch::Tensor confidence(const torch::Tensor& audio, const torch::Tensor& crops);  // B, in [0, 1]

  // Stops gradient tracking for every parameter and marks the scorer usable
  // by sync_loss.
  void freeze();
  bool frozen() const { return frozen_; }

  int window() const { return window_; }
  int mouth_height() const { return mouth_height_; }
  int mouth_width() const { return mouth_width_; }
  int embed_dim() const { return embed_dim_; }

 private:
  int window_, embed_dim_, mouth_height_, mouth_width_;
  bool frozen_ = false;
  torch::nn::Conv1d a_conv1_{nullptr}, a_conv2_{nullptr};
  torch::nn::Linear a_proj_{nullptr};
  torch::nn::Conv2d v_conv1_{nullptr}, v_conv2_{nullptr}, v_conv3_{nullptr};
  torch::nn::Linear v_proj_{nullptr};
  torch::Tensor log_scale_, bias_;
};
TORCH_MODULE(SyncScorer);

// E[(c - 1)^2] over a batch of confidences.
torch::Tensor sync_penalty(const torch::Tensor& confidence);

// L_sync for generated mouth crops. Throws ContractError if the scorer is not frozen.
torch::Tensor sync_loss(SyncScorer& scorer, const torch::Tensor& audio, const torch::Tensor& crops);

// L = lambda_p L_p + lambda_sync L_sync + L_G. Throws NumericalError on non-finite input.
torch::Tensor total_loss(const torch::Tensor& l_p, const torch::Tensor& l_sync, const torch::Tensor& l_g,
                         const LossWeights& weights = {});
double total_loss(double l_p, double l_sync, double l_g, const LossWeights& weights = {});

}  // namespace facedub
