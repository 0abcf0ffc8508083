#pragma once

// Image and lip-sync evaluation metrics. All computations run in float64.

#include <vector>

#include <torch/torch.h>

#include "facedub/losses.hpp"

namespace facedub {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kPsnrCap = 99.0;

// 0.299 R + 0.587 G + 0.114 B of a 3 x H x W image; H x W and 1 x H x W pass through.
torch::Tensor to_grayscale(const torch::Tensor& image);

// Normalised 1-D Gaussian of the SSIM window, float64.
torch::Tensor ssim_kernel_1d();

// Mean SSIM over all valid 11 x 11 windows of the grayscale images.
// Throws ShapeError on mismatched sizes or images smaller than the window.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

// 10 log10(1 / MSE), capped at 99 dB when MSE < 1e-10.
double psnr(const torch::Tensor& a, const torch::Tensor& b);
double psnr_from_mse(double mse);

// LPIPS-style distance on the perceptual pyramid: channel vectors are unit
// normalised, compared by L2 per site, averaged over sites then layers.
double perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& extractor);

inline constexpr int kSyncMaxOffset = 15;

struct SyncScores {
  double confidence = 0.0;     // S(0) - max_{d != 0} S(d)
  double distance = 0.0;       // mean L2 between unit embeddings at offset 0
  std::vector<double> curve;   // S(d) for d = -15 .. 15
};

// `crops`: F x 3 x h x w mouth crops of consecutive frames; `audio`: the
// clip's feature matrix (>= F rows). S(d) is the mean cosine similarity
// between frame t and the audio window centred on t + d (edge replicated).
SyncScores sync_scores(const torch::Tensor& crops, const torch::Tensor& audio, SyncScorer& scorer);

}  // namespace facedub
