#pragma once

// Inference (dubbing a clip with new audio), evaluation tables and the
// ablation runner.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facedub/train.hpp"

namespace facedub {

struct InferOptions {
  bool allow_truncate = false;  // accept audio shorter than the video
  uint64_t seed = 0;            // reference selection
  bool write_images = true;
};

struct InferResult {
  int frames = 0;
  bool truncated = false;
  std::vector<double> mouth_opening;  // measured on the generated faces
  std::vector<double> psnr, ssim;     // generated face vs source crop
};

// For each frame: crop, mask, pick references, generate, paste back with the
// feathered lower-half mask. Writes into out_dir:
//   frames/  composited full frames      faces/     generated face crops
//   flow/    flow-magnitude heatmaps     features/  channel mean of F_w
//   metrics.json
// Output frame count is min(video, audio). Audio shorter than the video
// throws LengthMismatch unless allow_truncate is set.
InferResult infer(Generator& generator, const ClipManifest& source, const std::filesystem::path& audio_path,
                  const std::filesystem::path& out_dir, const TrainConfig& config, const InferOptions& opts = {});

struct EvalRow {
  std::string name;
  double ssim = 0, psnr = 0, lpips = 0;
  double lse_c = 0, lse_d = 0;  // NaN without a scorer
  int frames = 0;
};

struct EvalOptions {
  int max_frames_per_clip = 0;  // 0: all frames
  uint64_t seed = 0;
};

// Self-reconstruction metrics over consecutive frames of each clip.
EvalRow evaluate(Generator& generator, const std::vector<ClipData>& clips, const TrainConfig& config,
                 SyncScorer scorer, const EvalOptions& opts = {});

// Writes <prefix>.csv and an aligned <prefix>.txt with columns
// SSIM, PSNR, LPIPS-proxy, LSE-C-proxy, LSE-D-proxy.
void write_eval_table(const std::filesystem::path& prefix, const std::vector<EvalRow>& rows);
std::string format_eval_table(const std::vector<EvalRow>& rows);

// Config variants for the ablation study: full model first, then one flag each.
std::vector<TrainConfig> ablation_configs(const TrainConfig& base);

// Trains every variant on train_clips (shared seed), evaluates on eval_clips.
std::vector<EvalRow> run_ablation(const TrainConfig& base, const std::vector<ClipData>& train_clips,
                                  const std::vector<ClipData>& eval_clips, SyncScorer scorer,
                                  const EvalOptions& eval_opts = {});

}  // namespace facedub
