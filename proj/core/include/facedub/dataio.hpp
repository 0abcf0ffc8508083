#pragma once

// File formats, per-clip preprocessing and training-sample assembly.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "facedub/geometry.hpp"

namespace facedub {

inline constexpr int kAudioFeatureDim = 29;
inline constexpr double kFrameRate = 25.0;

// T x 29 acoustic features centred on one video frame.
struct AudioWindow {
  torch::Tensor features;  // T x 29 float32

  int length() const { return static_cast<int>(features.size(0)); }

  // Rows center - T/2 .. center + T/2 of a full-clip matrix; rows outside the
  // clip repeat the nearest edge row.
  static AudioWindow centered(const torch::Tensor& clip_features, int center, int window);

  // Throws InvalidParameter (shape) or NumericalError (non-finite values).
  void validate() const;
};

// Little-endian "AUDF" container: magic, u32 rows, u32 cols, u32 reserved,
// then rows x cols float32 row-major.
torch::Tensor read_audio_features(const std::filesystem::path& path);
void write_audio_features(const std::filesystem::path& path, const torch::Tensor& features);

// JSON array of [x, y] pairs.
LandmarkSet read_landmarks(const std::filesystem::path& path, int frame_width, int frame_height);
void write_landmarks(const std::filesystem::path& path, const LandmarkSet& landmarks);

struct ClipManifest {
  std::string clip_id;
  std::filesystem::path frame_dir;
  std::filesystem::path landmark_dir;
  std::filesystem::path audio_path;
  int frame_count = 0;
  double fps = kFrameRate;

  // Relative paths in the file are resolved against the manifest's directory.
  static ClipManifest load(const std::filesystem::path& path);
  // Stores paths relative to the manifest's directory when possible.
  void save(const std::filesystem::path& path) const;

  std::filesystem::path frame_path(int index) const;
  std::filesystem::path landmark_path(int index) const;

  // frame count == landmark file count == audio row count.
  void validate() const;
};

// Face crop of one frame with everything derived from its landmarks.
struct PreparedFrame {
  torch::Tensor face;        // 3 x H x W
  torch::Tensor mouth;       // 3 x H/2 x W/2, lower-half region only
  LandmarkSet landmarks;     // crop coordinates
  RegionMask lower_mask;     // binary, H x W
  CropBox mouth_box;         // bounds of lower_mask
  CropTransform transform;   // frame <-> crop
};

struct PrepareOptions {
  int height = 128;
  int width = 96;
  double crop_margin = kDefaultCropMargin;
};

// Bounding box of the non-zero pixels of a mask. Throws ShapeError when empty.
CropBox mask_bounds(const RegionMask& mask);

// Lower-half crop fed to the mouth encoder and the sync scorer:
// (image * mask) cut to `box` and resized to out_h x out_w. Differentiable in
// `image`; accepts 3 x H x W or B x 3 x H x W with a shared mask.
torch::Tensor mouth_crop(const torch::Tensor& image, const torch::Tensor& mask, const CropBox& box, int out_h,
                         int out_w);

PreparedFrame prepare_frame(const torch::Tensor& frame, const LandmarkSet& landmarks, const PrepareOptions& opts);

struct ClipData {
  ClipManifest manifest;
  std::vector<PreparedFrame> frames;
  std::vector<torch::Tensor> raw_frames;  // full frames, kept only when requested
  torch::Tensor audio;                    // frame_count x 29
};

ClipData load_clip(const ClipManifest& manifest, const PrepareOptions& opts, bool keep_raw_frames = false);

struct SampleOptions {
  int n_refs = 5;
  int audio_window = 9;
  int ref_gap = 10;
};

struct Sample {
  torch::Tensor source_frame;               // 3 x H x W
  torch::Tensor masked_source;              // source with lower-half zeroed
  std::vector<torch::Tensor> references;    // N x (3 x H x W)
  std::vector<torch::Tensor> mouths;        // N x (3 x H/2 x W/2)
  AudioWindow audio;
  torch::Tensor target;                     // 3 x H x W
  RegionMask lower_mask;
  CropBox mouth_box;
  int target_index = 0;
  std::vector<int> reference_indices;
};

// Uniform sampling without replacement from indices with |i - target| >= gap.
// Sorted ascending. Throws InsufficientFrames if too few candidates exist.
std::vector<int> select_references(int frame_count, int target_index, int n_refs, int gap, uint64_t seed);

// Sample for self-reconstruction: source and target are the same frame.
Sample make_sample(const ClipData& clip, int target_index, const SampleOptions& opts, uint64_t seed);

// Same as make_sample with the driving audio taken from `audio` instead of the
// clip's own track.
Sample make_sample(const ClipData& clip, int target_index, const SampleOptions& opts, uint64_t seed,
                   const torch::Tensor& audio);

Sample load_sample(const ClipManifest& manifest, int target_index, const SampleOptions& sample_opts,
                   const PrepareOptions& prepare_opts, uint64_t seed);

struct Batch {
  torch::Tensor masked_source;  // B x 3 x H x W
  torch::Tensor references;     // B x N x 3 x H x W
  torch::Tensor mouths;         // B x N x 3 x H/2 x W/2
  torch::Tensor audio;          // B x T x 29
  torch::Tensor target;         // B x 3 x H x W
  torch::Tensor lower_masks;    // B x H x W
  std::vector<CropBox> mouth_boxes;

  int64_t size() const { return target.size(0); }
  Batch to(torch::Dtype dtype) const;
};

Batch collate(std::span<const Sample> samples);

// Mouth-opening proxy measured on a face image: mean darkness relative to
// the median luminance inside a box anchored on the two mouth corners.
double mouth_opening_signal(const torch::Tensor& face, const LandmarkSet& landmarks);

// Pearson correlation of two equally sized series.
double pearson(std::span<const double> a, std::span<const double> b);

// SplitMix64 mixing of a seed with extra words; used for stream-free per-step RNG.
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

}  // namespace facedub
