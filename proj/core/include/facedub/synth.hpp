#pragma once

// Procedural talking-face clips used in place of real footage: a cartoon
// head whose mouth opening follows a smooth random signal, eyes that blink
// independently, and 29-dim "audio" features that linearly encode the
// opening and its temporal derivative.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "facedub/dataio.hpp"
#include "facedub/face_layout.hpp"

namespace facedub {

struct SynthConfig {
  uint64_t seed = 0;
  int num_clips = 4;
  int frames_per_clip = 100;
  int height = 128;
  int width = 96;
  int audio_window = 9;  // only used for the length precondition
  double audio_noise = 0.05;
};

struct FaceIdentity {
  face::FaceShape shape;
  std::array<float, 3> skin{};
  std::array<float, 3> background{};
  std::array<float, 3> hair{};
  std::array<float, 3> lips{};
  std::array<float, 3> iris{};
  std::array<float, 3> blush{};
  double blush_strength = 0.0;
  double tooth_frequency = 6.0;
  double tooth_phase = 0.0;
  double head_scale = 0.8;  // head half width as a fraction of the frame half width
};

struct FaceState {
  double opening = 0.0;  // [0, 1]
  double blink = 0.0;    // [0, 1], 1 = closed
  Point2 center;         // head centre in pixels
};

FaceIdentity sample_identity(uint64_t seed);

// Smooth opening signal in [0, 1]: random keyframes every 3-5 frames joined
// by cosine interpolation, with roughly one in four keyframes closed.
std::vector<double> opening_signal(int frames, uint64_t seed);
std::vector<double> blink_signal(int frames, uint64_t seed);

// Renders one frame (3 x H x W in [0, 1]) and returns its landmarks.
std::pair<torch::Tensor, LandmarkSet> render_face(const FaceIdentity& id, const FaceState& state, int height,
                                                  int width);

// Fixed 29 x 2 embedding shared by every clip of a dataset.
torch::Tensor audio_embedding(uint64_t seed);

// features = [o, 5 o'] W^T + N(0, noise^2), o' by central differences.
torch::Tensor synth_audio_features(const std::vector<double>& opening, const torch::Tensor& embedding,
                                   double noise, uint64_t seed);

struct SynthClip {
  ClipManifest manifest;
  std::filesystem::path manifest_path;
  std::vector<double> opening;
  std::vector<double> blink;
};

// Writes clip_000/, clip_001/, ... under `out_dir`, each with frames/,
// landmarks/, audio.audf, signals.json and manifest.json.
// Throws InvalidParameter on sizes not divisible by 4 or clips shorter than
// twice the audio window.
std::vector<SynthClip> synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir);

// Reads the ground-truth signals.json written next to a synthetic manifest.
std::vector<double> read_opening_signal(const std::filesystem::path& clip_dir);

}  // namespace facedub
