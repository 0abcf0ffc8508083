#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "facedub/config.hpp"
#include "facedub/dataio.hpp"
#include "facedub/synth.hpp"

namespace facedub::fdtest {

// Small model used by unit tests: 64 x 48, D = 32, C = 20.
inline ModelConfig tiny_model() {
  ModelConfig m;
  m.height = 64;
  m.width = 48;
  m.embed_dim = 32;
  m.n_refs = 5;
  m.audio_window = 9;
  m.avau_layers = 2;
  m.heads = 4;
  m.feature_channels = 20;
  m.encoder_width = 8;
  m.unet_width = 8;
  m.decoder_width = 8;
  m.mouth_width = 8;
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("facedub_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Two 40-frame synthetic clips at 64 x 48, generated once per process.
inline const std::vector<SynthClip>& tiny_dataset() {
  static const std::vector<SynthClip> clips = [] {
    SynthConfig sc;
    sc.seed = 7;
    sc.num_clips = 2;
    sc.frames_per_clip = 40;
    sc.height = 64;
    sc.width = 48;
    return synth_generate(sc, scratch_dir("tiny_dataset"));
  }();
  return clips;
}

inline std::vector<std::string> tiny_manifests() {
  std::vector<std::string> out;
  for (const auto& c : tiny_dataset()) out.push_back(c.manifest_path.string());
  return out;
}

inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.seed = 3;
  c.model = tiny_model();
  c.batch_size = 2;
  c.lr_generator = 1e-3;
  c.lr_discriminator = 1e-3;
  c.steps = 4;
  c.ref_gap = 5;
  c.train_manifests = tiny_manifests();
  return c;
}

// Central finite difference of a scalar function of one tensor entry.
template <typename Fn>
double finite_difference(torch::Tensor x, int64_t flat_index, double eps, Fn&& f) {
  torch::NoGradGuard guard;
  auto flat = x.view({-1});
  const double orig = flat[flat_index].item<double>();
  flat[flat_index] = orig + eps;
  const double up = f();
  flat[flat_index] = orig - eps;
  const double down = f();
  flat[flat_index] = orig;
  return (up - down) / (2.0 * eps);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace facedub::fdtest
