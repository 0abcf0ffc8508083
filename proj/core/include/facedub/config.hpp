#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace facedub {

// Switches for the three ablation conditions. Each one swaps exactly one
// subgraph of the generator.
struct AblationFlags {
  bool no_alignment = false;  // audio-only conv encoder instead of the alignment module
  bool no_spade = false;      // plain conv decoder instead of the SPADE decoder
  bool no_cm = false;         // linear projection of the AVAU tokens instead of E_cm + audio skip

  std::string name() const;
};

struct ModelConfig {
  int height = 128;
  int width = 96;
  int embed_dim = 256;        // D
  int n_refs = 5;             // N
  int audio_window = 9;       // T
  int avau_layers = 4;        // k
  int heads = 4;
  int feature_channels = 80;  // C, split C/N per reference
  int encoder_width = 32;
  int unet_width = 64;
  int decoder_width = 64;
  int mouth_width = 32;
  double flow_clamp = 2.0;
  AblationFlags ablation;

  int mouth_height() const { return height / 2; }
  int mouth_width_px() const { return width / 2; }
  int reference_channels() const { return feature_channels / n_refs; }

  // Throws InvalidParameter on inconsistent sizes.
  void validate() const;
};

struct LossWeights {
  double perception = 10.0;
  double sync = 0.1;
};

struct TrainConfig {
  uint64_t seed = 0;
  ModelConfig model;
  int batch_size = 4;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  int steps = 1000;
  int sync_warmup_steps = 500;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  int ref_gap = 10;
  double crop_margin = 0.10;
  std::vector<std::string> train_manifests;
  std::string sync_scorer;   // checkpoint of a pretrained, frozen scorer; empty = no lip-sync term
  std::string out_dir = "run";

  // Sync-scorer pretraining.
  int sync_steps = 2000;
  int sync_batch = 64;
  double sync_lr = 1e-3;
  int sync_embed_dim = 64;
  int sync_min_shift = 5;

  void validate() const;
};

void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

TrainConfig load_train_config(const std::string& path);

// FNV-1a over the canonical JSON dump.
uint64_t config_hash(const nlohmann::json& j);

}  // namespace facedub
