#include "facedub/config.hpp"

#include <fstream>

#include "facedub/errors.hpp"

namespace facedub {
using json = nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

std::string AblationFlags::name() const {
  if (no_alignment) return "no_alignment";
  if (no_spade) return "no_spade";
  if (no_cm) return "no_cm";
  return "full";
}

void ModelConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0) {
    throw InvalidParameter("model resolution must be positive and divisible by 4");
  }
  if (n_refs < 1) throw InvalidParameter("n_refs must be >= 1");
  if (feature_channels % n_refs != 0) throw InvalidParameter("feature_channels must be divisible by n_refs");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
    throw InvalidParameter("embed_dim must be a positive multiple of heads");
  }
  if (audio_window < 1 || audio_window % 2 == 0) throw InvalidParameter("audio_window must be odd");
  if (avau_layers < 1) throw InvalidParameter("avau_layers must be >= 1");
  if (!(flow_clamp > 0.0)) throw InvalidParameter("flow_clamp must be positive");
  const int flags = int(ablation.no_alignment) + int(ablation.no_spade) + int(ablation.no_cm);
  if (flags > 1) throw InvalidParameter("at most one ablation flag may be set");
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  if (weights.perception < 0.0 || weights.sync < 0.0) throw InvalidParameter("loss weights must be >= 0");
  if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) throw InvalidParameter("learning rates must be > 0");
  if (steps < 0) throw InvalidParameter("steps must be >= 0");
  if (checkpoint_every < 0) throw InvalidParameter("checkpoint_every must be >= 0");
}

void to_json(json& j, const AblationFlags& f) {
  j = json{{"no_alignment", f.no_alignment}, {"no_spade", f.no_spade}, {"no_cm", f.no_cm}};
}

void from_json(const json& j, AblationFlags& f) {
  for (const auto& [key, _] : j.items()) {
    if (key != "no_alignment" && key != "no_spade" && key != "no_cm") {
      throw InvalidParameter("unknown ablation flag '" + key + "'");
    }
  }
  read_opt(j, "no_alignment", f.no_alignment);
  read_opt(j, "no_spade", f.no_spade);
  read_opt(j, "no_cm", f.no_cm);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"height", c.height},
           {"width", c.width},
           {"embed_dim", c.embed_dim},
           {"n_refs", c.n_refs},
           {"audio_window", c.audio_window},
           {"avau_layers", c.avau_layers},
           {"heads", c.heads},
           {"feature_channels", c.feature_channels},
           {"encoder_width", c.encoder_width},
           {"unet_width", c.unet_width},
           {"decoder_width", c.decoder_width},
           {"mouth_width", c.mouth_width},
           {"flow_clamp", c.flow_clamp},
           {"ablation", c.ablation}};
}

void from_json(const json& j, ModelConfig& c) {
  read_opt(j, "height", c.height);
  read_opt(j, "width", c.width);
  read_opt(j, "embed_dim", c.embed_dim);
  read_opt(j, "n_refs", c.n_refs);
  read_opt(j, "audio_window", c.audio_window);
  read_opt(j, "avau_layers", c.avau_layers);
  read_opt(j, "heads", c.heads);
  read_opt(j, "feature_channels", c.feature_channels);
  read_opt(j, "encoder_width", c.encoder_width);
  read_opt(j, "unet_width", c.unet_width);
  read_opt(j, "decoder_width", c.decoder_width);
  read_opt(j, "mouth_width", c.mouth_width);
  read_opt(j, "flow_clamp", c.flow_clamp);
  read_opt(j, "ablation", c.ablation);
}

void to_json(json& j, const LossWeights& w) { j = json{{"lambda_p", w.perception}, {"lambda_sync", w.sync}}; }

void from_json(const json& j, LossWeights& w) {
  read_opt(j, "lambda_p", w.perception);
  read_opt(j, "lambda_sync", w.sync);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"seed", c.seed},
           {"model", c.model},
           {"batch_size", c.batch_size},
           {"lr_generator", c.lr_generator},
           {"lr_discriminator", c.lr_discriminator},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"weights", c.weights},
           {"steps", c.steps},
           {"sync_warmup_steps", c.sync_warmup_steps},
           {"checkpoint_every", c.checkpoint_every},
           {"ref_gap", c.ref_gap},
           {"crop_margin", c.crop_margin},
           {"train_manifests", c.train_manifests},
           {"sync_scorer", c.sync_scorer},
           {"out_dir", c.out_dir},
           {"sync_steps", c.sync_steps},
           {"sync_batch", c.sync_batch},
           {"sync_lr", c.sync_lr},
           {"sync_embed_dim", c.sync_embed_dim},
           {"sync_min_shift", c.sync_min_shift}};
}

void from_json(const json& j, TrainConfig& c) {
  read_opt(j, "seed", c.seed);
  read_opt(j, "model", c.model);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "lr_generator", c.lr_generator);
  read_opt(j, "lr_discriminator", c.lr_discriminator);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "weights", c.weights);
  read_opt(j, "steps", c.steps);
  read_opt(j, "sync_warmup_steps", c.sync_warmup_steps);
  read_opt(j, "checkpoint_every", c.checkpoint_every);
  read_opt(j, "ref_gap", c.ref_gap);
  read_opt(j, "crop_margin", c.crop_margin);
  read_opt(j, "train_manifests", c.train_manifests);
  read_opt(j, "sync_scorer", c.sync_scorer);
  read_opt(j, "out_dir", c.out_dir);
  read_opt(j, "sync_steps", c.sync_steps);
  read_opt(j, "sync_batch", c.sync_batch);
  read_opt(j, "sync_lr", c.sync_lr);
  read_opt(j, "sync_embed_dim", c.sync_embed_dim);
  read_opt(j, "sync_min_shift", c.sync_min_shift);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config " + path);
  try {
    auto cfg = json::parse(in).get<TrainConfig>();
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidParameter("invalid config " + path + ": " + e.what());
  }
}

uint64_t config_hash(const json& j) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace facedub
