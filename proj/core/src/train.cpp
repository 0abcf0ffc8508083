#include "facedub/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "facedub/errors.hpp"

namespace facedub {
namespace fs = std::filesystem;

namespace {

std::vector<std::pair<std::string, torch::Tensor>> trainable(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
  return out;
}

void set_trainable(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

bool finite(double v) { return std::isfinite(v); }

torch::Tensor output_mouth_crops(const torch::Tensor& images, const Batch& batch) {
  std::vector<torch::Tensor> crops;
  const int h = static_cast<int>(images.size(2)) / 2;
  const int w = static_cast<int>(images.size(3)) / 2;
  for (int64_t b = 0; b < images.size(0); ++b) {
    crops.push_back(mouth_crop(images[b], batch.lower_masks[b], batch.mouth_boxes[static_cast<std::size_t>(b)], h, w));
  }
  return torch::stack(crops);
}

}  // namespace

// ---- state -------------------------------------------------------------------

ModelState ModelState::create(const TrainConfig& config) {
  config.validate();
  ModelState s;
  s.config = config;
  torch::manual_seed(config.seed);
  s.generator = Generator(config.model);
  s.discriminator = Discriminator();
  s.g_opt = std::make_shared<Adam>(trainable(*s.generator), config.lr_generator, config.beta1, config.beta2);
  s.d_opt = std::make_shared<Adam>(trainable(*s.discriminator), config.lr_discriminator, config.beta1, config.beta2);
  return s;
}

CheckpointData ModelState::to_checkpoint() const {
  CheckpointData d;
  d.config = config;
  d.step = step;
  auto append = [&](std::vector<NamedTensor> v) {
    for (auto& t : v) d.tensors.push_back(std::move(t));
  };
  append(module_tensors(*generator, "generator/"));
  append(module_tensors(*discriminator, "discriminator/"));
  append(g_opt->state("opt_g/"));
  append(d_opt->state("opt_d/"));
  return d;
}

ModelState ModelState::from_checkpoint(const CheckpointData& data) {
  TrainConfig cfg;
  try {
    cfg = data.config.get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint does not hold a training config: ") + e.what());
  }
  auto s = create(cfg);
  load_module_tensors(*s.generator, data, "generator/");
  load_module_tensors(*s.discriminator, data, "discriminator/");
  s.g_opt->load_state(data, "opt_g/");
  s.d_opt->load_state(data, "opt_d/");
  s.step = data.step;
  return s;
}

ModelState ModelState::load(const fs::path& path) { return from_checkpoint(load_checkpoint(path)); }

void ModelState::save(const fs::path& path) const { save_checkpoint(path, to_checkpoint()); }

ModelState ModelState::clone() const {
  std::stringstream buf;
  write_checkpoint(buf, to_checkpoint());
  return from_checkpoint(read_checkpoint(buf));
}

// ---- data --------------------------------------------------------------------

PrepareOptions prepare_options(const TrainConfig& config) {
  return {config.model.height, config.model.width, config.crop_margin};
}

SampleOptions sample_options(const TrainConfig& config) {
  return {config.model.n_refs, config.model.audio_window, config.ref_gap};
}

std::vector<ClipData> load_clips(const std::vector<std::string>& manifests, const PrepareOptions& opts,
                                 bool keep_raw_frames) {
  if (manifests.empty()) throw InvalidParameter("no clip manifests given");
  std::vector<ClipData> clips;
  for (const auto& m : manifests) {
    auto manifest = ClipManifest::load(m);
    manifest.validate();
    clips.push_back(load_clip(manifest, opts, keep_raw_frames));
  }
  return clips;
}

ClipData slice_clip(const ClipData& clip, int begin, int end) {
  const int n = static_cast<int>(clip.frames.size());
  if (begin < 0 || end > n || begin >= end) throw InvalidParameter("invalid clip slice");
  if (clip.audio.size(0) < end) throw LengthMismatch("audio shorter than the requested slice");
  ClipData out;
  out.manifest = clip.manifest;
  out.manifest.frame_count = end - begin;
  out.frames.assign(clip.frames.begin() + begin, clip.frames.begin() + end);
  if (!clip.raw_frames.empty()) out.raw_frames.assign(clip.raw_frames.begin() + begin, clip.raw_frames.begin() + end);
  out.audio = clip.audio.narrow(0, begin, end - begin).clone();
  return out;
}

Batch draw_batch(const std::vector<ClipData>& clips, const TrainConfig& config, int64_t step) {
  if (clips.empty()) throw InvalidParameter("no training clips");
  std::mt19937_64 rng(mix_seed(config.seed, static_cast<uint64_t>(step), 0xba7c));
  const auto opts = sample_options(config);
  std::vector<Sample> samples;
  for (int b = 0; b < config.batch_size; ++b) {
    const auto& clip = clips[rng() % clips.size()];
    const int t = static_cast<int>(rng() % clip.frames.size());
    samples.push_back(make_sample(clip, t, opts, rng()));
  }
  return collate(samples);
}

// ---- sync scorer ---------------------------------------------------------------

namespace {

struct PairSet {
  torch::Tensor audio, crops, labels;
};

int holdout_start(const ClipData& clip, double fraction) {
  const int n = static_cast<int>(clip.frames.size());
  return n - std::max(1, static_cast<int>(std::lround(fraction * n)));
}

// One positive and one negative pair per held-out frame; the negative uses the
// frame half a hold-out span away.
PairSet holdout_pairs(const std::vector<ClipData>& clips, const TrainConfig& config, double fraction) {
  std::vector<torch::Tensor> audio, crops;
  std::vector<float> labels;
  for (const auto& clip : clips) {
    const int begin = holdout_start(clip, fraction);
    const int span = static_cast<int>(clip.frames.size()) - begin;
    if (span / 2 < config.sync_min_shift) {
      throw InvalidParameter("hold-out segment too short for the minimum sync shift");
    }
    for (int t = begin; t < begin + span; ++t) {
      const int u = begin + (t - begin + span / 2) % span;
      for (int pos = 1; pos >= 0; --pos) {
        audio.push_back(AudioWindow::centered(clip.audio, pos ? t : u, config.model.audio_window).features);
        crops.push_back(clip.frames[static_cast<std::size_t>(t)].mouth);
        labels.push_back(static_cast<float>(pos));
      }
    }
  }
  return {torch::stack(audio), torch::stack(crops), torch::tensor(labels)};
}

PairSet training_pairs(const std::vector<ClipData>& clips, const TrainConfig& config, double fraction, int64_t step,
                       bool shuffle_labels) {
  std::mt19937_64 rng(mix_seed(config.seed, static_cast<uint64_t>(step), 0x5c0e));
  std::vector<torch::Tensor> audio, crops;
  std::vector<float> labels;
  for (int b = 0; b < config.sync_batch; ++b) {
    const auto& clip = clips[rng() % clips.size()];
    const int limit = holdout_start(clip, fraction);
    const int t = static_cast<int>(rng() % static_cast<uint64_t>(limit));
    const bool positive = (b % 2) == 0;
    int u = t;
    if (!positive) {
      std::vector<int> far;
      for (int i = 0; i < limit; ++i) {
        if (std::abs(i - t) >= config.sync_min_shift) far.push_back(i);
      }
      if (far.empty()) throw InsufficientFrames("no negative candidates for sync pretraining");
      u = far[rng() % far.size()];
    }
    audio.push_back(AudioWindow::centered(clip.audio, u, config.model.audio_window).features);
    crops.push_back(clip.frames[static_cast<std::size_t>(t)].mouth);
    const bool label = shuffle_labels ? (rng() & 1U) != 0 : positive;
    labels.push_back(label ? 1.0F : 0.0F);
  }
  return {torch::stack(audio), torch::stack(crops), torch::tensor(labels)};
}

}  // namespace

double sync_pair_accuracy(SyncScorer& scorer, const std::vector<ClipData>& clips, const TrainConfig& config,
                          double holdout_fraction) {
  torch::NoGradGuard guard;
  const auto pairs = holdout_pairs(clips, config, holdout_fraction);
  const auto conf = scorer->confidence(pairs.audio, pairs.crops);
  const auto predicted = (conf > 0.5).to(torch::kFloat32);
  return (predicted == pairs.labels).to(torch::kFloat64).mean().item<double>();
}

SyncPretrainResult pretrain_sync(const std::vector<ClipData>& clips, const TrainConfig& config,
                                 const SyncPretrainOptions& opts) {
  config.validate();
  if (clips.empty()) throw InvalidParameter("no clips for sync pretraining");
  torch::manual_seed(mix_seed(config.seed, 0x5c0e));
  SyncPretrainResult r;
  r.scorer = SyncScorer(config.model.audio_window, config.sync_embed_dim, config.model.mouth_height(),
                        config.model.mouth_width_px());
  Adam opt(trainable(*r.scorer), config.sync_lr, 0.9, 0.999);

  for (int step = 1; step <= config.sync_steps; ++step) {
    const auto pairs = training_pairs(clips, config, opts.holdout_fraction, step, opts.shuffle_labels);
    // cosine decay; at a constant rate the decision threshold keeps wandering
    opt.set_lr(0.5 * config.sync_lr * (1.0 + std::cos(M_PI * (step - 1) / config.sync_steps)));
    opt.zero_grad();
    const auto conf = r.scorer->confidence(pairs.audio, pairs.crops).clamp(1e-6, 1.0 - 1e-6);
    const auto loss = torch::binary_cross_entropy(conf, pairs.labels);
    if (!finite(loss.item<double>())) throw TrainingDivergence("sync scorer loss became non-finite");
    loss.backward();
    opt.step();
    r.steps = step;
    if (step % opts.eval_every == 0 || step == config.sync_steps) {
      r.accuracy = sync_pair_accuracy(r.scorer, clips, config, opts.holdout_fraction);
      if (!opts.shuffle_labels && r.accuracy >= opts.target_accuracy) break;
    }
  }
  if (!opts.shuffle_labels && r.accuracy < opts.min_accuracy) {
    throw TrainingDivergence("sync scorer reached only " + std::to_string(r.accuracy) + " held-out accuracy");
  }
  r.scorer->freeze();
  return r;
}

void save_sync_scorer(const fs::path& path, SyncScorer& scorer) {
  CheckpointData d;
  d.config = {{"kind", "sync_scorer"},
              {"window", scorer->window()},
              {"embed_dim", scorer->embed_dim()},
              {"mouth_height", scorer->mouth_height()},
              {"mouth_width", scorer->mouth_width()}};
  d.tensors = module_tensors(*scorer, "");
  save_checkpoint(path, d);
}

SyncScorer load_sync_scorer(const fs::path& path) {
  const auto d = load_checkpoint(path);
  if (d.config.value("kind", "") != "sync_scorer") throw FormatError(path.string() + " is not a sync scorer");
  SyncScorer s(d.config.at("window").get<int>(), d.config.at("embed_dim").get<int>(),
               d.config.at("mouth_height").get<int>(), d.config.at("mouth_width").get<int>());
  load_module_tensors(*s, d, "");
  s->freeze();
  return s;
}

// ---- loss log --------------------------------------------------------------------

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "step,L_p,L_G,L_D,L_sync,L\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.l_p, r.l_g,
                  r.l_d, r.l_sync, r.total);
    out << line;
  }
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,L_p,L_G,L_D,L_sync,L") throw FormatError("unexpected loss CSV header in " + path.string());
  std::vector<LossRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.l_p, &r.l_g, &r.l_d, &r.l_sync, &r.total) !=
        6) {
      throw FormatError("malformed loss CSV row: " + line);
    }
    r.step = step;
    out.push_back(r);
  }
  return out;
}

// ---- GAN loop --------------------------------------------------------------------

std::vector<LossRecord> run_training(ModelState& state, const std::vector<ClipData>& clips, int steps,
                                     const RunOptions& opts) {
  if (steps < 0) throw InvalidParameter("negative step count");
  if (!opts.scorer.is_empty() && !opts.scorer->frozen()) throw ContractError("sync scorer must be frozen");
  static const PerceptualExtractor extractor;
  const auto& cfg = state.config;
  auto& G = state.generator;
  auto& D = state.discriminator;
  const Critic critic = [&](const torch::Tensor& x) { return D->forward(x); };
  auto scorer = opts.scorer;
  const auto checkpoint_path = [&](int64_t step) {
    char name[64];
    std::snprintf(name, sizeof name, "step_%06lld.ckpt", static_cast<long long>(step));
    return opts.checkpoint_dir / name;
  };
  // a resumed run still knows where the state it started from was saved
  std::string last_checkpoint;
  if (!opts.checkpoint_dir.empty() && fs::exists(checkpoint_path(state.step))) {
    last_checkpoint = checkpoint_path(state.step).string();
  }
  std::vector<LossRecord> records;

  for (int i = 0; i < steps; ++i) {
    const int64_t step = state.step + 1;
    const auto batch = draw_batch(clips, cfg, step);
    const auto out = G->forward(batch);

    set_trainable(*D, true);
    state.d_opt->zero_grad();
    const auto l_d = gan_d_loss(critic, batch.target, out.image);
    LossRecord rec;
    rec.step = step;
    rec.l_d = l_d.item<double>();
    if (!finite(rec.l_d)) throw NonFiniteLoss("discriminator loss is non-finite at step " + std::to_string(step), last_checkpoint);
    l_d.backward();
    state.d_opt->step();

    set_trainable(*D, false);
    state.g_opt->zero_grad();
    const auto l_g = gan_g_loss(critic, out.image);
    const auto l_p = perception_loss(out.image, batch.target, extractor);
    auto l_sync = torch::zeros({}, l_p.options());
    if (!scorer.is_empty()) l_sync = sync_loss(scorer, batch.audio, output_mouth_crops(out.image, batch));
    auto weights = cfg.weights;
    if (step <= cfg.sync_warmup_steps || opts.scorer.is_empty()) weights.sync = 0.0;
    rec.l_p = l_p.item<double>();
    rec.l_g = l_g.item<double>();
    rec.l_sync = l_sync.item<double>();
    if (!finite(rec.l_p) || !finite(rec.l_g) || !finite(rec.l_sync)) {
      throw NonFiniteLoss("generator loss is non-finite at step " + std::to_string(step), last_checkpoint);
    }
    const auto total = total_loss(l_p, l_sync, l_g, weights);
    rec.total = total.item<double>();
    total.backward();
    state.g_opt->step();
    set_trainable(*D, true);

    state.step = step;
    records.push_back(rec);
    if (opts.on_step) opts.on_step(rec);
    if (!opts.checkpoint_dir.empty() && opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0) {
      const auto path = checkpoint_path(step);
      state.save(path);
      last_checkpoint = path.string();
    }
  }
  return records;
}

TrainResult train_loop(const TrainConfig& config) {
  config.validate();
  const auto clips = load_clips(config.train_manifests, prepare_options(config));
  const fs::path out_dir = config.out_dir;
  fs::create_directories(out_dir);
  TrainResult r{ModelState::create(config), {}, {}};
  RunOptions opts;
  opts.checkpoint_dir = out_dir / "checkpoints";
  opts.checkpoint_every = config.checkpoint_every;
  if (!config.sync_scorer.empty()) opts.scorer = load_sync_scorer(config.sync_scorer);
  opts.on_step = [&](const LossRecord& rec) { r.losses.push_back(rec); };
  try {
    run_training(r.state, clips, config.steps, opts);
  } catch (const NonFiniteLoss&) {
    write_loss_csv(out_dir / "losses.csv", r.losses);
    throw;
  }
  write_loss_csv(out_dir / "losses.csv", r.losses);
  r.final_checkpoint = out_dir / "final.ckpt";
  r.state.save(r.final_checkpoint);
  return r;
}

ModelState finetune(const ModelState& base, const ClipData& identity_segment, int steps, const RunOptions& opts) {
  if (steps < 0) throw InvalidParameter("negative fine-tuning step count");
  auto state = base.clone();
  if (steps > 0) run_training(state, {identity_segment}, steps, opts);
  return state;
}

}  // namespace facedub
