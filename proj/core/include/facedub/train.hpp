#pragma once

// Training harness: model state, sync-scorer pretraining, the alternating GAN
// loop, identity fine-tuning and loss logging.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "facedub/checkpoint.hpp"
#include "facedub/config.hpp"
#include "facedub/dataio.hpp"
#include "facedub/inpainting.hpp"
#include "facedub/losses.hpp"

namespace facedub {

// Generator, discriminator, both optimizers and the step counter.
struct ModelState {
  TrainConfig config;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::shared_ptr<Adam> g_opt, d_opt;
  int64_t step = 0;

  // Fresh parameters drawn from config.seed.
  static ModelState create(const TrainConfig& config);
  static ModelState from_checkpoint(const CheckpointData& data);
  static ModelState load(const std::filesystem::path& path);

  CheckpointData to_checkpoint() const;
  void save(const std::filesystem::path& path) const;
  // Deep copy through the checkpoint representation.
  ModelState clone() const;
};

// Options every loader shares, derived from the config.
PrepareOptions prepare_options(const TrainConfig& config);
SampleOptions sample_options(const TrainConfig& config);

std::vector<ClipData> load_clips(const std::vector<std::string>& manifests, const PrepareOptions& opts,
                                 bool keep_raw_frames = false);

// Frames [begin, end) of a clip, with the matching audio rows.
ClipData slice_clip(const ClipData& clip, int begin, int end);

// ---- sync scorer -----------------------------------------------------------

struct SyncPretrainOptions {
  bool shuffle_labels = false;  // control run: labels drawn at random
  double target_accuracy = 0.9;
  double min_accuracy = 0.75;   // below this after all steps -> TrainingDivergence
  double holdout_fraction = 0.2;
  int eval_every = 50;
};

struct SyncPretrainResult {
  SyncScorer scorer{nullptr};
  double accuracy = 0.0;  // held-out pair accuracy of the returned weights
  int steps = 0;
};

// Contrastive pretraining on matched (label 1) vs shifted (|shift| >= sync_min_shift,
// label 0) audio/mouth pairs; the last `holdout_fraction` of every clip is held
// out for accuracy. Stops at target_accuracy, then freezes the scorer.
SyncPretrainResult pretrain_sync(const std::vector<ClipData>& clips, const TrainConfig& config,
                                 const SyncPretrainOptions& opts = {});

// Held-out accuracy of a scorer on the same pair construction.
double sync_pair_accuracy(SyncScorer& scorer, const std::vector<ClipData>& clips, const TrainConfig& config,
                          double holdout_fraction = 0.2);

void save_sync_scorer(const std::filesystem::path& path, SyncScorer& scorer);
// Returns a frozen scorer.
SyncScorer load_sync_scorer(const std::filesystem::path& path);

// ---- GAN loop --------------------------------------------------------------

struct LossRecord {
  int64_t step = 0;
  double l_p = 0, l_g = 0, l_d = 0, l_sync = 0, total = 0;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& records);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

struct RunOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 0;
  SyncScorer scorer{nullptr};            // optional, must be frozen
  std::function<void(const LossRecord&)> on_step;
};

// Runs `steps` alternating updates on `state`: the discriminator first on a
// detached fake, then the generator against the updated discriminator.
// Batches are drawn from clips with an RNG keyed on (seed, step), so resuming
// from a checkpoint reproduces an uninterrupted run. Throws NonFiniteLoss
// (carrying the last checkpoint path) if a loss goes non-finite.
std::vector<LossRecord> run_training(ModelState& state, const std::vector<ClipData>& clips, int steps,
                                     const RunOptions& opts = {});

// Draws the batch used at `step`.
Batch draw_batch(const std::vector<ClipData>& clips, const TrainConfig& config, int64_t step);

struct TrainResult {
  ModelState state;
  std::vector<LossRecord> losses;
  std::filesystem::path final_checkpoint;
};

// Full run from config: loads the manifests (and the scorer if configured),
// trains config.steps steps, writes losses.csv and checkpoints into out_dir.
TrainResult train_loop(const TrainConfig& config);

// Continues training of `base` on one identity's clip segment. steps == 0
// returns an identical copy of base.
ModelState finetune(const ModelState& base, const ClipData& identity_segment, int steps,
                    const RunOptions& opts = {});

}  // namespace facedub
