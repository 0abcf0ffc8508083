// facedub command line: synthetic data, training, fine-tuning, inference,
// evaluation and ablations.
//
// exit codes: 0 ok, 2 validation error, 3 training divergence, 1 anything else

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "facedub/errors.hpp"
#include "facedub/metrics.hpp"
#include "facedub/pipeline.hpp"
#include "facedub/synth.hpp"
#include "facedub/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace facedub;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "JSON config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output path");
}

TrainConfig train_config(const Common& c) {
  auto cfg = c.config.empty() ? TrainConfig{} : load_train_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

int cmd_synth(const Common& c) {
  SynthConfig sc;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw InvalidParameter("cannot open config " + c.config);
    const auto j = json::parse(in);
    sc.seed = j.value("seed", sc.seed);
    sc.num_clips = j.value("num_clips", sc.num_clips);
    sc.frames_per_clip = j.value("frames_per_clip", sc.frames_per_clip);
    sc.height = j.value("height", sc.height);
    sc.width = j.value("width", sc.width);
    sc.audio_window = j.value("audio_window", sc.audio_window);
    sc.audio_noise = j.value("audio_noise", sc.audio_noise);
  }
  if (c.seed) sc.seed = *c.seed;
  const fs::path out = c.out.empty() ? fs::path("synthetic") : fs::path(c.out);
  const auto clips = synth_generate(sc, out);
  json list = json::array();
  for (const auto& clip : clips) list.push_back(clip.manifest_path.string());
  std::ofstream(out / "manifests.json") << json{{"train_manifests", list}}.dump(2) << "\n";
  std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
  return 0;
}

int cmd_pretrain_sync(const Common& c) {
  const auto cfg = train_config(c);
  const auto clips = load_clips(cfg.train_manifests, prepare_options(cfg));
  auto r = pretrain_sync(clips, cfg);
  const fs::path out = c.out.empty() ? fs::path("sync_scorer.ckpt") : fs::path(c.out);
  save_sync_scorer(out, r.scorer);
  std::printf("held-out pair accuracy %.4f after %d steps -> %s\n", r.accuracy, r.steps, out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::string& resume) {
  const auto cfg = train_config(c);
  if (resume.empty()) {
    const auto r = train_loop(cfg);
    std::printf("trained %lld steps, final L = %.6f -> %s\n", static_cast<long long>(r.state.step),
                r.losses.empty() ? 0.0 : r.losses.back().total, r.final_checkpoint.c_str());
    return 0;
  }
  auto state = ModelState::load(resume);
  const auto clips = load_clips(cfg.train_manifests, prepare_options(state.config));
  RunOptions opts;
  opts.checkpoint_dir = fs::path(cfg.out_dir) / "checkpoints";
  opts.checkpoint_every = cfg.checkpoint_every;
  if (!cfg.sync_scorer.empty()) opts.scorer = load_sync_scorer(cfg.sync_scorer);
  const int remaining = std::max<int>(0, cfg.steps - static_cast<int>(state.step));
  const auto losses = run_training(state, clips, remaining, opts);
  write_loss_csv(fs::path(cfg.out_dir) / "losses_resumed.csv", losses);
  state.save(fs::path(cfg.out_dir) / "final.ckpt");
  std::printf("resumed to step %lld\n", static_cast<long long>(state.step));
  return 0;
}

int cmd_finetune(const Common& c, const std::string& checkpoint, const std::string& clip_path, int steps) {
  auto base = ModelState::load(checkpoint);
  if (c.seed) base.config.seed = *c.seed;
  const auto clip = load_clip(ClipManifest::load(clip_path), prepare_options(base.config));
  const int half = static_cast<int>(clip.frames.size()) / 2;
  const auto inference_part = slice_clip(clip, 0, half);
  const auto finetune_part = slice_clip(clip, half, static_cast<int>(clip.frames.size()));
  auto tuned = finetune(base, finetune_part, steps);
  const fs::path out = c.out.empty() ? fs::path("finetune") : fs::path(c.out);
  fs::create_directories(out);
  tuned.save(out / "finetuned.ckpt");
  auto row = evaluate(tuned.generator, {inference_part}, tuned.config, SyncScorer{nullptr});
  row.name = "steps_" + std::to_string(steps);
  write_eval_table(out / "eval", {row});
  std::cout << format_eval_table({row});
  return 0;
}

int cmd_infer(const Common& c, const std::string& checkpoint, const std::string& clip_path,
              const std::string& audio, bool allow_truncate) {
  auto state = ModelState::load(checkpoint);
  InferOptions opts;
  opts.allow_truncate = allow_truncate;
  opts.seed = c.seed.value_or(state.config.seed);
  const fs::path out = c.out.empty() ? fs::path("infer") : fs::path(c.out);
  const auto manifest = ClipManifest::load(clip_path);
  const auto r = infer(state.generator, manifest, audio.empty() ? manifest.audio_path : fs::path(audio), out,
                       state.config, opts);
  std::printf("wrote %d frames to %s\n", r.frames, out.c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& scorer_path, int max_frames) {
  auto state = ModelState::load(checkpoint);
  auto cfg = state.config;
  if (!c.config.empty()) cfg.train_manifests = load_train_config(c.config).train_manifests;
  const auto clips = load_clips(cfg.train_manifests, prepare_options(cfg));
  SyncScorer scorer{nullptr};
  if (!scorer_path.empty()) scorer = load_sync_scorer(scorer_path);
  EvalOptions opts;
  opts.max_frames_per_clip = max_frames;
  opts.seed = c.seed.value_or(cfg.seed);
  const auto row = evaluate(state.generator, clips, cfg, scorer, opts);
  const fs::path out = c.out.empty() ? fs::path("eval") : fs::path(c.out);
  write_eval_table(out, {row});
  std::cout << format_eval_table({row});
  return 0;
}

int cmd_ablate(const Common& c, int max_frames) {
  const auto cfg = train_config(c);
  const auto clips = load_clips(cfg.train_manifests, prepare_options(cfg));
  SyncScorer scorer{nullptr};
  if (!cfg.sync_scorer.empty()) scorer = load_sync_scorer(cfg.sync_scorer);
  EvalOptions opts;
  opts.max_frames_per_clip = max_frames;
  opts.seed = cfg.seed;
  const auto rows = run_ablation(cfg, clips, clips, scorer, opts);
  const fs::path out = c.out.empty() ? fs::path("ablation") : fs::path(c.out);
  write_eval_table(out / "ablation", rows);
  std::cout << format_eval_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"audio-driven face dubbing on synthetic talking faces"};
  app.require_subcommand(1);

  Common synth, sync, train, ft, inf, ev, abl;
  auto* c_synth = app.add_subcommand("synth-data", "generate a synthetic clip dataset");
  add_common(c_synth, synth, false);

  auto* c_sync = app.add_subcommand("pretrain-sync", "pretrain and freeze the sync scorer");
  add_common(c_sync, sync, true);

  std::string resume;
  auto* c_train = app.add_subcommand("train", "run the GAN training loop");
  add_common(c_train, train, true);
  c_train->add_option("--resume", resume, "continue from a checkpoint");

  std::string ft_ckpt, ft_clip;
  int ft_steps = 0;
  auto* c_ft = app.add_subcommand("finetune", "identity fine-tuning on the second half of a clip");
  add_common(c_ft, ft, false);
  c_ft->add_option("--checkpoint", ft_ckpt)->required();
  c_ft->add_option("--clip", ft_clip, "clip manifest")->required();
  c_ft->add_option("--steps", ft_steps)->check(CLI::NonNegativeNumber);

  std::string inf_ckpt, inf_clip, inf_audio;
  bool allow_truncate = false;
  auto* c_inf = app.add_subcommand("infer", "dub a clip with driving audio");
  add_common(c_inf, inf, false);
  c_inf->add_option("--checkpoint", inf_ckpt)->required();
  c_inf->add_option("--clip", inf_clip, "source clip manifest")->required();
  c_inf->add_option("--audio", inf_audio, "driving audio (.audf); default: the clip's own");
  c_inf->add_flag("--allow-truncate", allow_truncate, "truncate the video to the audio length");

  std::string ev_ckpt, ev_scorer;
  int ev_frames = 0;
  auto* c_ev = app.add_subcommand("eval", "metrics table for a checkpoint");
  add_common(c_ev, ev, false);
  c_ev->add_option("--checkpoint", ev_ckpt)->required();
  c_ev->add_option("--scorer", ev_scorer, "frozen sync scorer for the LSE proxies");
  c_ev->add_option("--max-frames", ev_frames, "frames per clip (0 = all)");

  int abl_frames = 0;
  auto* c_abl = app.add_subcommand("ablate", "train and evaluate the full model and each ablation");
  add_common(c_abl, abl, true);
  c_abl->add_option("--max-frames", abl_frames, "frames per clip (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_sync) return cmd_pretrain_sync(sync);
    if (*c_train) return cmd_train(train, resume);
    if (*c_ft) return cmd_finetune(ft, ft_ckpt, ft_clip, ft_steps);
    if (*c_inf) return cmd_infer(inf, inf_ckpt, inf_clip, inf_audio, allow_truncate);
    if (*c_ev) return cmd_eval(ev, ev_ckpt, ev_scorer, ev_frames);
    if (*c_abl) return cmd_ablate(abl, abl_frames);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.last_good_checkpoint().empty()) std::cerr << "last good checkpoint: " << e.last_good_checkpoint() << "\n";
    return kExitDivergence;
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
