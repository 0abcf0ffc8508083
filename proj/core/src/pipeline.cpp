#include "facedub/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "facedub/errors.hpp"
#include "facedub/image_io.hpp"
#include "facedub/metrics.hpp"

namespace facedub {
namespace fs = std::filesystem;

InferResult infer(Generator& generator, const ClipManifest& source, const fs::path& audio_path,
                  const fs::path& out_dir, const TrainConfig& config, const InferOptions& opts) {
  const auto clip = load_clip(source, prepare_options(config), /*keep_raw_frames=*/true);
  const auto audio = read_audio_features(audio_path);
  if (audio.dim() != 2 || audio.size(1) != kAudioFeatureDim) throw FormatError("driving audio must be F x 29");

  InferResult r;
  const int video = static_cast<int>(clip.frames.size());
  const int rows = static_cast<int>(audio.size(0));
  r.frames = std::min(video, rows);
  if (rows < video) {
    if (!opts.allow_truncate) {
      throw LengthMismatch("driving audio has " + std::to_string(rows) + " frames, video has " +
                           std::to_string(video));
    }
    std::cerr << "warning: audio shorter than video, truncating to " << rows << " frames\n";
    r.truncated = true;
  }

  if (opts.write_images) {
    for (const char* sub : {"frames", "faces", "flow", "features"}) fs::create_directories(out_dir / sub);
  } else {
    fs::create_directories(out_dir);
  }
  torch::NoGradGuard guard;
  generator->eval();
  const auto sopts = sample_options(config);
  const double sigma = default_smoothing_sigma(config.model.height);
  nlohmann::json per_frame = nlohmann::json::array();

  for (int t = 0; t < r.frames; ++t) {
    const auto sample = make_sample(clip, t, sopts, mix_seed(opts.seed, static_cast<uint64_t>(t)), audio);
    const auto out = generate_frame(sample, generator);
    const auto& prepared = clip.frames[static_cast<std::size_t>(t)];
    const auto face = out.image.to(torch::kFloat32);

    r.mouth_opening.push_back(mouth_opening_signal(face, prepared.landmarks));
    r.psnr.push_back(psnr(face, prepared.face));
    r.ssim.push_back(ssim(face, prepared.face));
    per_frame.push_back({{"frame", t},
                         {"psnr", r.psnr.back()},
                         {"ssim", r.ssim.back()},
                         {"mouth_opening", r.mouth_opening.back()},
                         {"references", sample.reference_indices}});
    if (!opts.write_images) continue;

    // Back to frame resolution: face and feathered mask resized to the crop box.
    const auto& box = prepared.transform.box;
    const auto soft = smooth_mask(prepared.lower_mask, sigma);
    RegionMask boxed{resize_image(soft.data.unsqueeze(0), box.height(), box.width()).squeeze(0).clamp(0.0, 1.0),
                     MaskKind::smoothed};
    const auto composite =
        paste_back(resize_image(face, box.height(), box.width()), clip.raw_frames[static_cast<std::size_t>(t)],
                   boxed, box);
    const auto name = frame_name(t);
    write_png(out_dir / "frames" / name, composite);
    write_png(out_dir / "faces" / name, face);
    write_normalized_png(out_dir / "flow" / name, out.flow.pow(2).sum(0).sqrt());
    write_normalized_png(out_dir / "features" / name, out.warped.mean(0));
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  nlohmann::json summary = {{"frames", r.frames},
                            {"truncated", r.truncated},
                            {"mean_psnr", mean(r.psnr)},
                            {"mean_ssim", mean(r.ssim)},
                            {"per_frame", per_frame}};
  std::ofstream(out_dir / "metrics.json") << summary.dump(2) << "\n";
  return r;
}

EvalRow evaluate(Generator& generator, const std::vector<ClipData>& clips, const TrainConfig& config,
                 SyncScorer scorer, const EvalOptions& opts) {
  static const PerceptualExtractor extractor;
  torch::NoGradGuard guard;
  generator->eval();
  const auto sopts = sample_options(config);
  const int mh = config.model.mouth_height();
  const int mw = config.model.mouth_width_px();

  EvalRow row;
  row.name = config.model.ablation.name();
  double lse_c = 0.0, lse_d = 0.0;
  int scored = 0;
  for (const auto& clip : clips) {
    int n = static_cast<int>(clip.frames.size());
    if (opts.max_frames_per_clip > 0) n = std::min(n, opts.max_frames_per_clip);
    std::vector<torch::Tensor> crops;
    for (int t = 0; t < n; ++t) {
      const auto sample = make_sample(clip, t, sopts, mix_seed(opts.seed, static_cast<uint64_t>(t)));
      const auto face = generate_frame(sample, generator).image.to(torch::kFloat32);
      row.ssim += ssim(face, sample.target);
      row.psnr += psnr(face, sample.target);
      row.lpips += perceptual_distance(face, sample.target, extractor);
      ++row.frames;
      if (!scorer.is_empty()) crops.push_back(mouth_crop(face, sample.lower_mask.data, sample.mouth_box, mh, mw));
    }
    if (!scorer.is_empty() && !crops.empty()) {
      const auto s = sync_scores(torch::stack(crops), clip.audio, scorer);
      lse_c += s.confidence;
      lse_d += s.distance;
      ++scored;
    }
  }
  if (row.frames == 0) throw InvalidParameter("nothing to evaluate");
  row.ssim /= row.frames;
  row.psnr /= row.frames;
  row.lpips /= row.frames;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.lse_c = scored ? lse_c / scored : nan;
  row.lse_d = scored ? lse_d / scored : nan;
  return row;
}

std::string format_eval_table(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %8s %8s %12s %12s %12s %7s\n", "model", "SSIM", "PSNR", "LPIPS-proxy",
                "LSE-C-proxy", "LSE-D-proxy", "frames");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %8.4f %8.3f %12.4f %12.4f %12.4f %7d\n", r.name.c_str(), r.ssim, r.psnr,
                  r.lpips, r.lse_c, r.lse_d, r.frames);
    out << line;
  }
  return out.str();
}

void write_eval_table(const fs::path& prefix, const std::vector<EvalRow>& rows) {
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  std::ofstream csv(prefix.string() + ".csv");
  csv << "model,SSIM,PSNR,LPIPS-proxy,LSE-C-proxy,LSE-D-proxy,frames\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n", r.name.c_str(), r.ssim, r.psnr, r.lpips,
                  r.lse_c, r.lse_d, r.frames);
    csv << line;
  }
  std::ofstream(prefix.string() + ".txt") << format_eval_table(rows);
}

std::vector<TrainConfig> ablation_configs(const TrainConfig& base) {
  std::vector<TrainConfig> out(4, base);
  for (auto& c : out) c.model.ablation = {};
  out[1].model.ablation.no_alignment = true;
  out[2].model.ablation.no_spade = true;
  out[3].model.ablation.no_cm = true;
  return out;
}

std::vector<EvalRow> run_ablation(const TrainConfig& base, const std::vector<ClipData>& train_clips,
                                  const std::vector<ClipData>& eval_clips, SyncScorer scorer,
                                  const EvalOptions& eval_opts) {
  std::vector<EvalRow> rows;
  for (const auto& cfg : ablation_configs(base)) {
    auto state = ModelState::create(cfg);
    RunOptions opts;
    opts.scorer = scorer;
    run_training(state, train_clips, cfg.steps, opts);
    rows.push_back(evaluate(state.generator, eval_clips, cfg, scorer, eval_opts));
  }
  return rows;
}

}  // namespace facedub
