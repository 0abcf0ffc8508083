#include "facedub/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "facedub/errors.hpp"
#include "facedub/image_io.hpp"

namespace facedub {
namespace fs = std::filesystem;

namespace {

using Color = std::array<float, 3>;

constexpr int kSuperSample = 3;

Color mix(const Color& a, const Color& b, double t) {
  return {static_cast<float>(a[0] + (b[0] - a[0]) * t), static_cast<float>(a[1] + (b[1] - a[1]) * t),
          static_cast<float>(a[2] + (b[2] - a[2]) * t)};
}

Color scale(const Color& c, double s) {
  return {static_cast<float>(c[0] * s), static_cast<float>(c[1] * s), static_cast<float>(c[2] * s)};
}

bool in_ellipse(double u, double v, double cu, double cv, double a, double b) {
  const double du = (u - cu) / a;
  const double dv = (v - cv) / b;
  return du * du + dv * dv <= 1.0;
}

Color uniform_color(std::mt19937_64& rng, Color lo, Color hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Color c{};
  for (std::size_t k = 0; k < 3; ++k) c[k] = static_cast<float>(lo[k] + (hi[k] - lo[k]) * u(rng));
  return c;
}

Color shade(const FaceIdentity& id, const FaceState& st, double u, double v, double y_frac) {
  const double aspect = face::kHeadAspect;
  Color c = scale(id.background, 0.85 + 0.15 * y_frac);
  if (!in_ellipse(u, v, 0.0, 0.0, 1.0, aspect)) return c;

  c = id.skin;
  if (v < -0.8 * aspect) return id.hair;

  for (double side : {-1.0, 1.0}) {
    if (in_ellipse(u, v, side * 0.52, 0.3, 0.16, 0.1)) c = mix(c, id.blush, id.blush_strength);
  }

  const auto& shape = id.shape;
  for (double side : {-1.0, 1.0}) {
    const double cu = side * shape.eye_spacing;
    const double s = (u - cu) / 0.17;
    if (std::abs(s) <= 1.0 && std::abs(v - (-0.36 - 0.04 * (1.0 - s * s))) <= 0.025) c = scale(id.hair, 1.1);
    const double eh = face::eye_half_height(st.blink);
    if (in_ellipse(u, v, cu, -0.2, 0.15, eh)) {
      c = {0.95F, 0.95F, 0.93F};
      if (in_ellipse(u, v, cu, -0.2, 0.06, 0.06)) c = id.iris;
      if (in_ellipse(u, v, cu, -0.2, 0.025, 0.025)) c = {0.05F, 0.05F, 0.05F};
    }
  }

  if (in_ellipse(u, v, 0.0, 0.02, 0.07, 0.12)) c = scale(c, 0.92);
  for (double side : {-1.0, 1.0}) {
    if (in_ellipse(u, v, side * 0.07, 0.11, 0.03, 0.015)) c = scale(id.skin, 0.55);
  }

  const double mouth_v = face::kMouthCenterV;
  const double outer_h = face::outer_lip_half_height(st.opening);
  const double inner_h = face::inner_lip_half_height(st.opening);
  const double inner_w = 0.75 * shape.mouth_width;
  if (in_ellipse(u, v, 0.0, mouth_v, shape.mouth_width, outer_h)) c = id.lips;
  if (in_ellipse(u, v, 0.0, mouth_v, inner_w, inner_h)) {
    c = {0.10F, 0.03F, 0.04F};
    const double top = mouth_v - inner_h;
    if (v < top + 0.7 * inner_h) {
      const double phase = 2.0 * std::numbers::pi * (u / inner_w) * id.tooth_frequency + id.tooth_phase;
      c = std::sin(phase) > 0.8 ? Color{0.55F, 0.52F, 0.48F} : Color{0.93F, 0.91F, 0.86F};
    }
  }
  return c;
}

}  // namespace

FaceIdentity sample_identity(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FaceIdentity id;
  id.shape.eye_spacing = 0.33 + 0.1 * u(rng);
  id.shape.mouth_width = 0.28 + 0.08 * u(rng);
  id.skin = uniform_color(rng, {0.55F, 0.38F, 0.28F}, {0.98F, 0.85F, 0.75F});
  id.background = uniform_color(rng, {0.1F, 0.2F, 0.3F}, {0.5F, 0.7F, 0.8F});
  id.hair = uniform_color(rng, {0.05F, 0.03F, 0.02F}, {0.45F, 0.3F, 0.15F});
  id.lips = uniform_color(rng, {0.72F, 0.36F, 0.40F}, {0.92F, 0.52F, 0.58F});
  id.iris = uniform_color(rng, {0.1F, 0.2F, 0.1F}, {0.4F, 0.5F, 0.7F});
  id.blush = uniform_color(rng, {0.8F, 0.4F, 0.4F}, {0.95F, 0.6F, 0.6F});
  id.blush_strength = 0.5 * u(rng);
  id.tooth_frequency = 3.0 + 4.0 * u(rng);
  id.tooth_phase = 2.0 * std::numbers::pi * u(rng);
  id.head_scale = 0.76 + 0.08 * u(rng);
  return id;
}

std::vector<double> opening_signal(int frames, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> gap(3, 5);
  auto key_value = [&] { return u(rng) < 0.25 ? 0.08 * u(rng) : 0.2 + 0.8 * u(rng); };

  std::vector<double> out(static_cast<std::size_t>(frames));
  int t0 = 0;
  double v0 = key_value();
  while (t0 < frames) {
    const int t1 = t0 + gap(rng);
    const double v1 = key_value();
    for (int t = t0; t < std::min(t1, frames); ++t) {
      const double a = static_cast<double>(t - t0) / (t1 - t0);
      const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * a);
      out[static_cast<std::size_t>(t)] = v0 + (v1 - v0) * w;
    }
    t0 = t1;
    v0 = v1;
  }
  return out;
}

std::vector<double> blink_signal(int frames, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> gap(40, 90);
  constexpr std::array<double, 4> profile = {0.5, 1.0, 1.0, 0.5};
  std::vector<double> out(static_cast<std::size_t>(frames), 0.0);
  for (int t = gap(rng) / 2; t < frames; t += gap(rng)) {
    for (std::size_t k = 0; k < profile.size() && t + static_cast<int>(k) < frames; ++k) {
      out[static_cast<std::size_t>(t) + k] = profile[k];
    }
  }
  return out;
}

std::pair<torch::Tensor, LandmarkSet> render_face(const FaceIdentity& id, const FaceState& state, int height,
                                                  int width) {
  const double rx = id.head_scale * width / 2.0;
  auto img = torch::empty({3, height, width}, torch::kFloat32);
  auto acc = img.accessor<float, 3>();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sum[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSuperSample; ++sy) {
        for (int sx = 0; sx < kSuperSample; ++sx) {
          const double px = x + (sx + 0.5) / kSuperSample;
          const double py = y + (sy + 0.5) / kSuperSample;
          const auto c = shade(id, state, (px - state.center.x) / rx, (py - state.center.y) / rx, py / height);
          for (int ch = 0; ch < 3; ++ch) sum[ch] += c[static_cast<std::size_t>(ch)];
        }
      }
      for (int ch = 0; ch < 3; ++ch) acc[ch][y][x] = static_cast<float>(sum[ch] / (kSuperSample * kSuperSample));
    }
  }
  auto pts = face::layout(id.shape, state.opening, state.blink);
  for (auto& p : pts) p = {state.center.x + p.x * rx, state.center.y + p.y * rx};
  return {img, LandmarkSet::ingest(std::move(pts), width, height)};
}

torch::Tensor audio_embedding(uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xA0D10));
  std::normal_distribution<double> n(0.0, 1.0);
  auto w = torch::empty({kAudioFeatureDim, 2}, torch::kFloat64);
  auto acc = w.accessor<double, 2>();
  for (int r = 0; r < kAudioFeatureDim; ++r) {
    for (int c = 0; c < 2; ++c) acc[r][c] = n(rng);
  }
  return w;
}

torch::Tensor synth_audio_features(const std::vector<double>& opening, const torch::Tensor& embedding, double noise,
                                   uint64_t seed) {
  const int n = static_cast<int>(opening.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto w = embedding.accessor<double, 2>();
  auto out = torch::empty({n, kAudioFeatureDim}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (int t = 0; t < n; ++t) {
    const double prev = opening[static_cast<std::size_t>(std::max(t - 1, 0))];
    const double next = opening[static_cast<std::size_t>(std::min(t + 1, n - 1))];
    const double o = opening[static_cast<std::size_t>(t)];
    const double d = 5.0 * 0.5 * (next - prev);
    for (int k = 0; k < kAudioFeatureDim; ++k) {
      acc[t][k] = static_cast<float>(w[k][0] * o + w[k][1] * d + noise * gauss(rng));
    }
  }
  return out;
}

std::vector<SynthClip> synth_generate(const SynthConfig& config, const fs::path& out_dir) {
  if (config.height <= 0 || config.width <= 0 || config.height % 4 != 0 || config.width % 4 != 0) {
    throw InvalidParameter("synthetic frame size must be positive and divisible by 4");
  }
  if (config.num_clips < 1) throw InvalidParameter("need at least one clip");
  if (config.audio_window < 1 || config.frames_per_clip < 2 * config.audio_window) {
    throw InvalidParameter("frames_per_clip must be at least twice the audio window");
  }
  const auto embedding = audio_embedding(config.seed);
  std::vector<SynthClip> clips;
  for (int c = 0; c < config.num_clips; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03d", c);
    const fs::path dir = out_dir / name;
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "landmarks");

    const uint64_t clip_seed = mix_seed(config.seed, static_cast<uint64_t>(c));
    const auto id = sample_identity(mix_seed(clip_seed, 1));
    SynthClip clip;
    clip.opening = opening_signal(config.frames_per_clip, mix_seed(clip_seed, 2));
    clip.blink = blink_signal(config.frames_per_clip, mix_seed(clip_seed, 3));

    std::mt19937_64 motion_rng(mix_seed(clip_seed, 5));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double phase_x = 2.0 * std::numbers::pi * u(motion_rng);
    const double phase_y = 2.0 * std::numbers::pi * u(motion_rng);
    const double base_x = config.width / 2.0 + (u(motion_rng) - 0.5) * 0.04 * config.width;
    const double base_y = config.height / 2.0 + (u(motion_rng) - 0.5) * 0.04 * config.height;

    for (int t = 0; t < config.frames_per_clip; ++t) {
      FaceState st;
      st.opening = clip.opening[static_cast<std::size_t>(t)];
      st.blink = clip.blink[static_cast<std::size_t>(t)];
      st.center = {base_x + 0.015 * config.width * std::sin(2.0 * std::numbers::pi * t / 37.0 + phase_x),
                   base_y + 0.01 * config.height * std::sin(2.0 * std::numbers::pi * t / 53.0 + phase_y)};
      auto [img, lm] = render_face(id, st, config.height, config.width);
      write_png(dir / "frames" / frame_name(t, ".png"), img);
      write_landmarks(dir / "landmarks" / frame_name(t, ".json"), lm);
    }
    write_audio_features(dir / "audio.audf",
                         synth_audio_features(clip.opening, embedding, config.audio_noise, mix_seed(clip_seed, 4)));
    {
      std::ofstream sig(dir / "signals.json", std::ios::trunc);
      sig << nlohmann::json{{"opening", clip.opening}, {"blink", clip.blink}}.dump() << '\n';
    }

    clip.manifest.clip_id = name;
    clip.manifest.frame_dir = dir / "frames";
    clip.manifest.landmark_dir = dir / "landmarks";
    clip.manifest.audio_path = dir / "audio.audf";
    clip.manifest.frame_count = config.frames_per_clip;
    clip.manifest.fps = kFrameRate;
    clip.manifest_path = dir / "manifest.json";
    clip.manifest.save(clip.manifest_path);
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<double> read_opening_signal(const fs::path& clip_dir) {
  std::ifstream in(clip_dir / "signals.json");
  if (!in) throw FormatError("missing signals.json in " + clip_dir.string());
  return nlohmann::json::parse(in).at("opening").get<std::vector<double>>();
}

}  // namespace facedub
