#include "facedub/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "facedub/errors.hpp"
#include "facedub/face_layout.hpp"
#include "facedub/image_io.hpp"

namespace facedub {
namespace fs = std::filesystem;
using json = nlohmann::json;
using torch::indexing::Slice;

namespace {

constexpr std::array<char, 4> kAudioMagic = {'A', 'U', 'D', 'F'};

void put_u32(std::ostream& os, uint32_t v) {
  const std::array<unsigned char, 4> b = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path relative_or_absolute(const fs::path& p, const fs::path& base) {
  std::error_code ec;
  auto rel = fs::relative(p, base, ec);
  return (ec || rel.empty()) ? fs::absolute(p) : rel;
}

}  // namespace

AudioWindow AudioWindow::centered(const torch::Tensor& clip_features, int center, int window) {
  if (window <= 0 || window % 2 == 0) throw InvalidParameter("audio window length must be odd and positive");
  if (clip_features.dim() != 2 || clip_features.size(1) != kAudioFeatureDim) {
    throw InvalidParameter("audio features must be rows x 29");
  }
  const int rows = static_cast<int>(clip_features.size(0));
  if (rows == 0) throw InvalidParameter("empty audio track");
  std::vector<int64_t> idx(window);
  for (int k = 0; k < window; ++k) idx[k] = std::clamp(center - window / 2 + k, 0, rows - 1);
  return {clip_features.index_select(0, torch::tensor(idx, torch::kLong)).to(torch::kFloat32)};
}

void AudioWindow::validate() const {
  if (!features.defined() || features.dim() != 2 || features.size(1) != kAudioFeatureDim) {
    throw InvalidParameter("audio window must be T x 29");
  }
  if (features.size(0) % 2 == 0) throw InvalidParameter("audio window length must be odd");
  if (!torch::isfinite(features).all().item<bool>()) throw NumericalError("non-finite audio features");
}

torch::Tensor read_audio_features(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kAudioMagic.data(), 4) != 0) {
    throw FormatError("bad AUDF header in " + path.string());
  }
  const uint32_t rows = get_u32(bytes.data() + 4);
  const uint32_t cols = get_u32(bytes.data() + 8);
  const std::size_t expected = 16 + static_cast<std::size_t>(rows) * cols * 4;
  if (bytes.size() != expected) {
    throw FormatError("AUDF payload size mismatch in " + path.string() + ": header declares " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  auto out = torch::empty({static_cast<int64_t>(rows), static_cast<int64_t>(cols)}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
    dst[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
  }
  return out;
}

void write_audio_features(const fs::path& path, const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(1) != kAudioFeatureDim) {
    throw FormatError("audio feature matrix must be rows x 29");
  }
  const auto m = features.to(torch::kFloat32).contiguous();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kAudioMagic.data(), 4);
  put_u32(out, static_cast<uint32_t>(m.size(0)));
  put_u32(out, static_cast<uint32_t>(m.size(1)));
  put_u32(out, 0);
  const float* src = m.data_ptr<float>();
  for (int64_t i = 0; i < m.numel(); ++i) put_u32(out, std::bit_cast<uint32_t>(src[i]));
  if (!out) throw FormatError("short write to " + path.string());
}

LandmarkSet read_landmarks(const fs::path& path, int frame_width, int frame_height) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("invalid landmark JSON in " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw FormatError("landmark file must hold a JSON array");
  std::vector<Point2> pts;
  pts.reserve(doc.size());
  for (const auto& p : doc) {
    if (!p.is_array() || p.size() != 2) throw FormatError("landmark entries must be [x, y] pairs");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return LandmarkSet::ingest(std::move(pts), frame_width, frame_height);
}

void write_landmarks(const fs::path& path, const LandmarkSet& landmarks) {
  json doc = json::array();
  for (const auto& p : landmarks.points()) doc.push_back({p.x, p.y});
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << doc.dump() << '\n';
}

ClipManifest ClipManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& s) {
      fs::path p(s);
      return p.is_absolute() ? p : base / p;
    };
    ClipManifest m;
    m.clip_id = doc.at("clip_id").get<std::string>();
    m.frame_dir = resolve(doc.at("frame_dir").get<std::string>());
    m.landmark_dir = resolve(doc.at("landmark_dir").get<std::string>());
    m.audio_path = resolve(doc.at("audio_path").get<std::string>());
    m.frame_count = doc.at("frame_count").get<int>();
    m.fps = doc.at("fps").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest " + path.string() + ": " + e.what());
  }
}

void ClipManifest::save(const fs::path& path) const {
  const auto base = path.has_parent_path() ? path.parent_path() : fs::current_path();
  json doc = {{"clip_id", clip_id},
              {"frame_dir", relative_or_absolute(frame_dir, base).generic_string()},
              {"landmark_dir", relative_or_absolute(landmark_dir, base).generic_string()},
              {"audio_path", relative_or_absolute(audio_path, base).generic_string()},
              {"frame_count", frame_count},
              {"fps", fps}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

fs::path ClipManifest::frame_path(int index) const { return frame_dir / frame_name(index, ".png"); }
fs::path ClipManifest::landmark_path(int index) const { return landmark_dir / frame_name(index, ".json"); }

void ClipManifest::validate() const {
  auto count = [](const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw FormatError("missing directory " + dir.string());
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += (e.path().extension() == ext) ? 1 : 0;
    return n;
  };
  const int frames = count(frame_dir, ".png");
  const int marks = count(landmark_dir, ".json");
  const auto audio = read_audio_features(audio_path);
  if (frames != frame_count || marks != frame_count || audio.size(0) != frame_count) {
    throw FormatError("clip " + clip_id + ": frame/landmark/audio counts disagree (" + std::to_string(frames) +
                      "/" + std::to_string(marks) + "/" + std::to_string(audio.size(0)) + " vs " +
                      std::to_string(frame_count) + ")");
  }
}

CropBox mask_bounds(const RegionMask& mask) {
  const auto nz = torch::nonzero(mask.data > 0);
  if (nz.size(0) == 0) throw ShapeError("mask is empty");
  const auto lo = std::get<0>(nz.min(0));
  const auto hi = std::get<0>(nz.max(0));
  return {static_cast<int>(lo[1].item<int64_t>()), static_cast<int>(lo[0].item<int64_t>()),
          static_cast<int>(hi[1].item<int64_t>()) + 1, static_cast<int>(hi[0].item<int64_t>()) + 1};
}

torch::Tensor mouth_crop(const torch::Tensor& image, const torch::Tensor& mask, const CropBox& box, int out_h,
                         int out_w) {
  namespace F = torch::nn::functional;
  const bool batched = image.dim() == 4;
  auto x = batched ? image : image.unsqueeze(0);
  auto m = mask.to(x.scalar_type()).unsqueeze(0).unsqueeze(0);
  auto cut = (x * m).index({Slice(), Slice(), Slice(box.y0, box.y1), Slice(box.x0, box.x1)});
  auto out = F::interpolate(cut, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{out_h, out_w})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
  return batched ? out : out.squeeze(0);
}

PreparedFrame prepare_frame(const torch::Tensor& frame, const LandmarkSet& landmarks, const PrepareOptions& opts) {
  auto crop = crop_face(frame, landmarks, opts.height, opts.width, opts.crop_margin);
  PreparedFrame out;
  out.face = crop.image;
  out.transform = crop.transform;
  out.landmarks = crop.landmarks;
  out.lower_mask = lower_half_mask(out.landmarks);
  out.mouth_box = mask_bounds(out.lower_mask);
  out.mouth = mouth_crop(out.face, out.lower_mask.data, out.mouth_box, opts.height / 2, opts.width / 2);
  return out;
}

ClipData load_clip(const ClipManifest& manifest, const PrepareOptions& opts, bool keep_raw_frames) {
  ClipData clip;
  clip.manifest = manifest;
  clip.audio = read_audio_features(manifest.audio_path);
  if (clip.audio.size(1) != kAudioFeatureDim) throw FormatError("audio features must have 29 columns");
  clip.frames.reserve(static_cast<std::size_t>(manifest.frame_count));
  for (int i = 0; i < manifest.frame_count; ++i) {
    auto frame = read_png(manifest.frame_path(i));
    auto lm = read_landmarks(manifest.landmark_path(i), static_cast<int>(frame.size(2)),
                             static_cast<int>(frame.size(1)));
    clip.frames.push_back(prepare_frame(frame, lm, opts));
    if (keep_raw_frames) clip.raw_frames.push_back(frame);
  }
  return clip;
}

std::vector<int> select_references(int frame_count, int target_index, int n_refs, int gap, uint64_t seed) {
  if (target_index < 0 || target_index >= frame_count) throw InvalidParameter("target index out of range");
  if (n_refs < 1) throw InvalidParameter("need at least one reference");
  std::vector<int> candidates;
  for (int i = 0; i < frame_count; ++i) {
    if (std::abs(i - target_index) >= gap) candidates.push_back(i);
  }
  if (static_cast<int>(candidates.size()) < n_refs) {
    throw InsufficientFrames("clip has " + std::to_string(candidates.size()) + " frames at least " +
                             std::to_string(gap) + " away from the target, need " + std::to_string(n_refs));
  }
  std::mt19937_64 rng(seed);
  for (int k = 0; k < n_refs; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), candidates.size() - 1);
    std::swap(candidates[static_cast<std::size_t>(k)], candidates[pick(rng)]);
  }
  candidates.resize(static_cast<std::size_t>(n_refs));
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

Sample make_sample(const ClipData& clip, int target_index, const SampleOptions& opts, uint64_t seed,
                   const torch::Tensor& audio) {
  const int count = static_cast<int>(clip.frames.size());
  const auto refs = select_references(count, target_index, opts.n_refs, opts.ref_gap, seed);
  const auto& tgt = clip.frames[static_cast<std::size_t>(target_index)];

  Sample s;
  s.target_index = target_index;
  s.reference_indices = refs;
  s.source_frame = tgt.face;
  s.target = tgt.face;
  s.lower_mask = tgt.lower_mask;
  s.mouth_box = tgt.mouth_box;
  s.masked_source = tgt.face * (1.0F - tgt.lower_mask.data.unsqueeze(0));
  for (int r : refs) {
    s.references.push_back(clip.frames[static_cast<std::size_t>(r)].face);
    s.mouths.push_back(clip.frames[static_cast<std::size_t>(r)].mouth);
  }
  s.audio = AudioWindow::centered(audio, target_index, opts.audio_window);
  s.audio.validate();
  return s;
}

Sample make_sample(const ClipData& clip, int target_index, const SampleOptions& opts, uint64_t seed) {
  return make_sample(clip, target_index, opts, seed, clip.audio);
}

Sample load_sample(const ClipManifest& manifest, int target_index, const SampleOptions& sample_opts,
                   const PrepareOptions& prepare_opts, uint64_t seed) {
  return make_sample(load_clip(manifest, prepare_opts), target_index, sample_opts, seed);
}

Batch Batch::to(torch::Dtype dtype) const {
  Batch b = *this;
  b.masked_source = masked_source.to(dtype);
  b.references = references.to(dtype);
  b.mouths = mouths.to(dtype);
  b.audio = audio.to(dtype);
  b.target = target.to(dtype);
  b.lower_masks = lower_masks.to(dtype);
  return b;
}

Batch collate(std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidParameter("cannot collate an empty batch");
  std::vector<torch::Tensor> src, refs, mouths, audio, tgt, masks;
  Batch b;
  for (const auto& s : samples) {
    src.push_back(s.masked_source);
    refs.push_back(torch::stack(s.references));
    mouths.push_back(torch::stack(s.mouths));
    audio.push_back(s.audio.features);
    tgt.push_back(s.target);
    masks.push_back(s.lower_mask.data);
    b.mouth_boxes.push_back(s.mouth_box);
  }
  b.masked_source = torch::stack(src);
  b.references = torch::stack(refs);
  b.mouths = torch::stack(mouths);
  b.audio = torch::stack(audio);
  b.target = torch::stack(tgt);
  b.lower_masks = torch::stack(masks);
  return b;
}

double mouth_opening_signal(const torch::Tensor& face, const LandmarkSet& landmarks) {
  const auto& r = landmarks[face::kMouthRightCorner];
  const auto& l = landmarks[face::kMouthLeftCorner];
  const double cx = 0.5 * (r.x + l.x);
  const double cy = 0.5 * (r.y + l.y);
  const double span = std::hypot(r.x - l.x, r.y - l.y);
  const int h = static_cast<int>(face.size(1));
  const int w = static_cast<int>(face.size(2));
  const int x0 = std::clamp(static_cast<int>(std::floor(cx - 0.55 * span)), 0, w - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(cx + 0.55 * span)), x0 + 1, w);
  const int y0 = std::clamp(static_cast<int>(std::floor(cy - 0.45 * span)), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(cy + 0.45 * span)), y0 + 1, h);
  const auto patch = face.detach().to(torch::kFloat64).index({Slice(), Slice(y0, y1), Slice(x0, x1)});
  const auto lum = 0.299 * patch[0] + 0.587 * patch[1] + 0.114 * patch[2];
  // Darkness relative to the box's median luminance (lips and skin), so the
  // measure stays linear in the dark area under partial-pixel coverage.
  const double ref = std::max(lum.median().item<double>(), 1e-3);
  return ((ref - lum) / ref).clamp(0.0, 1.0).mean().item<double>();
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidParameter("pearson needs two equal series of length >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  auto splitmix = [](uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

}  // namespace facedub
