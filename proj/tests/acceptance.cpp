// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.
//
//   acceptance [--work DIR] [--only 1,6,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "facedub/alignment.hpp"
#include "facedub/checkpoint.hpp"
#include "facedub/dataio.hpp"
#include "facedub/face_layout.hpp"
#include "facedub/geometry.hpp"
#include "facedub/losses.hpp"
#include "facedub/metrics.hpp"
#include "facedub/nn_common.hpp"
#include "facedub/pipeline.hpp"
#include "facedub/synth.hpp"
#include "facedub/train.hpp"
#include "facedub/warping.hpp"

using namespace facedub;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a failed check; the first few are kept for the report.
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail.clear();
    pass = false;
    if (std::count(detail.begin(), detail.end(), ';') < 3) detail += what + "; ";
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- shared smoke setup ------------------------------------------------------

fs::path g_work;

TrainConfig smoke_config() {
  TrainConfig c;
  c.seed = 0;
  c.model.height = 64;
  c.model.width = 48;
  c.model.embed_dim = 64;
  c.model.n_refs = 5;
  c.model.audio_window = 9;
  c.model.avau_layers = 2;
  c.model.heads = 4;
  c.model.feature_channels = 40;
  c.model.encoder_width = 16;
  c.model.unet_width = 32;
  c.model.decoder_width = 32;
  c.model.mouth_width = 48;
  c.batch_size = 8;
  c.lr_generator = 1e-3;
  c.lr_discriminator = 1e-3;
  c.steps = 300;
  c.checkpoint_every = 10;
  return c;
}

const std::vector<SynthClip>& smoke_data() {
  static const auto clips = [] {
    SynthConfig sc;
    sc.seed = 0;
    sc.num_clips = 4;
    sc.frames_per_clip = 100;
    sc.height = 64;
    sc.width = 48;
    return synth_generate(sc, g_work / "data");
  }();
  return clips;
}

std::vector<std::string> smoke_manifests() {
  std::vector<std::string> out;
  for (const auto& c : smoke_data()) out.push_back(c.manifest_path.string());
  return out;
}

const std::vector<ClipData>& smoke_clips() {
  static const auto clips = load_clips(smoke_manifests(), prepare_options(smoke_config()));
  return clips;
}

// Runs the smoke protocol into work/<name> once per process.
const TrainResult& smoke_run(const std::string& name) {
  static std::map<std::string, TrainResult> runs;
  auto it = runs.find(name);
  if (it != runs.end()) return it->second;
  auto cfg = smoke_config();
  cfg.train_manifests = smoke_manifests();
  cfg.out_dir = (g_work / name).string();
  fs::remove_all(cfg.out_dir);
  return runs.emplace(name, train_loop(cfg)).first->second;
}

// ---- 1 geometry --------------------------------------------------------------

// Edge (i, j) is on the hull when every other point is strictly left of it.
std::set<std::pair<int, int>> brute_force_hull_edges(const std::vector<Point2>& p) {
  std::set<std::pair<int, int>> edges;
  const int n = static_cast<int>(p.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      bool all_left = true;
      for (int k = 0; k < n && all_left; ++k) {
        if (k == i || k == j) continue;
        const double cross = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
        all_left = cross > 0;
      }
      if (all_left) edges.emplace(i, j);
    }
  }
  return edges;
}

Outcome criterion_geometry() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 47);
    std::vector<Point2> pts;
    while (static_cast<int>(pts.size()) < n) {
      const Point2 q{u(rng), u(rng)};
      if (q.x * q.x + q.y * q.y <= 1.0) pts.push_back(q);
    }
    const auto hull = convex_hull(pts);
    std::set<std::pair<int, int>> got;
    auto index_of = [&](const Point2& q) {
      return static_cast<int>(std::find(pts.begin(), pts.end(), q) - pts.begin());
    };
    for (std::size_t i = 0; i < hull.size(); ++i) {
      got.emplace(index_of(hull[i]), index_of(hull[(i + 1) % hull.size()]));
    }
    if (got != brute_force_hull_edges(pts)) {
      o.check(false, "hull differs from brute force on set " + std::to_string(trial));
    }
  }

  int outside = 0, total = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto id = sample_identity(seed);
    const FaceState st{0.1 * static_cast<double>(seed), 0.0, {48.0 + seed, 64.0 - seed}};
    const auto lm = render_face(id, st, 128, 96).second;
    const auto mask = lower_half_mask(lm).data;
    for (const auto& p : lm.subset(face::lower_half_indices())) {
      ++total;
      const int x = std::clamp(static_cast<int>(std::floor(p.x)), 0, 95);
      const int y = std::clamp(static_cast<int>(std::floor(p.y)), 0, 127);
      if (mask[y][x].item<float>() != 1.0F) ++outside;
    }
  }
  o.check(outside == 0, std::to_string(outside) + "/" + std::to_string(total) + " lower-half landmarks outside mask");

  torch::manual_seed(2);
  const auto frame = torch::rand({3, 40, 30});
  const CropBox box{5, 6, 25, 36};
  const auto face_img = torch::rand({3, 30, 20});
  const auto pasted = paste_back(face_img, frame, {torch::zeros({30, 20}), MaskKind::smoothed}, box);
  o.check(torch::equal(pasted, frame), "zero-mask paste_back changed the frame");
  if (o.pass) o.detail = "200 hull sets, " + std::to_string(total) + " landmarks inside";
  return o;
}

// ---- 2 warp ------------------------------------------------------------------

Outcome criterion_warp() {
  Outcome o;
  torch::manual_seed(7);
  const auto f = torch::randn({2, 5, 16, 12});
  const auto same = warp(f, torch::zeros({2, 2, 16, 12}));
  const auto ulp = torch::nextafter(f.abs(), torch::full_like(f, INFINITY)) - f.abs();
  o.check(((same - f).abs() <= ulp).all().item<bool>(), "zero flow is not the identity within 1 ulp");

  auto ramp = torch::arange(16, torch::kFloat32).view({1, 1, 4, 4});
  auto flow = torch::zeros({1, 2, 4, 4});
  flow.index_put_({0, 0}, 0.5);  // one pixel right
  const float oracle[16] = {1, 2, 3, 3, 5, 6, 7, 7, 9, 10, 11, 11, 13, 14, 15, 15};
  const auto shifted = warp(ramp, flow).view({16});
  double worst = 0;
  for (int i = 0; i < 16; ++i) worst = std::max(worst, std::abs(shifted[i].item<double>() - oracle[i]));
  o.check(worst <= 1e-6, fmt("4x4 shift off by %.3g", worst));

  const auto feat = torch::randn({1, 3, 8, 6}, torch::kFloat64);
  auto m = (torch::rand({1, 2, 8, 6}, torch::kFloat64) * 0.3 - 0.15).requires_grad_(true);
  const auto w = torch::randn({1, 3, 8, 6}, torch::kFloat64);
  auto objective = [&](const torch::Tensor& mm) { return (warp(feat, mm) * w).sum().item<double>(); };
  (warp(feat, m) * w).sum().backward();
  const auto grad = m.grad().view({-1});
  std::mt19937_64 rng(9);
  double worst_rel = 0;
  auto probe = m.detach().clone();
  auto flat = probe.view({-1});
  for (int k = 0; k < 20; ++k) {
    const auto idx = static_cast<int64_t>(rng() % probe.numel());
    const double v = flat[idx].item<double>();
    const double eps = 1e-7;
    flat[idx] = v + eps;
    const double up = objective(probe);
    flat[idx] = v - eps;
    const double down = objective(probe);
    flat[idx] = v;
    const double fd = (up - down) / (2 * eps);
    const double an = grad[idx].item<double>();
    worst_rel = std::max(worst_rel, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12}));
  }
  o.check(worst_rel < 1e-3, fmt("flow gradient rel. err %.3g", worst_rel));
  if (o.pass) o.detail = fmt("ulp identity, 4x4 oracle, FD rel. err %.2g", worst_rel);
  return o;
}

// ---- 3 alignment -------------------------------------------------------------

ModelConfig small_model() {
  auto m = smoke_config().model;
  m.embed_dim = 32;
  m.feature_channels = 20;
  return m;
}

Outcome criterion_alignment() {
  Outcome o;
  torch::manual_seed(8);
  AlignmentNet net(small_model());
  const auto audio = torch::randn({2, 9, 29});
  const auto mouths = torch::rand({2, 5, 3, 32, 24});
  const auto base = net->forward(audio, mouths).v_alg;
  std::vector<int64_t> order(5);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(9);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto v = net->forward(audio, mouths.index_select(1, torch::tensor(order, torch::kLong))).v_alg;
    worst = std::max(worst, (v - base).abs().max().item<double>());
  }
  o.check(worst < 1e-5, fmt("permutation changed v_alg by %.3g", worst));

  layers::zero_parameters(*net->cross_modal()->output_layer());
  const auto r = net->forward(audio, mouths);
  o.check(torch::equal(r.v_alg, r.e_a), "zeroed cross-modal output does not leave v_alg == e_a");
  if (o.pass) o.detail = fmt("max permutation delta %.2g, skip exact", worst);
  return o;
}

// ---- 4 losses ----------------------------------------------------------------

Outcome criterion_losses() {
  Outcome o;
  torch::manual_seed(4);
  const auto real = torch::rand({6, 3, 8, 8});
  const auto fake = torch::rand({6, 3, 8, 8});
  const auto d_real = torch::randn({6}, torch::kFloat64);
  const auto d_fake = torch::randn({6}, torch::kFloat64);
  const Critic stub = [&](const torch::Tensor& x) { return torch::equal(x, real) ? d_real : d_fake; };
  const double ld = 0.5 * (d_real - 1).pow(2).mean().item<double>() + 0.5 * d_fake.pow(2).mean().item<double>();
  const double lg = (d_fake - 1).pow(2).mean().item<double>();
  o.check(std::abs(gan_d_loss(stub, real, fake).item<double>() - ld) <= 1e-7, "discriminator loss formula");
  o.check(std::abs(gan_g_loss(stub, fake).item<double>() - lg) <= 1e-7, "generator loss formula");
  o.check(std::abs(total_loss(1.0, 1.0, 1.0) - 11.1) < 1e-12, fmt("total_loss(1,1,1) = %.6f", total_loss(1.0, 1.0, 1.0)));

  const PerceptualExtractor vgg_like;
  const auto img = torch::rand({2, 3, 32, 24});
  o.check(perception_loss(img, img, vgg_like).item<double>() == 0.0, "perception loss non-zero on identical input");

  // one identity 1x1 layer: mean |a-b| at full resolution and at the 2x2 mean
  PerceptualExtractor::Layer layer{torch::eye(3).view({3, 3, 1, 1}), torch::zeros({3}), 1, false};
  const PerceptualExtractor ident({layer}, 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto a = torch::empty({1, 3, 2, 2}, torch::kFloat64);
    auto b = torch::empty({1, 3, 2, 2}, torch::kFloat64);
    double full = 0, half = 0;
    for (int c = 0; c < 3; ++c) {
      double ma = 0, mb = 0;
      for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
          const double va = u(rng), vb = u(rng);
          a[0][c][y][x] = va;
          b[0][c][y][x] = vb;
          full += std::abs(va - vb) / 12.0;
          ma += va / 4;
          mb += vb / 4;
        }
      }
      half += std::abs(ma - mb) / 3.0;
    }
    worst = std::max(worst, std::abs(perception_loss(a, b, ident).item<double>() - (full + half) / 2.0));
  }
  o.check(worst <= 1e-6, fmt("1-layer closed form off by %.3g", worst));
  if (o.pass) o.detail = "LS-GAN stubs, 11.1, closed form";
  return o;
}

// ---- 5 metrics ---------------------------------------------------------------

double dense_ssim(const torch::Tensor& a3, const torch::Tensor& b3) {
  const auto a = to_grayscale(a3).to(torch::kFloat64).squeeze();
  const auto b = to_grayscale(b3).to(torch::kFloat64).squeeze();
  const int h = static_cast<int>(a.size(0)), w = static_cast<int>(a.size(1)), r = kSsimWindow / 2;
  std::vector<double> g(kSsimWindow);
  double gs = 0;
  for (int i = 0; i < kSsimWindow; ++i) gs += g[i] = std::exp(-(i - r) * (i - r) / (2 * kSsimSigma * kSsimSigma));
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  auto pa = a.accessor<double, 2>();
  auto pb = b.accessor<double, 2>();
  double total = 0;
  int count = 0;
  for (int y = r; y < h - r; ++y) {
    for (int x = r; x < w - r; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double k = g[dy + r] * g[dx + r] / (gs * gs);
          const double va = pa[y + dy][x + dx], vb = pb[y + dy][x + dx];
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

Outcome criterion_metrics() {
  Outcome o;
  torch::manual_seed(1);
  double worst_self = 0, worst_dense = 0, worst_psnr = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = torch::rand({3, 32, 32});
    const auto b = (a + 0.2 * torch::randn({3, 32, 32})).clamp(0, 1);
    worst_self = std::max(worst_self, std::abs(ssim(a, a) - 1.0));
    worst_dense = std::max(worst_dense, std::abs(ssim(a, b) - dense_ssim(a, b)));
    const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
  }
  o.check(worst_self <= 1e-9, fmt("SSIM(x,x) off by %.3g", worst_self));
  o.check(worst_dense <= 1e-6, fmt("SSIM vs dense oracle %.3g", worst_dense));
  o.check(worst_psnr <= 1e-9, fmt("PSNR vs MSE formula %.3g dB", worst_psnr));
  if (o.pass) o.detail = fmt("dense SSIM diff %.2g, PSNR diff %.2g dB", worst_dense, worst_psnr);
  return o;
}

// ---- 6 capacity --------------------------------------------------------------

Outcome criterion_capacity() {
  Outcome o;
  auto cfg = smoke_config();
  torch::manual_seed(cfg.seed);
  Generator g(cfg.model);
  const auto sample = make_sample(smoke_clips()[0], 50, sample_options(cfg), 11);
  const auto batch = collate(std::vector<Sample>{sample});
  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (const auto& p : g->named_parameters()) params.emplace_back(p.key(), p.value());
  Adam opt(params, cfg.lr_generator, 0.9, 0.999);
  const PerceptualExtractor extractor;
  double last = 0;
  for (int step = 1; step <= 500; ++step) {
    opt.zero_grad();
    const auto out = g->forward(batch);
    const auto loss = cfg.weights.perception * perception_loss(out.image, batch.target, extractor);
    loss.backward();
    opt.step();
  }
  {
    torch::NoGradGuard ng;
    g->eval();
    last = psnr(g->forward(batch).image[0], batch.target[0]);
  }
  o.check(last > 30.0, fmt("PSNR %.2f dB after 500 steps", last));
  if (o.pass) o.detail = fmt("PSNR %.2f dB after 500 steps", last);
  return o;
}

// ---- 7 smoke -----------------------------------------------------------------

Outcome criterion_smoke() {
  Outcome o;
  const auto& run = smoke_run("smoke_a");
  const double l10 = run.losses.at(9).total;
  const double l300 = run.losses.at(299).total;
  o.check(l300 < l10, fmt("L(300) %.4f >= L(10) %.4f", l300, l10));

  auto cfg = smoke_config();
  std::vector<double> rs;
  auto gen = run.state.generator;
  for (std::size_t c = 0; c < smoke_data().size(); ++c) {
    const auto& clip = smoke_data()[c];
    InferOptions io;
    io.write_images = false;
    const auto r = infer(gen, clip.manifest, clip.manifest.audio_path, g_work / "smoke_infer", cfg, io);
    std::vector<double> truth(clip.opening.begin(), clip.opening.begin() + r.frames);
    rs.push_back(pearson(r.mouth_opening, truth));
  }
  const double r_mean = std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size());
  std::ostringstream per;
  for (double r : rs) per << fmt(" %.3f", r);
  o.check(r_mean > 0.6, "mouth-opening r " + fmt("%.3f", r_mean) + " (per clip" + per.str() + ")");
  if (o.pass) {
    o.detail = fmt("L %.4f -> %.4f, r %.3f", l10, l300, r_mean) + " (per clip" + per.str() + ")";
  }
  return o;
}

// ---- 8 fine-tuning -----------------------------------------------------------

Outcome criterion_finetune() {
  Outcome o;
  const auto& base = smoke_run("smoke_a").state;
  SynthConfig sc;
  sc.seed = 101;  // an identity the smoke model never saw
  sc.num_clips = 1;
  sc.frames_per_clip = 100;
  sc.height = 64;
  sc.width = 48;
  const auto synth = synth_generate(sc, g_work / "finetune_data");
  const auto clip = load_clips({synth[0].manifest_path.string()}, prepare_options(base.config))[0];
  const auto eval_part = slice_clip(clip, 0, 50);
  const auto tune_part = slice_clip(clip, 50, 100);

  auto at0 = finetune(base, tune_part, 0);
  auto at200 = finetune(base, tune_part, 200);
  const double p0 = evaluate(at0.generator, {eval_part}, base.config, SyncScorer{nullptr}).psnr;
  const double p200 = evaluate(at200.generator, {eval_part}, base.config, SyncScorer{nullptr}).psnr;
  o.check(p200 > p0, fmt("PSNR %.2f at 200 steps vs %.2f at 0", p200, p0));
  if (o.pass) o.detail = fmt("PSNR %.2f -> %.2f dB", p0, p200);
  return o;
}

// ---- 9 ablation --------------------------------------------------------------

Outcome criterion_ablation() {
  Outcome o;
  auto cfg = smoke_config();
  cfg.checkpoint_every = 0;
  const auto rows = run_ablation(cfg, smoke_clips(), smoke_clips(), SyncScorer{nullptr});
  write_eval_table(g_work / "ablation", rows);
  std::ostringstream all;
  for (const auto& r : rows) all << r.name << fmt(" %.4f ", r.ssim);
  const double full = rows.at(0).ssim;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    o.check(full >= rows[i].ssim - 0.005, rows[i].name + fmt(" SSIM %.4f > full %.4f", rows[i].ssim, full));
  }
  if (o.pass) o.detail = "SSIM " + all.str();
  return o;
}

// ---- 10 determinism ----------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parameters, optimizer moments and step; the embedded config differs only in out_dir.
bool same_state(const ModelState& a, const ModelState& b) {
  const auto ca = a.to_checkpoint(), cb = b.to_checkpoint();
  if (ca.step != cb.step || ca.tensors.size() != cb.tensors.size()) return false;
  for (std::size_t i = 0; i < ca.tensors.size(); ++i) {
    if (ca.tensors[i].name != cb.tensors[i].name || !torch::equal(ca.tensors[i].value, cb.tensors[i].value)) {
      return false;
    }
  }
  return true;
}

Outcome criterion_determinism() {
  Outcome o;
  const auto& a = smoke_run("smoke_a");
  const auto& b = smoke_run("smoke_b");
  const auto dir_a = g_work / "smoke_a";
  const auto dir_b = g_work / "smoke_b";
  o.check(slurp(dir_a / "losses.csv") == slurp(dir_b / "losses.csv"), "loss CSVs differ between identical runs");
  o.check(same_state(ModelState::load(a.final_checkpoint), ModelState::load(b.final_checkpoint)),
          "final states differ between identical runs");

  // save -> load -> save gives the same bytes
  const auto loaded = ModelState::load(a.final_checkpoint);
  loaded.save(g_work / "reloaded.ckpt");
  o.check(slurp(a.final_checkpoint) == slurp(g_work / "reloaded.ckpt"), "checkpoint round trip not bit-exact");

  // resume at step 100 and run 10 more steps; compare with the uninterrupted step 110
  auto resumed = ModelState::load(dir_a / "checkpoints" / "step_000100.ckpt");
  run_training(resumed, smoke_clips(), 10);
  resumed.save(g_work / "resumed_110.ckpt");
  o.check(slurp(g_work / "resumed_110.ckpt") == slurp(dir_a / "checkpoints" / "step_000110.ckpt"),
          "resume from step 100 diverges from the uninterrupted run at 110");
  if (o.pass) o.detail = "identical CSVs, bit-exact round trip and resume";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--only 1,2,...]\n");
      return 2;
    }
  }
  fs::create_directories(g_work);
  torch::set_num_threads(1);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry oracles", criterion_geometry},
      {"warp correctness", criterion_warp},
      {"alignment structure", criterion_alignment},
      {"loss algebra", criterion_losses},
      {"metric oracles", criterion_metrics},
      {"single-sample capacity", criterion_capacity},
      {"end-to-end smoke", criterion_smoke},
      {"fine-tuning trend", criterion_finetune},
      {"ablation direction", criterion_ablation},
      {"determinism", criterion_determinism},
  };
  const double limits[] = {10, 30, 10, 10, 10, 300, 600, 600, 1800, 0};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (limits[i] > 0 && secs > limits[i]) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", limits[i]);
    }
    if (!o.pass) ++failures;
    std::printf("%-4s criterion %2d  %-22s %7.1fs  %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
