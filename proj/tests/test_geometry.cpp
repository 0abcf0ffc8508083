#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "facedub/errors.hpp"
#include "facedub/face_layout.hpp"
#include "facedub/geometry.hpp"
#include "facedub/synth.hpp"

using namespace facedub;

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// O(n^3): (i, j) is a hull edge iff every other point lies strictly left of i -> j.
std::vector<Point2> brute_force_hull(const std::vector<Point2>& pts) {
  const std::size_t n = pts.size();
  std::vector<int> next(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool edge = true;
      for (std::size_t k = 0; k < n && edge; ++k) {
        if (k != i && k != j && cross(pts[i], pts[j], pts[k]) <= 0.0) edge = false;
      }
      if (edge) next[i] = static_cast<int>(j);
    }
  }
  std::size_t start = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (next[i] < 0) continue;
    if (start == n || pts[i].x < pts[start].x || (pts[i].x == pts[start].x && pts[i].y < pts[start].y)) start = i;
  }
  std::vector<Point2> hull;
  std::size_t cur = start;
  do {
    hull.push_back(pts[cur]);
    cur = static_cast<std::size_t>(next[cur]);
  } while (cur != start && hull.size() <= n);
  return hull;
}

std::vector<Point2> random_disk(std::mt19937_64& rng, int n, double radius, Point2 c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) {
    const double r = radius * std::sqrt(u(rng));
    const double a = 2.0 * M_PI * u(rng);
    pts.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return pts;
}

LandmarkSet canonical_landmarks(int h, int w) {
  FaceIdentity id = sample_identity(1);
  return render_face(id, {0.5, 0.0, {w / 2.0, h / 2.0}}, h, w).second;
}

}  // namespace

TEST(ConvexHull, SquareWithCenter) {
  const std::vector<Point2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  const auto hull = convex_hull(pts);
  const std::vector<Point2> expect{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_EQ(hull, expect);
  EXPECT_GT(polygon_area(hull), 0.0);
}

TEST(ConvexHull, TriangleDropsInteriorPoint) {
  const std::vector<Point2> pts{{0, 0}, {2, 0}, {1, 1}, {1, 3}};
  const std::vector<Point2> expect{{0, 0}, {2, 0}, {1, 3}};
  EXPECT_EQ(convex_hull(pts), expect);
}

TEST(ConvexHull, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = random_disk(rng, 5 + trial % 46, 10.0, {0, 0});
    const auto hull = convex_hull(pts);
    ASSERT_EQ(hull, brute_force_hull(pts)) << "trial " << trial;
    for (const auto& p : pts) {
      for (std::size_t i = 0; i < hull.size(); ++i) {
        EXPECT_GE(cross(hull[i], hull[(i + 1) % hull.size()], p), -1e-9);
      }
    }
    EXPECT_EQ(convex_hull(hull), hull);
  }
}

TEST(ConvexHull, Degenerate) {
  EXPECT_THROW(convex_hull(std::vector<Point2>{{0, 0}, {1, 1}}), DegenerateHull);
  EXPECT_THROW(convex_hull(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}), DegenerateHull);
  EXPECT_THROW(convex_hull(std::vector<Point2>{{1, 1}, {1, 1}, {1, 1}}), DegenerateHull);
}

TEST(Landmarks, IngestClampsAndCounts) {
  std::vector<Point2> pts(LandmarkSet::kCount, Point2{5, 5});
  pts[0] = {-3, 2};
  pts[1] = {4, 100};
  const auto lm = LandmarkSet::ingest(pts, 10, 10);
  EXPECT_EQ(lm.clamp_count(), 2);
  for (const auto& p : lm.points()) {
    EXPECT_GE(p.x, 0.0);
    EXPECT_LT(p.x, 10.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LT(p.y, 10.0);
  }
  EXPECT_THROW(LandmarkSet::ingest(std::vector<Point2>(10), 10, 10), InvalidParameter);
}

TEST(Masks, RasterAreaTracksShoelace) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto hull = convex_hull(random_disk(rng, 30, 20.0, {32, 32}));
    const auto m = rasterize_convex(hull, 64, 64);
    double rows = 0;
    for (int y = 0; y < 64; ++y) rows += m[y].sum().item<double>() > 0 ? 1 : 0;
    EXPECT_NEAR(m.sum().item<double>(), polygon_area(hull), rows + 2.0);
  }
}

TEST(Masks, LowerHalfContainsItsLandmarks) {
  const auto lm = canonical_landmarks(128, 96);
  const auto mask = lower_half_mask(lm);
  const auto& idx = face::lower_half_indices();
  ASSERT_FALSE(idx.empty());
  for (int i : idx) {
    const auto& p = lm[static_cast<std::size_t>(i)];
    EXPECT_EQ(mask.data[static_cast<int>(p.y)][static_cast<int>(p.x)].item<float>(), 1.0F) << "landmark " << i;
  }
  // the eyes stay outside
  const auto& eye = lm[face::kLeftEyeBegin];
  EXPECT_EQ(mask.data[static_cast<int>(eye.y)][static_cast<int>(eye.x)].item<float>(), 0.0F);
}

TEST(Masks, FullFaceContainsLowerHalf) {
  const auto lm = canonical_landmarks(128, 96);
  const auto lower = lower_half_mask(lm);
  const auto full = full_face_mask(lm);
  EXPECT_TRUE((lower.data <= full.data).all().item<bool>());
  const double ratio = full.area() / lower.area();
  EXPECT_GT(ratio, 1.0);
  EXPECT_LT(ratio, 4.0);
}

TEST(Masks, RotationCommutes) {
  // 90 degree rotation on a square grid: (x, y) -> (y, 64 - x)
  std::mt19937_64 rng(8);
  const auto pts = random_disk(rng, 40, 20.0, {32, 32});
  std::vector<Point2> rot;
  for (const auto& p : pts) rot.push_back({p.y, 64.0 - p.x});
  const auto a = hull_mask(pts, 64, 64).data;
  const auto b = hull_mask(rot, 64, 64).data;
  const auto a_rot = a.transpose(0, 1).flip({0});
  EXPECT_LE((a_rot - b).abs().sum().item<double>(), 4.0 * 64);
}

TEST(SmoothMask, RangeAndPinning) {
  const auto lm = canonical_landmarks(128, 96);
  const auto bin = lower_half_mask(lm);
  const auto s = smooth_mask(bin, 2.5);
  EXPECT_EQ(s.kind, MaskKind::smoothed);
  EXPECT_GE(s.data.min().item<float>(), 0.0F);
  EXPECT_LE(s.data.max().item<float>(), 1.0F);
  // pixels whose whole (2r+1)^2 neighbourhood agrees are pinned
  const int r = static_cast<int>(std::ceil(3 * 2.5));
  namespace F = torch::nn::functional;
  const auto x = bin.data.unsqueeze(0).unsqueeze(0);
  const auto pool = F::MaxPool2dFuncOptions(2 * r + 1).stride(1).padding(r);
  const auto any_fg = F::max_pool2d(x, pool).squeeze();
  const auto all_fg = 1.0 - F::max_pool2d(1.0 - x, pool).squeeze();
  ASSERT_GT(all_fg.sum().item<double>(), 0.0);
  EXPECT_TRUE(torch::equal(s.data.masked_select(all_fg > 0.5), torch::ones({all_fg.gt(0.5).sum().item<int64_t>()})));
  EXPECT_EQ(s.data.masked_select(any_fg < 0.5).abs().sum().item<float>(), 0.0F);
}

TEST(SmoothMask, LimitsAndErrors) {
  const auto lm = canonical_landmarks(64, 48);
  const auto bin = lower_half_mask(lm);
  EXPECT_LT((smooth_mask(bin, 0.25).data - bin.data).abs().max().item<float>(), 0.05F);
  RegionMask ones{torch::ones({16, 16}), MaskKind::binary};
  EXPECT_TRUE(torch::equal(smooth_mask(ones, 2.0).data, ones.data));
  EXPECT_THROW(smooth_mask(bin, 0.0), InvalidParameter);
  EXPECT_THROW(smooth_mask(bin, -1.0), InvalidParameter);
}

TEST(SmoothMask, MatchesDenseConvolution) {
  const int n = 32;
  const double sigma = 2.0;
  auto bin = torch::zeros({n, n});
  bin.index_put_({torch::indexing::Slice(10, 22), torch::indexing::Slice(10, 22)}, 1.0);
  const auto s = smooth_mask({bin, MaskKind::binary}, sigma);

  const int r = static_cast<int>(std::ceil(3 * sigma));
  double norm = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  }
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, n - 1);
    x = std::clamp(x, 0, n - 1);
    return bin[y][x].item<double>();
  };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) acc += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) * at(y + dy, x + dx);
      }
      ASSERT_NEAR(s.data[y][x].item<double>(), acc / norm, 1e-6) << y << "," << x;
    }
  }
  // monotone decrease along the outward normal of the right edge
  for (int x = 16; x < n - 1; ++x) EXPECT_GE(s.data[16][x].item<float>(), s.data[16][x + 1].item<float>());
}

TEST(PasteBack, Identities) {
  auto src = torch::rand({3, 40, 30});
  auto gen = torch::rand({3, 20, 16});
  const CropBox box{5, 8, 21, 28};
  const auto zero = paste_back(gen, src, {torch::zeros({20, 16}), MaskKind::smoothed}, box);
  EXPECT_TRUE(torch::equal(zero, src));
  const auto one = paste_back(gen, src, {torch::ones({20, 16}), MaskKind::smoothed}, box);
  using torch::indexing::Slice;
  EXPECT_TRUE(torch::equal(one.index({Slice(), Slice(8, 28), Slice(5, 21)}), gen));
  auto outside = one.clone();
  outside.index_put_({Slice(), Slice(8, 28), Slice(5, 21)}, 0.0);
  auto src_outside = src.clone();
  src_outside.index_put_({Slice(), Slice(8, 28), Slice(5, 21)}, 0.0);
  EXPECT_TRUE(torch::equal(outside, src_outside));
  const auto half = paste_back(gen, src, {torch::full({20, 16}, 0.5), MaskKind::smoothed}, box);
  const auto expect = 0.5F * gen + 0.5F * src.index({Slice(), Slice(8, 28), Slice(5, 21)});
  EXPECT_TRUE(torch::allclose(half.index({Slice(), Slice(8, 28), Slice(5, 21)}), expect, 0.0, 1.2e-7));
  EXPECT_THROW(paste_back(torch::rand({3, 19, 16}), src, {torch::zeros({20, 16})}, box), ShapeError);
  EXPECT_THROW(paste_back(gen, src, {torch::zeros({20, 15})}, box), ShapeError);
}

TEST(CropFace, MarginZeroFullFrame) {
  std::vector<Point2> pts(LandmarkSet::kCount, Point2{10, 10});
  pts[0] = {0, 0};
  pts[1] = {47.999, 63.999};
  const auto lm = LandmarkSet::ingest(pts, 48, 64);
  auto frame = torch::rand({3, 64, 48});
  const auto crop = crop_face(frame, lm, 64, 48, 0.0);
  EXPECT_EQ(crop.transform.box, (CropBox{0, 0, 48, 64}));
  EXPECT_TRUE(torch::allclose(crop.image, frame, 0.0, 1e-6));
}

TEST(CropFace, RoundTripAndContainment) {
  const auto lm = canonical_landmarks(128, 96);
  const auto crop = crop_face(torch::rand({3, 128, 96}), lm, 64, 48);
  for (std::size_t i = 0; i < lm.points().size(); ++i) {
    const auto& q = crop.landmarks[i];
    EXPECT_GE(q.x, 0.0);
    EXPECT_LT(q.x, 48.0);
    EXPECT_GE(q.y, 0.0);
    EXPECT_LT(q.y, 64.0);
    const auto back = crop.transform.to_frame(q);
    EXPECT_LT(std::hypot(back.x - lm[i].x, back.y - lm[i].y), 0.5);
  }
  EXPECT_EQ(crop.image.sizes(), (std::vector<int64_t>{3, 64, 48}));
}

TEST(CropFace, Errors) {
  const auto lm = canonical_landmarks(64, 48);
  EXPECT_THROW(crop_face(torch::rand({3, 64, 48}), lm, 63, 48), InvalidParameter);
  const auto flat = LandmarkSet::ingest(std::vector<Point2>(LandmarkSet::kCount, Point2{3, 3}), 48, 64);
  EXPECT_THROW(crop_face(torch::rand({3, 64, 48}), flat, 64, 48), DegenerateCrop);
}
