#include "facedub/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "facedub/errors.hpp"
#include "facedub/face_layout.hpp"

namespace facedub {
namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double clamp_below(double v, int limit, int& clamps) {
  const double hi = std::nextafter(static_cast<double>(limit), 0.0);
  if (v < 0.0) {
    ++clamps;
    return 0.0;
  }
  if (v > hi) {
    ++clamps;
    return hi;
  }
  return v;
}

// 1-D min or max filter of radius r along rows (axis 1) or columns (axis 0),
// replicate border.
std::vector<double> morph_1d(const std::vector<double>& src, int h, int w, int r, bool along_rows,
                             bool take_max) {
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = take_max ? -std::numeric_limits<double>::infinity()
                            : std::numeric_limits<double>::infinity();
      for (int d = -r; d <= r; ++d) {
        const int yy = along_rows ? y : std::clamp(y + d, 0, h - 1);
        const int xx = along_rows ? std::clamp(x + d, 0, w - 1) : x;
        const double v = src[static_cast<std::size_t>(yy) * w + xx];
        acc = take_max ? std::max(acc, v) : std::min(acc, v);
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

std::vector<double> blur_1d(const std::vector<double>& src, int h, int w, const std::vector<double>& kernel,
                            bool along_rows) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int yy = along_rows ? y : std::clamp(y + d, 0, h - 1);
        const int xx = along_rows ? std::clamp(x + d, 0, w - 1) : x;
        acc += kernel[d + r] * src[static_cast<std::size_t>(yy) * w + xx];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

void check_image(const torch::Tensor& t, const char* what) {
  if (!t.defined() || t.dim() != 3 || t.size(0) != 3) {
    throw ShapeError(std::string(what) + " must be a 3 x H x W tensor");
  }
}

}  // namespace

LandmarkSet LandmarkSet::ingest(std::vector<Point2> points, int frame_width, int frame_height) {
  if (points.size() != static_cast<std::size_t>(kCount)) {
    throw InvalidParameter("landmark set needs exactly 468 points, got " + std::to_string(points.size()));
  }
  if (frame_width <= 0 || frame_height <= 0) {
    throw InvalidParameter("landmark frame size must be positive");
  }
  LandmarkSet set;
  for (auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidParameter("non-finite landmark");
    p.x = clamp_below(p.x, frame_width, set.clamp_count_);
    p.y = clamp_below(p.y, frame_height, set.clamp_count_);
  }
  set.points_ = std::move(points);
  set.frame_width_ = frame_width;
  set.frame_height_ = frame_height;
  return set;
}

std::vector<Point2> LandmarkSet::subset(std::span<const int> indices) const {
  std::vector<Point2> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(points_.at(static_cast<std::size_t>(i)));
  return out;
}

std::vector<Point2> convex_hull(std::span<const Point2> points) {
  std::vector<Point2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw DegenerateHull("convex hull needs at least 3 distinct points");

  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw DegenerateHull("all points are collinear");
  return hull;
}

double polygon_area(std::span<const Point2> polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % polygon.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

torch::Tensor rasterize_convex(std::span<const Point2> polygon, int height, int width) {
  auto mask = torch::zeros({height, width}, torch::kFloat32);
  auto acc = mask.accessor<float, 2>();
  const std::size_t n = polygon.size();
  for (int row = 0; row < height; ++row) {
    const double yc = row + 0.5;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = polygon[i];
      const auto& b = polygon[(i + 1) % n];
      if ((a.y <= yc) == (b.y <= yc)) continue;
      const double x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    if (!(lo < hi)) continue;
    const int first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
    const int last = std::min(width, static_cast<int>(std::ceil(hi - 0.5)));
    for (int col = first; col < last; ++col) acc[row][col] = 1.0F;
  }
  return mask;
}

RegionMask hull_mask(std::span<const Point2> points, int height, int width) {
  const auto hull = convex_hull(points);
  auto data = rasterize_convex(hull, height, width);
  auto acc = data.accessor<float, 2>();
  for (const auto& p : points) {
    const int col = std::clamp(static_cast<int>(std::floor(p.x)), 0, width - 1);
    const int row = std::clamp(static_cast<int>(std::floor(p.y)), 0, height - 1);
    acc[row][col] = 1.0F;
  }
  return {data, MaskKind::binary};
}

RegionMask lower_half_mask(const LandmarkSet& landmarks) {
  const auto pts = landmarks.subset(face::lower_half_indices());
  return hull_mask(pts, landmarks.frame_height(), landmarks.frame_width());
}

RegionMask full_face_mask(const LandmarkSet& landmarks) {
  return hull_mask(landmarks.points(), landmarks.frame_height(), landmarks.frame_width());
}

RegionMask smooth_mask(const RegionMask& mask, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidParameter("smoothing sigma must be positive");
  const int h = static_cast<int>(mask.height());
  const int w = static_cast<int>(mask.width());
  const int r = static_cast<int>(std::ceil(3.0 * sigma));

  std::vector<double> kernel(2 * r + 1);
  double total = 0.0;
  for (int d = -r; d <= r; ++d) {
    kernel[d + r] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += kernel[d + r];
  }
  for (auto& k : kernel) k /= total;

  auto src_t = mask.data.to(torch::kFloat64).contiguous();
  std::vector<double> src(src_t.data_ptr<double>(), src_t.data_ptr<double>() + src_t.numel());

  const auto blurred = blur_1d(blur_1d(src, h, w, kernel, true), h, w, kernel, false);
  const auto eroded = morph_1d(morph_1d(src, h, w, r, true, false), h, w, r, false, false);
  const auto dilated = morph_1d(morph_1d(src, h, w, r, true, true), h, w, r, false, true);

  auto out = torch::empty({h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      double v = std::clamp(blurred[i], 0.0, 1.0);
      if (eroded[i] >= 1.0) v = 1.0;
      if (dilated[i] <= 0.0) v = 0.0;
      acc[y][x] = static_cast<float>(v);
    }
  }
  return {out, MaskKind::smoothed};
}

double default_smoothing_sigma(int crop_height) { return 0.02 * crop_height; }

torch::Tensor paste_back(const torch::Tensor& generated_face, const torch::Tensor& source_frame,
                         const RegionMask& mask, const CropBox& box) {
  check_image(generated_face, "generated face");
  check_image(source_frame, "source frame");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > source_frame.size(2) || box.y1 > source_frame.size(1) ||
      box.width() <= 0 || box.height() <= 0) {
    throw ShapeError("crop box lies outside the source frame");
  }
  if (generated_face.size(1) != box.height() || generated_face.size(2) != box.width()) {
    throw ShapeError("generated face does not match the crop box size");
  }
  if (mask.height() != box.height() || mask.width() != box.width()) {
    throw ShapeError("mask does not match the generated face size");
  }
  using torch::indexing::Slice;
  auto out = source_frame.to(torch::kFloat32).clone();
  auto region = out.index({Slice(), Slice(box.y0, box.y1), Slice(box.x0, box.x1)});
  const auto m = mask.data.to(torch::kFloat32).unsqueeze(0);
  const auto blended = m * generated_face.to(torch::kFloat32) + (1.0F - m) * region;
  region.copy_(blended);
  return out;
}

torch::Tensor resize_image(const torch::Tensor& image, int out_h, int out_w) {
  namespace F = torch::nn::functional;
  return F::interpolate(image.unsqueeze(0), F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{out_h, out_w})
                                                .mode(torch::kBilinear)
                                                .align_corners(false))
      .squeeze(0);
}

CropResult crop_face(const torch::Tensor& frame, const LandmarkSet& landmarks, int out_h, int out_w,
                     double margin) {
  check_image(frame, "frame");
  if (out_h <= 0 || out_w <= 0 || out_h % 4 != 0 || out_w % 4 != 0) {
    throw InvalidParameter("crop output size must be positive and divisible by 4");
  }
  if (margin < 0.0) throw InvalidParameter("crop margin must be non-negative");
  const int fw = static_cast<int>(frame.size(2));
  const int fh = static_cast<int>(frame.size(1));

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& p : landmarks.points()) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double bw = max_x - min_x;
  const double bh = max_y - min_y;
  if (!(bw > 0.0) || !(bh > 0.0)) throw DegenerateCrop("landmark bounding box has zero extent");

  CropBox box;
  box.x0 = std::clamp(static_cast<int>(std::floor(min_x - margin * bw)), 0, fw);
  box.x1 = std::clamp(static_cast<int>(std::ceil(max_x + margin * bw)), 0, fw);
  box.y0 = std::clamp(static_cast<int>(std::floor(min_y - margin * bh)), 0, fh);
  box.y1 = std::clamp(static_cast<int>(std::ceil(max_y + margin * bh)), 0, fh);
  if (box.width() < 2 || box.height() < 2) throw DegenerateCrop("crop box is degenerate");

  using torch::indexing::Slice;
  const auto region = frame.index({Slice(), Slice(box.y0, box.y1), Slice(box.x0, box.x1)});
  CropTransform tf{box, static_cast<double>(out_w) / box.width(), static_cast<double>(out_h) / box.height()};

  std::vector<Point2> mapped;
  mapped.reserve(landmarks.points().size());
  for (const auto& p : landmarks.points()) mapped.push_back(tf.to_crop(p));

  return {resize_image(region.to(torch::kFloat32), out_h, out_w), tf,
          LandmarkSet::ingest(std::move(mapped), out_w, out_h)};
}

}  // namespace facedub
