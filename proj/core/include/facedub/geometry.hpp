#pragma once

// Landmark-driven masks, convex hulls, mask feathering, compositing and
// face-region cropping.
//
// Coordinate convention: continuous pixel coordinates where pixel (i, j)
// covers [i, i+1) x [j, j+1) and its center sits at (i + 0.5, j + 0.5).
// Images are float32 tensors laid out C x H x W; masks are H x W.

#include <span>
#include <vector>

#include <torch/torch.h>

namespace facedub {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// 468 facial points of one frame, clamped into the frame on ingestion.
class LandmarkSet {
 public:
  static constexpr int kCount = 468;

  LandmarkSet() = default;

  // Validates the count and clamps every point into [0, width) x [0, height).
  // Throws InvalidParameter on a wrong count or non-positive frame size.
  static LandmarkSet ingest(std::vector<Point2> points, int frame_width, int frame_height);

  const std::vector<Point2>& points() const noexcept { return points_; }
  const Point2& operator[](std::size_t i) const { return points_.at(i); }
  int frame_width() const noexcept { return frame_width_; }
  int frame_height() const noexcept { return frame_height_; }
  // Number of coordinates that had to be clamped during ingestion.
  int clamp_count() const noexcept { return clamp_count_; }

  std::vector<Point2> subset(std::span<const int> indices) const;

 private:
  std::vector<Point2> points_;
  int frame_width_ = 0;
  int frame_height_ = 0;
  int clamp_count_ = 0;
};

enum class MaskKind { binary, smoothed };

struct RegionMask {
  torch::Tensor data;  // H x W float32 in [0, 1]
  MaskKind kind = MaskKind::binary;

  int64_t height() const { return data.size(0); }
  int64_t width() const { return data.size(1); }
  double area() const { return data.sum().item<double>(); }
};

// Half-open integer rectangle [x0, x1) x [y0, y1) in frame pixels.
struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const CropBox&, const CropBox&) = default;
};

// Per-axis affine map between frame coordinates and crop coordinates.
struct CropTransform {
  CropBox box;
  double scale_x = 1.0;
  double scale_y = 1.0;

  Point2 to_crop(Point2 p) const { return {(p.x - box.x0) * scale_x, (p.y - box.y0) * scale_y}; }
  Point2 to_frame(Point2 p) const { return {p.x / scale_x + box.x0, p.y / scale_y + box.y0}; }
};

struct CropResult {
  torch::Tensor image;  // 3 x out_h x out_w
  CropTransform transform;
  LandmarkSet landmarks;  // in crop coordinates
};

// Andrew's monotone chain. Returns the strictly convex hull in counter-clockwise
// order (positive shoelace area), starting at the lexicographically smallest
// vertex. Collinear boundary points are dropped. Throws DegenerateHull for
// fewer than 3 distinct points or an all-collinear input.
std::vector<Point2> convex_hull(std::span<const Point2> points);

// Signed shoelace area; positive for counter-clockwise polygons.
double polygon_area(std::span<const Point2> polygon);

// Sets every pixel whose center lies inside the convex polygon. Scanline
// crossings use the half-open rule (an edge owns its lower endpoint).
torch::Tensor rasterize_convex(std::span<const Point2> polygon, int height, int width);

// Binary mask of the hull of `points`. Pixels containing one of the points are
// also set so every input point is covered.
RegionMask hull_mask(std::span<const Point2> points, int height, int width);

RegionMask lower_half_mask(const LandmarkSet& landmarks);
RegionMask full_face_mask(const LandmarkSet& landmarks);

// Separable Gaussian feathering (kernel truncated at radius ceil(3 sigma),
// replicate border). Pixels whose square neighbourhood of that radius is all
// foreground are pinned to 1, pixels with no foreground in it are pinned to 0.
RegionMask smooth_mask(const RegionMask& mask, double sigma);

// Feathering sigma used when none is configured: 2% of the crop height.
double default_smoothing_sigma(int crop_height);

// out = m * generated + (1 - m) * source inside `box`, source elsewhere.
torch::Tensor paste_back(const torch::Tensor& generated_face, const torch::Tensor& source_frame,
                         const RegionMask& mask, const CropBox& box);

inline constexpr double kDefaultCropMargin = 0.10;

// Crops the landmark bounding box (grown by `margin` of its size per side and
// clamped to the frame) and resizes it bilinearly to out_h x out_w.
CropResult crop_face(const torch::Tensor& frame, const LandmarkSet& landmarks, int out_h, int out_w,
                     double margin = kDefaultCropMargin);

// Bilinear resize of a C x H x W image (align_corners = false).
torch::Tensor resize_image(const torch::Tensor& image, int out_h, int out_w);

}  // namespace facedub
