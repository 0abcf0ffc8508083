#include "facedub/face_layout.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace facedub::face {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<int, 7> kRingCounts = {20, 28, 36, 42, 48, 52, 52};
constexpr std::array<double, 7> kRingRadii = {0.22, 0.33, 0.44, 0.55, 0.66, 0.77, 0.88};

void push_ellipse(std::vector<Point2>& out, int count, Point2 center, double a, double b) {
  for (int k = 0; k < count; ++k) {
    const double t = 2.0 * kPi * k / count;
    out.push_back({center.x + a * std::cos(t), center.y + b * std::sin(t)});
  }
}

}  // namespace

double outer_lip_half_height(double opening) { return 0.07 + 0.07 * opening; }
double inner_lip_half_height(double opening) { return 0.005 + 0.09 * opening; }
double eye_half_height(double blink) { return 0.005 + 0.07 * (1.0 - blink); }

std::vector<Point2> layout(const FaceShape& shape, double mouth_opening, double blink) {
  std::vector<Point2> pts;
  pts.reserve(LandmarkSet::kCount);

  pts.push_back({0.0, -0.9 * kHeadAspect});
  pts.push_back({0.0, kNoseTipV});
  push_ellipse(pts, kOvalCount, {0.0, 0.0}, 0.98, 0.98 * kHeadAspect);

  const Point2 mouth{0.0, kMouthCenterV};
  push_ellipse(pts, kLipCount, mouth, shape.mouth_width, outer_lip_half_height(mouth_opening));
  push_ellipse(pts, kLipCount, mouth, 0.75 * shape.mouth_width, inner_lip_half_height(mouth_opening));

  for (double side : {-1.0, 1.0}) {
    push_ellipse(pts, kEyeCount, {side * shape.eye_spacing, -0.2}, 0.15, eye_half_height(blink));
  }
  for (double side : {-1.0, 1.0}) {
    const double cu = side * shape.eye_spacing;
    for (int k = 0; k < kBrowCount; ++k) {
      const double s = -1.0 + 2.0 * k / (kBrowCount - 1);
      pts.push_back({cu + 0.17 * s, -0.36 - 0.04 * (1.0 - s * s)});
    }
  }

  for (int k = 0; k < 8; ++k) pts.push_back({0.0, -0.2 + 0.04 * k});
  for (double side : {-1.0, 1.0}) {
    for (int k = 0; k < 6; ++k) {
      const double t = 2.0 * kPi * k / 6;
      pts.push_back({side * 0.08 + 0.04 * std::cos(t), 0.11 + 0.03 * std::sin(t)});
    }
  }

  for (std::size_t ring = 0; ring < kRingCounts.size(); ++ring) {
    const int n = kRingCounts[ring];
    const double r = kRingRadii[ring];
    const double offset = (ring % 2 == 0) ? 0.5 : 0.0;
    for (int k = 0; k < n; ++k) {
      const double t = 2.0 * kPi * (k + offset) / n;
      pts.push_back({r * std::cos(t), r * kHeadAspect * std::sin(t)});
    }
  }
  return pts;
}

const std::vector<int>& lower_half_indices() {
  static const std::vector<int> indices = [] {
    const auto canonical = layout(FaceShape{}, 0.5, 0.0);
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(canonical.size()); ++i) {
      if (canonical[i].y >= canonical[kNoseTip].y) out.push_back(i);
    }
    return out;
  }();
  return indices;
}

}  // namespace facedub::face
