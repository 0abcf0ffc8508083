#pragma once

// Canonical 468-point landmark indexing shared by the synthetic renderer and
// the mask builders. Coordinates are face-normalised: origin at the face
// centre, u to the right, v downward, head ellipse of semi-axes (1, kHeadAspect).

#include <vector>

#include "facedub/geometry.hpp"

namespace facedub::face {

inline constexpr int kForehead = 0;
inline constexpr int kNoseTip = 1;
inline constexpr int kOvalBegin = 2;
inline constexpr int kOvalCount = 36;
inline constexpr int kOuterLipBegin = 38;
inline constexpr int kLipCount = 40;
inline constexpr int kInnerLipBegin = 78;
inline constexpr int kLeftEyeBegin = 118;
inline constexpr int kRightEyeBegin = 134;
inline constexpr int kEyeCount = 16;
inline constexpr int kLeftBrowBegin = 150;
inline constexpr int kRightBrowBegin = 160;
inline constexpr int kBrowCount = 10;
inline constexpr int kNoseBegin = 170;
inline constexpr int kNoseCount = 20;
inline constexpr int kInteriorBegin = 190;

// Outer-lip samples start at angle 0, so the right corner comes first and the
// left corner sits half way round. Neither moves with the mouth opening.
inline constexpr int kMouthRightCorner = kOuterLipBegin;
inline constexpr int kMouthLeftCorner = kOuterLipBegin + kLipCount / 2;

inline constexpr double kHeadAspect = 1.25;
inline constexpr double kNoseTipV = 0.15;
inline constexpr double kMouthCenterV = 0.55;

struct FaceShape {
  double eye_spacing = 0.38;  // |u| of each eye centre
  double mouth_width = 0.32;  // outer-lip half width
};

// Outer-lip half height for a given opening in [0, 1].
double outer_lip_half_height(double opening);
// Mouth cavity (inner lip) half height for a given opening in [0, 1].
double inner_lip_half_height(double opening);
// Eye half height for a blink amount in [0, 1] (1 = closed).
double eye_half_height(double blink);

// All 468 points for the given expression, in face-normalised coordinates.
std::vector<Point2> layout(const FaceShape& shape, double mouth_opening, double blink);

// Landmarks at or below the nose tip in the canonical layout (opening 0.5,
// eyes open). Computed once and frozen for the process lifetime.
const std::vector<int>& lower_half_indices();

}  // namespace facedub::face
