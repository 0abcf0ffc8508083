#include "facedub/image_io.hpp"

#include <cstdio>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "facedub/errors.hpp"

namespace facedub {
namespace {

torch::Tensor to_u8(const torch::Tensor& t) {
  return t.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).contiguous();
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw FormatError("failed to write " + path.string());
}

}  // namespace

torch::Tensor read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot read image " + path.string());
  auto hwc = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8).clone();
  // BGR -> RGB, HWC -> CHW
  return hwc.flip({2}).permute({2, 0, 1}).contiguous().to(torch::kFloat32).div(255.0);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("write_png expects 3 x H x W");
  auto hwc = to_u8(image).permute({1, 2, 0}).flip({2}).contiguous();
  cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  write_mat(path, mat);
}

void write_gray_png(const std::filesystem::path& path, const torch::Tensor& gray) {
  if (gray.dim() != 2) throw ShapeError("write_gray_png expects H x W");
  auto u8 = to_u8(gray);
  cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr<uint8_t>());
  write_mat(path, mat);
}

void write_normalized_png(const std::filesystem::path& path, const torch::Tensor& map) {
  auto m = map.detach().to(torch::kFloat32);
  const double lo = m.min().item<double>();
  const double hi = m.max().item<double>();
  write_gray_png(path, hi > lo ? (m - lo) / (hi - lo) : torch::zeros_like(m));
}

std::string frame_name(int index, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d%s", index, extension);
  return buf;
}

}  // namespace facedub
