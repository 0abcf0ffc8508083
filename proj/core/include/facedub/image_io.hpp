#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace facedub {

// 8-bit RGB PNG -> 3 x H x W float32 in [0, 1].
torch::Tensor read_png(const std::filesystem::path& path);

// 3 x H x W float tensor in [0, 1] -> 8-bit RGB PNG, value = round(255 v).
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// H x W tensor in [0, 1] -> 8-bit grayscale PNG, value = round(255 v).
void write_gray_png(const std::filesystem::path& path, const torch::Tensor& gray);

// Min-max normalises an H x W map and writes it as grayscale; a constant map
// is written as black.
void write_normalized_png(const std::filesystem::path& path, const torch::Tensor& map);

// Zero-padded frame file name, e.g. 000042.png.
std::string frame_name(int index, const char* extension = ".png");

}  // namespace facedub
