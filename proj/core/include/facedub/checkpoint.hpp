#pragma once

// Single-file checkpoint: versioned header, config JSON, step counter, config
// hash and named float32 blobs. Everything little-endian:
//   "FDCK" u32 version | u64 json bytes, json | i64 step | u64 hash | u64 count
//   count x { u32 name bytes, name | u32 ndim | ndim x i64 dims | float32 data }

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace facedub {

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

struct CheckpointData {
  nlohmann::json config;
  int64_t step = 0;
  std::vector<NamedTensor> tensors;

  // Throws FormatError if `name` is absent.
  const torch::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const CheckpointData& data);
// Throws FormatError on bad magic, unknown version, truncation or hash mismatch.
CheckpointData read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Parameters and buffers of a module as "<prefix><name>" blobs.
std::vector<NamedTensor> module_tensors(const torch::nn::Module& module, const std::string& prefix);
// Copies blobs back into the module. Throws FormatError on missing names or shape mismatch.
void load_module_tensors(torch::nn::Module& module, const CheckpointData& data, const std::string& prefix);

// FNV-1a over the raw bytes of every parameter, in registration order.
uint64_t parameter_hash(const torch::nn::Module& module);

// Adam with moments kept as named tensors so optimizer state survives a
// checkpoint round trip bit-exactly.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1, double beta2,
       double eps = 1e-8);

  void zero_grad();
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  int64_t steps() const { return t_; }

  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const CheckpointData& data, const std::string& prefix);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace facedub
