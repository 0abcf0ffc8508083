#include "facedub/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "facedub/config.hpp"
#include "facedub/errors.hpp"

namespace facedub {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_value(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated checkpoint");
  return v;
}

std::string get_string(std::istream& in, uint64_t n) {
  if (n > (1ULL << 32)) throw FormatError("implausible string length in checkpoint");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated checkpoint");
  return s;
}

uint64_t fnv1a(const void* data, std::size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

const torch::Tensor& CheckpointData::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool CheckpointData::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_checkpoint(std::ostream& out, const CheckpointData& data) {
  out.write(kMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  const auto js = data.config.dump();
  put<uint64_t>(out, js.size());
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  put<int64_t>(out, data.step);
  put<uint64_t>(out, config_hash(data.config));
  put<uint64_t>(out, data.tensors.size());
  for (const auto& nt : data.tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    const auto t = nt.value.detach().to(torch::kFloat32).contiguous();
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

CheckpointData read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = get_value<uint32_t>(in);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData data;
  const auto js = get_string(in, get_value<uint64_t>(in));
  try {
    data.config = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what());
  }
  data.step = get_value<int64_t>(in);
  const auto hash = get_value<uint64_t>(in);
  if (hash != config_hash(data.config)) throw FormatError("checkpoint config hash mismatch");
  const auto count = get_value<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = get_string(in, get_value<uint32_t>(in));
    const auto ndim = get_value<uint32_t>(in);
    if (ndim > 8) throw FormatError("implausible tensor rank in checkpoint");
    std::vector<int64_t> dims;
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      dims.push_back(get_value<int64_t>(in));
      if (dims.back() < 0) throw FormatError("negative tensor dimension in checkpoint");
      numel *= dims.back();
    }
    nt.value = torch::empty(dims, torch::kFloat32);
    if (numel > 0 && !in.read(reinterpret_cast<char*>(nt.value.data_ptr<float>()), numel * 4)) {
      throw FormatError("truncated checkpoint tensor '" + nt.name + "'");
    }
    data.tensors.push_back(std::move(nt));
  }
  return data;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot open " + tmp + " for writing");
    write_checkpoint(out, data);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::vector<NamedTensor> module_tensors(const torch::nn::Module& module, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : module.named_parameters()) out.push_back({prefix + p.key(), p.value()});
  for (const auto& b : module.named_buffers()) out.push_back({prefix + b.key(), b.value()});
  return out;
}

void load_module_tensors(torch::nn::Module& module, const CheckpointData& data, const std::string& prefix) {
  torch::NoGradGuard guard;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    const auto& src = data.get(prefix + name);
    if (src.sizes() != dst.sizes()) throw FormatError("shape mismatch for '" + prefix + name + "'");
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters()) copy(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy(b.key(), b.value());
}

uint64_t parameter_hash(const torch::nn::Module& module) {
  uint64_t h = 14695981039346656037ULL;
  for (const auto& p : module.parameters()) {
    const auto t = p.detach().to(torch::kFloat32).contiguous();
    h = fnv1a(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * 4, h);
  }
  return h;
}

Adam::Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p.second));
    v_.push_back(torch::zeros_like(p.second));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.second.grad().defined()) p.second.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v_[i] / bc2).sqrt_().add_(eps_);
    p.addcdiv_(m_[i], denom, -lr_ / bc1);
  }
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.push_back({prefix + "t", torch::tensor({static_cast<float>(t_)})});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({prefix + "m/" + params_[i].first, m_[i]});
    out.push_back({prefix + "v/" + params_[i].first, v_[i]});
  }
  return out;
}

void Adam::load_state(const CheckpointData& data, const std::string& prefix) {
  t_ = static_cast<int64_t>(std::llround(data.get(prefix + "t").item<double>()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& m = data.get(prefix + "m/" + params_[i].first);
    const auto& v = data.get(prefix + "v/" + params_[i].first);
    if (m.sizes() != m_[i].sizes() || v.sizes() != v_[i].sizes()) {
      throw FormatError("optimizer state shape mismatch for '" + params_[i].first + "'");
    }
    m_[i].copy_(m);
    v_[i].copy_(v);
  }
}

}  // namespace facedub
