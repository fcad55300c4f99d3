#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cleanctg/tensor.hpp"

namespace cleanctg::nc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named-parameter store. Names keep insertion order for deterministic
// serialization and optimizer walks. Frozen groups receive zero updates.
class ModelState {
 public:
  // Get-or-create a leaf parameter (requires_grad on). On creation, values
  // are drawn N(0, init_sd), or set to init_fill when init_sd == 0. Existing
  // parameters (e.g. from a loaded checkpoint) are returned untouched.
  Tensor& param(const std::string& name, const Shape& shape, double init_sd, Rng& rng,
                double init_fill = 0.0);

  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t parameter_count() const;

  void freeze_prefix(const std::string& prefix);
  bool frozen(const std::string& name) const;
  const std::vector<std::string>& frozen_prefixes() const { return frozen_prefixes_; }

  void zero_grad();

  std::uint32_t version = kCheckpointVersion;

  // Order-insensitive content hash of all parameter values (bit patterns).
  std::uint64_t content_hash() const;

 private:
  std::map<std::string, Tensor> params_;
  std::vector<std::string> order_;
  std::vector<std::string> frozen_prefixes_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over the unfrozen parameters of a ModelState.
// Gradients are read from each parameter tensor's grad buffer and cleared
// after the step.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const AdamConfig& cfg);
  void step(ModelState& state);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Checkpoint: magic "CCTG", u32 version, u32 tensor count, then per tensor
// name length + UTF-8 name, u8 dtype (0 = f64), u8 rank, u32 dims,
// little-endian raw values. A JSON manifest sidecar (<path>.json) carries the
// architecture config and frozen groups.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path,
                     const nlohmann::json& manifest);
ModelState load_checkpoint(const std::filesystem::path& path,
                           nlohmann::json* manifest_out = nullptr);

}  // namespace cleanctg::nc
