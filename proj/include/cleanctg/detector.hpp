#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "cleanctg/model.hpp"
#include "cleanctg/noise.hpp"
#include "cleanctg/signal.hpp"
#include "cleanctg/tensor.hpp"

namespace cleanctg::detect {

struct DetectorConfig {
  std::vector<int> local_kernels{3, 5, 7};
  std::vector<int> context_kernels{9, 15, 31};
  int channels = 32;  // per kernel, concatenated then projected
  int d_model = 64;
  int heads = 4;
  int encoder_layers = 2;  // per scale
  int ffn_dim = 128;
  int context_stride = 10;  // 600 -> 60 context tokens
  int class_count = 5;
  double gate_threshold = 0.5;
  double dropout = 0.1;

  int context_tokens() const {
    return static_cast<int>(signal::kSegmentSamples) / context_stride;
  }
  void validate() const;

  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

// Pre-encoder token sequences for both scales, [tokens, d_model] each.
struct FeatureTokens {
  nc::Tensor local;    // [60, d_model]
  nc::Tensor context;  // [T_c, d_model]
};

struct DetectionResult {
  std::array<double, noise::kClassCount> probs{};
  std::array<bool, noise::kClassCount> gates{};
  nc::Tensor class_vectors;  // [5, d_model]
  nc::Tensor fused;          // [60, d_model] cross-attended features
};

// Full differentiable forward products (training path).
struct DetectorForward {
  nc::Tensor probs;          // [5]
  nc::Tensor fused;          // [60, d_model]
  nc::Tensor class_vectors;  // [5, d_model]
  nc::Tensor pool_weights;   // [5, 60], rows on the simplex
};

// Steps 1-5: dual-scale convolutional features, twin encoders, cross-attention
// fusion, class-specific pooling and per-class sigmoid heads.
class Detector {
 public:
  Detector(DetectorConfig cfg, nc::ModelState& state, Rng& init_rng);
  // Binds to parameters already present in the state (loaded checkpoint).
  Detector(DetectorConfig cfg, const nc::ModelState& state);

  const DetectorConfig& config() const { return cfg_; }

  FeatureTokens extract_features(const signal::NormalizedSegment& seg1,
                                 const signal::NormalizedSegment& seg10,
                                 std::size_t minute_offset) const;
  FeatureTokens encode(const FeatureTokens& tokens, bool training = false,
                       Rng* dropout_rng = nullptr) const;
  nc::Tensor cross_attend(const FeatureTokens& encoded, bool training = false,
                          Rng* dropout_rng = nullptr) const;
  std::pair<nc::Tensor, nc::Tensor> class_pool(const nc::Tensor& fused) const;
  nc::Tensor classify(const nc::Tensor& class_vectors) const;

  DetectorForward forward(const signal::NormalizedSegment& seg1,
                          const signal::NormalizedSegment& seg10, std::size_t minute_offset,
                          bool training = false, Rng* dropout_rng = nullptr) const;

  // Inference composition: no graph, gates at the configured threshold.
  DetectionResult detect(const signal::NormalizedSegment& seg1,
                         const signal::NormalizedSegment& seg10,
                         std::size_t minute_offset) const;

  static std::array<bool, noise::kClassCount> apply_gates(
      const std::array<double, noise::kClassCount>& probs, double threshold);

 private:
  nc::Tensor conv_stack(const nc::Tensor& input, const std::vector<int>& kernels,
                        const std::string& prefix) const;

  DetectorConfig cfg_;
  const nc::ModelState* state_;
};

}  // namespace cleanctg::detect
