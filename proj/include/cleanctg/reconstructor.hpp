#pragma once

#include <array>

#include <json.hpp>

#include "cleanctg/detector.hpp"
#include "cleanctg/model.hpp"
#include "cleanctg/noise.hpp"
#include "cleanctg/signal.hpp"
#include "cleanctg/tensor.hpp"

namespace cleanctg::recon {

inline constexpr std::size_t kBranchCount = noise::kClassCount + 1;  // + original

struct ReconstructorConfig {
  int d_model = 64;  // must match the detector
  int heads = 4;
  int mask_layers = 2;     // attention layers in halving/doubling mask heads
  int denoise_layers = 2;  // encoder layers in mhr/missing/spike denoisers
  int ffn_dim = 128;
  double dropout = 0.1;
  double mask_threshold = 0.5;  // binarized view of soft position masks

  void validate() const;
  nlohmann::json to_json() const;
  static ReconstructorConfig from_json(const nlohmann::json& j);
};

// Per-timepoint soft mask for a scaling artefact, with its binarized view.
struct PositionMask {
  nc::Tensor soft;  // [60] in [0,1]
  std::vector<double> binarized(double threshold) const;
};

struct ReconstructionOutput {
  nc::Tensor cleaned;                                 // [60]
  nc::Tensor mask_halving;                            // [60] soft
  nc::Tensor mask_doubling;                           // [60] soft
  nc::Tensor fusion_weights;                          // [60, 6], rows on the simplex
  std::array<nc::Tensor, noise::kClassCount> branch;  // gated candidates x_rec,c
};

// Steps 6-7: gated artefact-specific correction branches and position-wise
// fusion over {original + 5 branch candidates}.
class Reconstructor {
 public:
  Reconstructor(ReconstructorConfig cfg, nc::ModelState& state, Rng& init_rng);
  Reconstructor(ReconstructorConfig cfg, const nc::ModelState& state);  // bind to loaded params

  const ReconstructorConfig& config() const { return cfg_; }

  // Attention layers over the fused tokens followed by a per-position sigmoid.
  PositionMask predict_mask(const nc::Tensor& x, const nc::Tensor& missing_mask,
                            const nc::Tensor& fused, noise::ArtefactClass c,
                            bool training = false, Rng* rng = nullptr) const;

  // x_hat_t = x_t * ((1 - M_t) + M_t * f): exact multiplication under a
  // binary mask, soft interpolation during training.
  static nc::Tensor math_correct(const nc::Tensor& x, const nc::Tensor& mask, double factor);

  nc::Tensor transformer_denoise(const nc::Tensor& x, const nc::Tensor& missing_mask,
                                 const nc::Tensor& fused, noise::ArtefactClass c,
                                 bool training = false, Rng* rng = nullptr) const;

  // X_rec,c = x_hat_c * g + x * (1 - g); bit-exact identity when g == 0.
  static nc::Tensor gate_combine(const nc::Tensor& x, const nc::Tensor& x_hat, bool gate);

  // Position-wise convex fusion; the original signal is branch 0 (implicit
  // skip connection). Output_t deviates from x_t only through the weighted
  // candidate differences, so identical candidates reproduce x bit-exactly.
  nc::Tensor fuse(const nc::Tensor& x, const std::array<nc::Tensor, noise::kClassCount>& branches,
                  const nc::Tensor& fused, nc::Tensor* weights_out = nullptr) const;

  ReconstructionOutput forward(const signal::NormalizedSegment& seg1, const nc::Tensor& fused,
                               const std::array<bool, noise::kClassCount>& gates,
                               bool training = false, Rng* rng = nullptr) const;

  // Two-stage contract: detector output feeds the reconstructor.
  signal::NormalizedSegment reconstruct(const signal::NormalizedSegment& seg1,
                                        const detect::DetectionResult& detection,
                                        ReconstructionOutput* details = nullptr) const;

 private:
  nc::Tensor branch_tokens(const nc::Tensor& x, const nc::Tensor& missing_mask,
                           const nc::Tensor& fused, const std::string& prefix, int layers,
                           bool training, Rng* rng) const;

  ReconstructorConfig cfg_;
  const nc::ModelState* state_;
};

}  // namespace cleanctg::recon
