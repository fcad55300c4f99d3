#include "cleanctg/reconstructor.hpp"

#include <cmath>

#include "cleanctg/blocks.hpp"

namespace cleanctg::recon {

using nc::Tensor;

void ReconstructorConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0)
    throw ValidationError("config", "heads must divide d_model exactly");
  if (mask_layers < 1 || denoise_layers < 1)
    throw ValidationError("config", "branch layer counts must be positive");
  if (mask_threshold <= 0.0 || mask_threshold >= 1.0)
    throw ValidationError("config", "mask threshold must be in (0,1)");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("config", "dropout must be in [0,1)");
}

nlohmann::json ReconstructorConfig::to_json() const {
  return nlohmann::json{{"d_model", d_model},         {"heads", heads},
                        {"mask_layers", mask_layers}, {"denoise_layers", denoise_layers},
                        {"ffn_dim", ffn_dim},         {"dropout", dropout},
                        {"mask_threshold", mask_threshold}};
}

ReconstructorConfig ReconstructorConfig::from_json(const nlohmann::json& j) {
  ReconstructorConfig cfg;
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.mask_layers = j.value("mask_layers", cfg.mask_layers);
  cfg.denoise_layers = j.value("denoise_layers", cfg.denoise_layers);
  cfg.ffn_dim = j.value("ffn_dim", cfg.ffn_dim);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.mask_threshold = j.value("mask_threshold", cfg.mask_threshold);
  cfg.validate();
  return cfg;
}

std::vector<double> PositionMask::binarized(double threshold) const {
  std::vector<double> out(soft.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = soft.data()[i] > threshold ? 1.0 : 0.0;
  return out;
}

namespace {

bool is_scaling_class(noise::ArtefactClass c) {
  return c == noise::ArtefactClass::Halving || c == noise::ArtefactClass::Doubling;
}

std::string branch_prefix(noise::ArtefactClass c) {
  const auto idx = static_cast<std::size_t>(c);
  return (is_scaling_class(c) ? std::string("reconstructor.mask") : std::string("reconstructor.den")) +
         std::to_string(idx);
}

}  // namespace

Reconstructor::Reconstructor(ReconstructorConfig cfg, nc::ModelState& state, Rng& init_rng)
    : cfg_(cfg), state_(&state) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto ffn = static_cast<std::size_t>(cfg_.ffn_dim);
  const std::size_t in_dim = d + 2;  // fused features + value and missing channels

  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    const auto cls = static_cast<noise::ArtefactClass>(c);
    const std::string p = branch_prefix(cls);
    const int layers = is_scaling_class(cls) ? cfg_.mask_layers : cfg_.denoise_layers;
    state.param(p + ".in.w", {in_dim, d}, 1.0 / std::sqrt(static_cast<double>(in_dim)), init_rng);
    state.param(p + ".in.b", {d}, 0.0, init_rng);
    for (int l = 0; l < layers; ++l)
      nc::register_encoder_layer(state, p + ".enc" + std::to_string(l), d, ffn, init_rng);
    state.param(p + ".out.w", {d, 1}, 1.0 / std::sqrt(static_cast<double>(d)), init_rng);
    state.param(p + ".out.b", {1}, 0.0, init_rng);
  }

  state.param("reconstructor.fuse.w", {d + kBranchCount, kBranchCount},
              1.0 / std::sqrt(static_cast<double>(d + kBranchCount)), init_rng);
  state.param("reconstructor.fuse.b", {kBranchCount}, 0.0, init_rng);
}

Reconstructor::Reconstructor(ReconstructorConfig cfg, const nc::ModelState& state)
    : cfg_(cfg), state_(&state) {
  cfg_.validate();
  if (state.find("reconstructor.fuse.w") == nullptr)
    throw ValidationError("checkpoint", "state holds no reconstructor parameters");
}

Tensor Reconstructor::branch_tokens(const Tensor& x, const Tensor& missing_mask,
                                    const Tensor& fused, const std::string& p, int layers,
                                    bool training, Rng* rng) const {
  const std::size_t n = x.size();
  const std::vector<Tensor> channels{nc::reshape(x, {n, 1}), nc::reshape(missing_mask, {n, 1}),
                                     fused};
  Tensor tokens = nc::add(nc::matmul(nc::concat(channels, 1), state_->at(p + ".in.w")),
                          state_->at(p + ".in.b"));
  for (int l = 0; l < layers; ++l)
    tokens = nc::encoder_layer(*state_, p + ".enc" + std::to_string(l), tokens,
                               static_cast<std::size_t>(cfg_.heads), cfg_.dropout, training, rng);
  return tokens;
}

PositionMask Reconstructor::predict_mask(const Tensor& x, const Tensor& missing_mask,
                                         const Tensor& fused, noise::ArtefactClass c,
                                         bool training, Rng* rng) const {
  if (!is_scaling_class(c))
    throw ValidationError("config", "position masks exist for halving/doubling only");
  const std::string p = branch_prefix(c);
  const Tensor tokens = branch_tokens(x, missing_mask, fused, p, cfg_.mask_layers, training, rng);
  const Tensor logits = nc::add(nc::matmul(tokens, state_->at(p + ".out.w")),
                                state_->at(p + ".out.b"));
  return {nc::reshape(nc::sigmoid(logits), {x.size()})};
}

Tensor Reconstructor::math_correct(const Tensor& x, const Tensor& mask, double factor) {
  // (1 - M) + M*f == 1 + M*(f - 1)
  return nc::mul(x, nc::add_scalar(nc::scale(mask, factor - 1.0), 1.0));
}

Tensor Reconstructor::transformer_denoise(const Tensor& x, const Tensor& missing_mask,
                                          const Tensor& fused, noise::ArtefactClass c,
                                          bool training, Rng* rng) const {
  if (is_scaling_class(c))
    throw ValidationError("config", "scaling artefacts use math correction, not denoisers");
  const std::string p = branch_prefix(c);
  const Tensor tokens =
      branch_tokens(x, missing_mask, fused, p, cfg_.denoise_layers, training, rng);
  const Tensor logits = nc::add(nc::matmul(tokens, state_->at(p + ".out.w")),
                                state_->at(p + ".out.b"));
  return nc::reshape(nc::sigmoid(logits), {x.size()});
}

Tensor Reconstructor::gate_combine(const Tensor& x, const Tensor& x_hat, bool gate) {
  const double g = gate ? 1.0 : 0.0;
  return nc::add(nc::scale(x_hat, g), nc::scale(x, 1.0 - g));
}

Tensor Reconstructor::fuse(const Tensor& x,
                           const std::array<Tensor, noise::kClassCount>& branches,
                           const Tensor& fused, Tensor* weights_out) const {
  const std::size_t n = x.size();
  std::vector<Tensor> cols;
  cols.reserve(kBranchCount);
  cols.push_back(nc::reshape(x, {n, 1}));  // original signal is branch 0
  for (const auto& b : branches) cols.push_back(nc::reshape(b, {n, 1}));
  const Tensor candidates = nc::concat(cols, 1);  // [60, 6]

  const std::vector<Tensor> scorer_in{fused, candidates};
  const Tensor scores = nc::add(nc::matmul(nc::concat(scorer_in, 1),
                                           state_->at("reconstructor.fuse.w")),
                                state_->at("reconstructor.fuse.b"));
  const Tensor weights = nc::softmax(scores, 1);  // [60, 6]
  if (weights_out) *weights_out = weights;

  // x + sum_b A_tb * (cand_tb - x_t): convex combination that reproduces x
  // bit-exactly when every candidate equals x.
  const Tensor deltas = nc::sub(candidates, nc::broadcast_col(x, kBranchCount));
  return nc::add(x, nc::sum_axis(nc::mul(weights, deltas), 1));
}

ReconstructionOutput Reconstructor::forward(const signal::NormalizedSegment& seg1,
                                            const Tensor& fused,
                                            const std::array<bool, noise::kClassCount>& gates,
                                            bool training, Rng* rng) const {
  if (seg1.values.size() != signal::kMinuteSamples)
    throw ValidationError("shape", "reconstructor expects a 60-sample segment");
  const Tensor x = Tensor::from_vector(seg1.values);
  const Tensor missing = Tensor::from_vector(seg1.missing_mask);

  ReconstructionOutput out;
  out.mask_halving = predict_mask(x, missing, fused, noise::ArtefactClass::Halving, training, rng).soft;
  out.mask_doubling =
      predict_mask(x, missing, fused, noise::ArtefactClass::Doubling, training, rng).soft;

  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    const auto cls = static_cast<noise::ArtefactClass>(c);
    if (!gates[c]) {
      out.branch[c] = x;  // gate off: candidate is the untouched signal
      continue;
    }
    Tensor corrected;
    if (is_scaling_class(cls)) {
      const double factor = cls == noise::ArtefactClass::Halving ? 2.0 : 0.5;
      Tensor mask = cls == noise::ArtefactClass::Halving ? out.mask_halving : out.mask_doubling;
      if (!training) {
        // Soft-train / hard-infer: exact multiplication on the binarized mask.
        const auto hard = PositionMask{mask}.binarized(cfg_.mask_threshold);
        mask = Tensor::from_vector(hard);
      }
      corrected = math_correct(x, mask, factor);
    } else {
      corrected = transformer_denoise(x, missing, fused, cls, training, rng);
    }
    out.branch[c] = gate_combine(x, corrected, true);
  }

  out.cleaned = fuse(x, out.branch, fused, &out.fusion_weights);
  return out;
}

signal::NormalizedSegment Reconstructor::reconstruct(const signal::NormalizedSegment& seg1,
                                                     const detect::DetectionResult& detection,
                                                     ReconstructionOutput* details) const {
  nc::NoGradGuard ng;
  ReconstructionOutput out = forward(seg1, detection.fused, detection.gates, false, nullptr);
  signal::NormalizedSegment cleaned;
  cleaned.values = out.cleaned.data();
  cleaned.missing_mask.assign(cleaned.values.size(), 0.0);
  if (details) *details = std::move(out);
  return cleaned;
}

}  // namespace cleanctg::recon
