#include "cleanctg/detector.hpp"

#include "cleanctg/blocks.hpp"

#include <cmath>

namespace cleanctg::detect {

using nc::Tensor;

void DetectorConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0)
    throw ValidationError("config", "heads must divide d_model exactly");
  if (gate_threshold <= 0.0 || gate_threshold >= 1.0)
    throw ValidationError("config", "gate threshold must be in (0,1)");
  if (local_kernels.empty() || context_kernels.empty())
    throw ValidationError("config", "kernel lists must be non-empty");
  for (int k : local_kernels)
    if (k < 1 || k % 2 == 0) throw ValidationError("config", "kernels must be odd and positive");
  for (int k : context_kernels)
    if (k < 1 || k % 2 == 0) throw ValidationError("config", "kernels must be odd and positive");
  if (static_cast<int>(signal::kSegmentSamples) % context_stride != 0)
    throw ValidationError("config", "context_stride must divide 600");
  if (class_count != static_cast<int>(noise::kClassCount))
    throw ValidationError("config", "class_count is fixed at 5");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("config", "dropout must be in [0,1)");
}

nlohmann::json DetectorConfig::to_json() const {
  return nlohmann::json{{"local_kernels", local_kernels},
                        {"context_kernels", context_kernels},
                        {"channels", channels},
                        {"d_model", d_model},
                        {"heads", heads},
                        {"encoder_layers", encoder_layers},
                        {"ffn_dim", ffn_dim},
                        {"context_stride", context_stride},
                        {"class_count", class_count},
                        {"gate_threshold", gate_threshold},
                        {"dropout", dropout}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
  DetectorConfig cfg;
  cfg.local_kernels = j.value("local_kernels", cfg.local_kernels);
  cfg.context_kernels = j.value("context_kernels", cfg.context_kernels);
  cfg.channels = j.value("channels", cfg.channels);
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.encoder_layers = j.value("encoder_layers", cfg.encoder_layers);
  cfg.ffn_dim = j.value("ffn_dim", cfg.ffn_dim);
  cfg.context_stride = j.value("context_stride", cfg.context_stride);
  cfg.class_count = j.value("class_count", cfg.class_count);
  cfg.gate_threshold = j.value("gate_threshold", cfg.gate_threshold);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.validate();
  return cfg;
}

namespace {

Tensor two_channel_input(const signal::NormalizedSegment& seg) {
  std::vector<double> data;
  data.reserve(seg.values.size() * 2);
  data.insert(data.end(), seg.values.begin(), seg.values.end());
  data.insert(data.end(), seg.missing_mask.begin(), seg.missing_mask.end());
  return Tensor({2, seg.values.size()}, std::move(data));
}

Tensor maybe_dropout(const Tensor& x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0 || rng == nullptr) return x;
  return nc::dropout(x, rate, *rng);
}

}  // namespace

Detector::Detector(DetectorConfig cfg, nc::ModelState& state, Rng& init_rng)
    : cfg_(std::move(cfg)), state_(&state) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto ch = static_cast<std::size_t>(cfg_.channels);
  const auto ffn = static_cast<std::size_t>(cfg_.ffn_dim);
  const auto tc = static_cast<std::size_t>(cfg_.context_tokens());
  const double d_sd = 1.0 / std::sqrt(static_cast<double>(d));

  auto scale_params = [&](const std::string& scope, const std::vector<int>& kernels,
                          std::size_t tokens) {
    for (int k : kernels) {
      const auto ks = static_cast<std::size_t>(k);
      state.param(scope + ".conv.k" + std::to_string(k) + ".w", {ch, 2, ks},
                  1.0 / std::sqrt(2.0 * static_cast<double>(k)), init_rng);
      state.param(scope + ".conv.k" + std::to_string(k) + ".b", {ch}, 0.0, init_rng);
    }
    const std::size_t cat = ch * kernels.size();
    state.param(scope + ".proj.w", {cat, d}, 1.0 / std::sqrt(static_cast<double>(cat)), init_rng);
    state.param(scope + ".proj.b", {d}, 0.0, init_rng);
    state.param(scope + ".pos", {tokens, d}, 0.02, init_rng);
    for (int l = 0; l < cfg_.encoder_layers; ++l)
      nc::register_encoder_layer(state, scope + ".enc" + std::to_string(l), d, ffn, init_rng);
  };
  scale_params("detector.local", cfg_.local_kernels, signal::kMinuteSamples);
  scale_params("detector.context", cfg_.context_kernels, tc);
  state.param("detector.local.offset_emb",
              {signal::kSegmentSamples / signal::kMinuteSamples, d}, 0.02, init_rng);

  const std::string cp = "detector.cross";
  state.param(cp + ".lnq.g", {d}, 0.0, init_rng, 1.0);
  state.param(cp + ".lnq.b", {d}, 0.0, init_rng);
  state.param(cp + ".lnkv.g", {d}, 0.0, init_rng, 1.0);
  state.param(cp + ".lnkv.b", {d}, 0.0, init_rng);
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) state.param(cp + w, {d, d}, d_sd, init_rng);
  state.param(cp + ".bo", {d}, 0.0, init_rng);
  state.param(cp + ".ln2.g", {d}, 0.0, init_rng, 1.0);
  state.param(cp + ".ln2.b", {d}, 0.0, init_rng);
  state.param(cp + ".ffn.w1", {d, ffn}, d_sd, init_rng);
  state.param(cp + ".ffn.b1", {ffn}, 0.0, init_rng);
  state.param(cp + ".ffn.w2", {ffn, d}, 1.0 / std::sqrt(static_cast<double>(ffn)), init_rng);
  state.param(cp + ".ffn.b2", {d}, 0.0, init_rng);

  state.param("detector.pool.queries", {noise::kClassCount, d}, d_sd, init_rng);
  const auto hidden = static_cast<std::size_t>(std::max(8, cfg_.d_model / 2));
  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    const std::string hp = "detector.head" + std::to_string(c);
    state.param(hp + ".w1", {d, hidden}, d_sd, init_rng);
    state.param(hp + ".b1", {hidden}, 0.0, init_rng);
    state.param(hp + ".w2", {hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)), init_rng);
    state.param(hp + ".b2", {1}, 0.0, init_rng);
  }
}

Detector::Detector(DetectorConfig cfg, const nc::ModelState& state)
    : cfg_(std::move(cfg)), state_(&state) {
  cfg_.validate();
  if (state.find("detector.pool.queries") == nullptr)
    throw ValidationError("checkpoint", "state holds no detector parameters");
}

Tensor Detector::conv_stack(const Tensor& input, const std::vector<int>& kernels,
                            const std::string& prefix) const {
  std::vector<Tensor> features;
  features.reserve(kernels.size());
  for (int k : kernels) {
    const std::string key = prefix + ".conv.k" + std::to_string(k);
    features.push_back(nc::gelu(nc::conv1d(input, state_->at(key + ".w"), state_->at(key + ".b"))));
  }
  return nc::concat(features, 0);  // [channels * kernels, L]
}

FeatureTokens Detector::extract_features(const signal::NormalizedSegment& seg1,
                                         const signal::NormalizedSegment& seg10,
                                         std::size_t minute_offset) const {
  if (seg1.values.size() != signal::kMinuteSamples ||
      seg10.values.size() != signal::kSegmentSamples)
    throw ValidationError("shape", "extract_features expects 60- and 600-sample segments");
  if (minute_offset % signal::kMinuteSamples != 0 ||
      minute_offset + signal::kMinuteSamples > signal::kSegmentSamples)
    throw ValidationError("offset", "minute offset outside the parent segment");

  const Tensor local_feat = conv_stack(two_channel_input(seg1), cfg_.local_kernels,
                                       "detector.local");
  Tensor local = nc::add(nc::matmul(nc::transpose(local_feat), state_->at("detector.local.proj.w")),
                         state_->at("detector.local.proj.b"));
  local = nc::add(local, state_->at("detector.local.pos"));
  const std::size_t slot = minute_offset / signal::kMinuteSamples;
  const Tensor offset_vec =
      nc::reshape(nc::slice(state_->at("detector.local.offset_emb"), 0, slot, slot + 1),
                  {static_cast<std::size_t>(cfg_.d_model)});
  local = nc::add(local, offset_vec);

  const Tensor ctx_feat = conv_stack(two_channel_input(seg10), cfg_.context_kernels,
                                     "detector.context");
  const Tensor pooled = nc::avg_pool1d(ctx_feat, static_cast<std::size_t>(cfg_.context_stride));
  Tensor context = nc::add(nc::matmul(nc::transpose(pooled), state_->at("detector.context.proj.w")),
                           state_->at("detector.context.proj.b"));
  context = nc::add(context, state_->at("detector.context.pos"));

  return {std::move(local), std::move(context)};
}

FeatureTokens Detector::encode(const FeatureTokens& tokens, bool training, Rng* rng) const {
  Tensor local = tokens.local;
  Tensor context = tokens.context;
  const auto heads = static_cast<std::size_t>(cfg_.heads);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    local = nc::encoder_layer(*state_, "detector.local.enc" + std::to_string(l), local, heads,
                              cfg_.dropout, training, rng);
    context = nc::encoder_layer(*state_, "detector.context.enc" + std::to_string(l), context,
                                heads, cfg_.dropout, training, rng);
  }
  return {std::move(local), std::move(context)};
}

Tensor Detector::cross_attend(const FeatureTokens& encoded, bool training, Rng* rng) const {
  const std::string p = "detector.cross";
  const Tensor qn = nc::layer_norm(encoded.local, state_->at(p + ".lnq.g"),
                                   state_->at(p + ".lnq.b"));
  const Tensor kvn = nc::layer_norm(encoded.context, state_->at(p + ".lnkv.g"),
                                    state_->at(p + ".lnkv.b"));
  const Tensor q = nc::matmul(qn, state_->at(p + ".wq"));
  const Tensor k = nc::matmul(kvn, state_->at(p + ".wk"));
  const Tensor v = nc::matmul(kvn, state_->at(p + ".wv"));
  Tensor att = nc::multi_head_attention(q, k, v, static_cast<std::size_t>(cfg_.heads));
  att = nc::add(nc::matmul(att, state_->at(p + ".wo")), state_->at(p + ".bo"));
  const Tensor h = nc::add(encoded.local, maybe_dropout(att, cfg_.dropout, training, rng));

  const Tensor n2 = nc::layer_norm(h, state_->at(p + ".ln2.g"), state_->at(p + ".ln2.b"));
  Tensor ffn = nc::add(nc::matmul(n2, state_->at(p + ".ffn.w1")), state_->at(p + ".ffn.b1"));
  ffn = nc::add(nc::matmul(nc::gelu(ffn), state_->at(p + ".ffn.w2")), state_->at(p + ".ffn.b2"));
  return nc::add(h, maybe_dropout(ffn, cfg_.dropout, training, rng));
}

std::pair<Tensor, Tensor> Detector::class_pool(const nc::Tensor& fused) const {
  const Tensor& queries = state_->at("detector.pool.queries");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  const Tensor scores = nc::scale(nc::matmul(queries, nc::transpose(fused)), inv_sqrt_d);
  const Tensor weights = nc::softmax(scores, 1);  // [5, 60]
  return {nc::matmul(weights, fused), weights};
}

Tensor Detector::classify(const nc::Tensor& class_vectors) const {
  std::vector<Tensor> probs;
  probs.reserve(noise::kClassCount);
  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    const std::string hp = "detector.head" + std::to_string(c);
    const Tensor vc = nc::slice(class_vectors, 0, c, c + 1);  // [1, d]
    Tensor h = nc::add(nc::matmul(vc, state_->at(hp + ".w1")), state_->at(hp + ".b1"));
    h = nc::add(nc::matmul(nc::gelu(h), state_->at(hp + ".w2")), state_->at(hp + ".b2"));
    probs.push_back(nc::reshape(nc::sigmoid(h), {1}));
  }
  return nc::concat(probs, 0);  // [5]
}

DetectorForward Detector::forward(const signal::NormalizedSegment& seg1,
                                  const signal::NormalizedSegment& seg10,
                                  std::size_t minute_offset, bool training, Rng* rng) const {
  const FeatureTokens raw = extract_features(seg1, seg10, minute_offset);
  const FeatureTokens encoded = encode(raw, training, rng);
  Tensor fused = cross_attend(encoded, training, rng);
  auto [class_vectors, pool_weights] = class_pool(fused);
  Tensor probs = classify(class_vectors);
  return {std::move(probs), std::move(fused), std::move(class_vectors), std::move(pool_weights)};
}

DetectionResult Detector::detect(const signal::NormalizedSegment& seg1,
                                 const signal::NormalizedSegment& seg10,
                                 std::size_t minute_offset) const {
  nc::NoGradGuard ng;
  DetectorForward f = forward(seg1, seg10, minute_offset, false, nullptr);
  DetectionResult out;
  for (std::size_t c = 0; c < noise::kClassCount; ++c) out.probs[c] = f.probs.data()[c];
  out.gates = apply_gates(out.probs, cfg_.gate_threshold);
  out.class_vectors = std::move(f.class_vectors);
  out.fused = std::move(f.fused);
  return out;
}

std::array<bool, noise::kClassCount> Detector::apply_gates(
    const std::array<double, noise::kClassCount>& probs, double threshold) {
  std::array<bool, noise::kClassCount> gates{};
  for (std::size_t c = 0; c < noise::kClassCount; ++c) gates[c] = probs[c] > threshold;
  return gates;
}

}  // namespace cleanctg::detect
