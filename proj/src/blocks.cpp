#include "cleanctg/blocks.hpp"

#include <cmath>

namespace cleanctg::nc {

void register_encoder_layer(ModelState& state, const std::string& p, std::size_t d,
                            std::size_t ffn, Rng& rng) {
  const double d_sd = 1.0 / std::sqrt(static_cast<double>(d));
  state.param(p + ".ln1.g", {d}, 0.0, rng, 1.0);
  state.param(p + ".ln1.b", {d}, 0.0, rng);
  for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
    state.param(p + w, {d, d}, d_sd, rng);
  state.param(p + ".attn.bo", {d}, 0.0, rng);
  state.param(p + ".ln2.g", {d}, 0.0, rng, 1.0);
  state.param(p + ".ln2.b", {d}, 0.0, rng);
  state.param(p + ".ffn.w1", {d, ffn}, d_sd, rng);
  state.param(p + ".ffn.b1", {ffn}, 0.0, rng);
  state.param(p + ".ffn.w2", {ffn, d}, 1.0 / std::sqrt(static_cast<double>(ffn)), rng);
  state.param(p + ".ffn.b2", {d}, 0.0, rng);
}

namespace {

Tensor maybe_dropout(const Tensor& x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0 || rng == nullptr) return x;
  return dropout(x, rate, *rng);
}

}  // namespace

Tensor encoder_layer(const ModelState& state, const std::string& p, const Tensor& x,
                     std::size_t heads, double dropout_rate, bool training, Rng* rng) {
  const Tensor normed = layer_norm(x, state.at(p + ".ln1.g"), state.at(p + ".ln1.b"));
  const Tensor q = matmul(normed, state.at(p + ".attn.wq"));
  const Tensor k = matmul(normed, state.at(p + ".attn.wk"));
  const Tensor v = matmul(normed, state.at(p + ".attn.wv"));
  Tensor att = multi_head_attention(q, k, v, heads);
  att = add(matmul(att, state.at(p + ".attn.wo")), state.at(p + ".attn.bo"));
  const Tensor h = add(x, maybe_dropout(att, dropout_rate, training, rng));

  const Tensor normed2 = layer_norm(h, state.at(p + ".ln2.g"), state.at(p + ".ln2.b"));
  Tensor ffn = add(matmul(normed2, state.at(p + ".ffn.w1")), state.at(p + ".ffn.b1"));
  ffn = add(matmul(gelu(ffn), state.at(p + ".ffn.w2")), state.at(p + ".ffn.b2"));
  return add(h, maybe_dropout(ffn, dropout_rate, training, rng));
}

}  // namespace cleanctg::nc
