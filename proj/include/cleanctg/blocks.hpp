#pragma once

#include <string>

#include "cleanctg/model.hpp"
#include "cleanctg/tensor.hpp"

namespace cleanctg::nc {

// Pre-LN transformer encoder layer parameters under `prefix`:
// ln1/attn(wq,wk,wv,wo,bo)/ln2/ffn(w1,b1,w2,b2).
void register_encoder_layer(ModelState& state, const std::string& prefix, std::size_t d_model,
                            std::size_t ffn_dim, Rng& rng);

Tensor encoder_layer(const ModelState& state, const std::string& prefix, const Tensor& x,
                     std::size_t heads, double dropout_rate, bool training, Rng* dropout_rng);

}  // namespace cleanctg::nc
