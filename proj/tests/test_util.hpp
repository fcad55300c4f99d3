#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cleanctg/tensor.hpp"

namespace testutil {

inline cleanctg::nc::Tensor random_tensor(cleanctg::nc::Shape shape, cleanctg::Rng& rng,
                                          double lo = -1.0, double hi = 1.0,
                                          bool requires_grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return cleanctg::nc::Tensor(std::move(shape), std::move(data), requires_grad);
}

// Central finite differences against the analytic gradient for a scalar-valued
// function of the given leaf tensors. Returns the max relative error.
inline double gradient_max_rel_error(const std::function<cleanctg::nc::Tensor()>& fn,
                                     std::vector<cleanctg::nc::Tensor*> leaves,
                                     double h = 1e-5) {
  using cleanctg::nc::NoGradGuard;
  for (auto* t : leaves) t->zero_grad();
  auto loss = fn();
  loss.backward();

  double worst = 0.0;
  for (auto* t : leaves) {
    const auto analytic = t->grad();
    auto& data = t->mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double fp, fm;
      {
        NoGradGuard ng;
        data[i] = saved + h;
        fp = fn().value();
        data[i] = saved - h;
        fm = fn().value();
        data[i] = saved;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  for (auto* t : leaves) t->zero_grad();
  return worst;
}

// Like gradient_max_rel_error but probes only `per_leaf` random elements per
// leaf; the analytic gradient is still computed by one full backward pass.
// Keeps end-to-end checks of large parameter sets affordable.
inline double gradient_sampled_rel_error(const std::function<cleanctg::nc::Tensor()>& fn,
                                         std::vector<cleanctg::nc::Tensor*> leaves,
                                         std::size_t per_leaf, cleanctg::Rng& rng,
                                         double h = 1e-5) {
  using cleanctg::nc::NoGradGuard;
  for (auto* t : leaves) t->zero_grad();
  auto loss = fn();
  loss.backward();

  double worst = 0.0;
  for (auto* t : leaves) {
    const auto analytic = t->grad();
    auto& data = t->mutable_data();
    for (std::size_t probe = 0; probe < per_leaf; ++probe) {
      const auto i = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      const double saved = data[i];
      double fp, fm;
      {
        NoGradGuard ng;
        data[i] = saved + h;
        fp = fn().value();
        data[i] = saved - h;
        fm = fn().value();
        data[i] = saved;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  for (auto* t : leaves) t->zero_grad();
  return worst;
}

// O(n^2) pairwise concordance AU-ROC oracle, ties counted 1/2.
inline double auroc_pairwise_oracle(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

}  // namespace testutil
