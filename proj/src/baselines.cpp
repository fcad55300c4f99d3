#include "cleanctg/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace cleanctg::baseline {

std::vector<double> linear_interpolate(std::span<const double> x,
                                       std::span<const std::uint8_t> corrupt_mask) {
  if (x.size() != corrupt_mask.size())
    throw ValidationError("shape", "mask length must match the signal");
  const std::size_t n = x.size();
  std::vector<double> out(x.begin(), x.end());

  std::size_t clean_count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!corrupt_mask[i]) ++clean_count;
  if (clean_count == 0)
    throw ValidationError("unfillable", "no clean sample to interpolate from");

  std::size_t i = 0;
  while (i < n) {
    if (!corrupt_mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && corrupt_mask[j]) ++j;
    const bool has_left = i > 0;
    const bool has_right = j < n;
    if (has_left && has_right) {
      const double a = out[i - 1];
      const double b = out[j];
      const auto span = static_cast<double>(j - (i - 1));
      for (std::size_t t = i; t < j; ++t)
        out[t] = a + (b - a) * static_cast<double>(t - (i - 1)) / span;
    } else if (has_right) {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(i),
                out.begin() + static_cast<std::ptrdiff_t>(j), out[j]);
    } else {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(i),
                out.begin() + static_cast<std::ptrdiff_t>(j), out[i - 1]);
    }
    i = j;
  }
  return out;
}

ArResult ar_impute(std::span<const double> x, std::span<const std::uint8_t> corrupt_mask,
                   const ArConfig& cfg) {
  if (cfg.order < 1) throw ValidationError("config", "AR order must be >= 1");
  if (x.size() != corrupt_mask.size())
    throw ValidationError("shape", "mask length must match the signal");
  const std::size_t n = x.size();
  const auto p = static_cast<std::size_t>(cfg.order);

  std::size_t clean_count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!corrupt_mask[i]) ++clean_count;

  auto fallback = [&] {
    return ArResult{linear_interpolate(x, corrupt_mask), true};
  };
  if (clean_count < 3 * p) return fallback();

  // Regression rows: target t with its p lags, all clean.
  std::vector<std::size_t> rows;
  for (std::size_t t = p; t < n; ++t) {
    bool ok = !corrupt_mask[t];
    for (std::size_t k = 1; ok && k <= p; ++k) ok = !corrupt_mask[t - k];
    if (ok) rows.push_back(t);
  }
  if (rows.size() < p + 2) return fallback();

  Eigen::MatrixXd design(rows.size(), p + 1);
  Eigen::VectorXd target(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    design(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t k = 1; k <= p; ++k)
      design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = x[rows[r] - k];
    target(static_cast<Eigen::Index>(r)) = x[rows[r]];
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
  if (!coef.allFinite()) return fallback();

  ArResult res;
  res.values.assign(x.begin(), x.end());
  res.used_fallback = false;
  std::size_t i = 0;
  while (i < n) {
    if (!corrupt_mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && corrupt_mask[j]) ++j;
    if (i < p) {
      // No full preceding context; patch this run by interpolation.
      const auto patch = linear_interpolate(res.values, corrupt_mask);
      for (std::size_t t = i; t < j; ++t) res.values[t] = patch[t];
      res.used_fallback = true;
    } else {
      for (std::size_t t = i; t < j; ++t) {
        double pred = coef(0);
        for (std::size_t k = 1; k <= p; ++k)
          pred += coef(static_cast<Eigen::Index>(k)) * res.values[t - k];
        res.values[t] = pred;
      }
    }
    i = j;
  }
  return res;
}

}  // namespace cleanctg::baseline
