#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cleanctg/common.hpp"

namespace cleanctg::baseline {

// Corrupted runs become linear ramps between the nearest clean neighbours;
// leading/trailing runs take the nearest clean value. Identity outside the
// mask. Throws unfillable when no clean sample exists.
std::vector<double> linear_interpolate(std::span<const double> x,
                                       std::span<const std::uint8_t> corrupt_mask);

struct ArConfig {
  int order = 5;
  // Fit needs at least 3*order clean samples, else the linear fallback runs.
};

struct ArResult {
  std::vector<double> values;
  bool used_fallback = false;
};

// AR(p) with intercept, least-squares fit on clean positions; masked runs are
// forecast forward from the preceding context. Ill-conditioned or data-starved
// fits fall back to linear interpolation, flagged in the result.
ArResult ar_impute(std::span<const double> x, std::span<const std::uint8_t> corrupt_mask,
                   const ArConfig& cfg = {});

}  // namespace cleanctg::baseline
