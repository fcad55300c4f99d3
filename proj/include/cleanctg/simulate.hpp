#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cleanctg/common.hpp"
#include "cleanctg/signal.hpp"

namespace cleanctg::sim {

// Synthetic clean FHR: wandering baseline, AR(1) beat-to-beat variability,
// raised-cosine accelerations and (optionally) decelerations. Stays well
// inside [40, 235] bpm so scaling artefacts remain representable.
struct TraceConfig {
  double baseline_low = 120.0;
  double baseline_high = 150.0;
  double wander_amp_low = 2.0;
  double wander_amp_high = 6.0;
  double wander_period_low = 300.0;  // seconds
  double wander_period_high = 900.0;
  double variability_sd = 2.2;   // AR(1) innovation, bpm
  double variability_rho = 0.45;
  double accels_per_hour = 12.0;
  double accel_height_low = 12.0;
  double accel_height_high = 22.0;
  double accel_len_low = 20.0;  // seconds
  double accel_len_high = 45.0;
  double decels_per_hour = 0.0;
  double decel_depth_low = 18.0;
  double decel_depth_high = 30.0;
  double decel_len_low = 70.0;
  double decel_len_high = 120.0;
};

signal::FhrSignal simulate_clean_fhr(std::size_t samples, const TraceConfig& cfg,
                                     std::uint64_t seed, const std::string& id);

// `count` ten-minute clean segments drawn from independent simulated traces.
std::vector<signal::Segment10> simulate_clean_segments(std::size_t count, const TraceConfig& cfg,
                                                       std::uint64_t seed);

}  // namespace cleanctg::sim
