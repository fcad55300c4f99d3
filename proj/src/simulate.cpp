#include "cleanctg/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace cleanctg::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Raised-cosine bump added over [start, start+len).
void add_bump(std::vector<double>& v, std::size_t start, std::size_t len, double height) {
  for (std::size_t i = 0; i < len && start + i < v.size(); ++i) {
    const double phase = static_cast<double>(i) / static_cast<double>(len);
    v[start + i] += height * 0.5 * (1.0 - std::cos(2.0 * kPi * phase));
  }
}

}  // namespace

signal::FhrSignal simulate_clean_fhr(std::size_t samples, const TraceConfig& cfg,
                                     std::uint64_t seed, const std::string& id) {
  if (samples == 0) throw ValidationError("config", "trace length must be positive");
  Rng rng(splitmix64(seed ^ fnv1a64(id)));

  const double base = rng.uniform(cfg.baseline_low, cfg.baseline_high);
  const double amp = rng.uniform(cfg.wander_amp_low, cfg.wander_amp_high);
  const double period = rng.uniform(cfg.wander_period_low, cfg.wander_period_high);
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  std::vector<double> v(samples);
  double ar = 0.0;
  for (std::size_t t = 0; t < samples; ++t) {
    ar = cfg.variability_rho * ar + rng.normal(0.0, cfg.variability_sd);
    v[t] = base + amp * std::sin(2.0 * kPi * static_cast<double>(t) / period + phase) + ar;
  }

  auto place_events = [&](double per_hour, double h_lo, double h_hi, double l_lo, double l_hi,
                          double sign) {
    const auto expected = per_hour * static_cast<double>(samples) / 3600.0;
    const auto count = static_cast<std::size_t>(std::floor(expected)) +
                       (rng.bernoulli(expected - std::floor(expected)) ? 1 : 0);
    for (std::size_t e = 0; e < count; ++e) {
      const auto len = static_cast<std::size_t>(rng.uniform(l_lo, l_hi));
      if (len >= samples) continue;
      const auto start =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(samples - len)));
      add_bump(v, start, len, sign * rng.uniform(h_lo, h_hi));
    }
  };
  place_events(cfg.accels_per_hour, cfg.accel_height_low, cfg.accel_height_high,
               cfg.accel_len_low, cfg.accel_len_high, 1.0);
  if (cfg.decels_per_hour > 0.0)
    place_events(cfg.decels_per_hour, cfg.decel_depth_low, cfg.decel_depth_high,
                 cfg.decel_len_low, cfg.decel_len_high, -1.0);

  for (auto& s : v) s = std::clamp(s, 40.0, 235.0);

  signal::FhrSignal out;
  out.samples = std::move(v);
  out.rate_hz = 1;
  out.id = id;
  return out;
}

std::vector<signal::Segment10> simulate_clean_segments(std::size_t count, const TraceConfig& cfg,
                                                       std::uint64_t seed) {
  std::vector<signal::Segment10> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = "sim" + std::to_string(i);
    const auto trace = simulate_clean_fhr(signal::kSegmentSamples, cfg, seed + i, id);
    signal::Segment10 seg;
    seg.values = trace.samples;
    seg.source_id = id;
    seg.start_index = 0;
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace cleanctg::sim
