#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cleanctg/common.hpp"

namespace cleanctg::signal {

inline constexpr std::size_t kSegmentSamples = 600;  // 10 min at 1 Hz
inline constexpr std::size_t kMinuteSamples = 60;
inline constexpr double kBpmMin = 30.0;
inline constexpr double kBpmMax = 300.0;
inline constexpr double kNormalizationMaxBpm = 240.0;

// FHR time series in bpm; NaN marks a missing sample.
struct FhrSignal {
  std::vector<double> samples;
  int rate_hz = 1;  // 1 after preprocessing, 4 accepted on ingest
  std::string id;

  std::size_t size() const { return samples.size(); }
  void validate() const;  // invariants: rate in {1,4}, length >= 1, present values in [30,300]
};

struct Segment10 {
  std::vector<double> values;  // exactly 600 samples, NaN = missing
  std::string source_id;
  std::size_t start_index = 0;
};

struct Segment1 {
  std::vector<double> values;  // exactly 60 samples
  std::string parent_id;
  std::size_t offset = 0;  // within parent, multiple of 60
};

// Model-facing encoding: values in [0,1] (clamp(bpm,0,240)/240), 0 where
// missing, with an explicit missing mask channel.
struct NormalizedSegment {
  std::vector<double> values;
  std::vector<double> missing_mask;  // 1.0 where missing, else 0.0
};

// 4 Hz -> 1 Hz by 4-sample block mean ignoring missing samples; an entirely
// missing block stays missing. Throws invalid-rate if input is not 4 Hz.
FhrSignal downsample(const FhrSignal& input);

// Non-overlapping 600-sample windows; trailing remainder discarded.
// Throws too-short if the signal has fewer than 600 samples.
std::vector<Segment10> segment(const FhrSignal& input);

Segment1 slice_minute(const Segment10& parent, std::size_t offset);

NormalizedSegment normalize(std::span<const double> bpm_values);
double denormalize_value(double v);
// NaN restored where the mask says missing.
std::vector<double> denormalize(const NormalizedSegment& seg);

double clamp_to_bpm_range(double v);

// Signal CSV: header "t_sec,fhr_bpm", one row per sample, empty field for a
// missing value, LF endings.
FhrSignal read_signal_csv(const std::filesystem::path& path);
void write_signal_csv(const FhrSignal& sig, const std::filesystem::path& path);
std::string signal_to_csv(const FhrSignal& sig);
FhrSignal signal_from_csv(const std::string& text, const std::string& id);

}  // namespace cleanctg::signal
