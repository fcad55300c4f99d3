#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cleanctg/common.hpp"
#include "cleanctg/signal.hpp"

namespace cleanctg::noise {

// Canonical index order is fixed across all modules: the classifier's output
// dimension follows it.
enum class ArtefactClass : int { Halving = 0, Doubling = 1, Mhr = 2, Missing = 3, Spike = 4 };

inline constexpr std::size_t kClassCount = 5;
inline constexpr std::array<const char*, kClassCount> kClassNames{"halving", "doubling", "mhr",
                                                                  "missing", "spike"};

ArtefactClass class_from_name(std::string_view name);

// Half-open [begin, end) sample index range.
struct Run {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

struct InjectionConfig {
  double p_halving = 0.05;
  double p_doubling = 0.05;
  double p_mhr = 0.10;
  double p_missing = 0.10;
  double p_spike = 0.10;
  double max_total_fraction = 0.5;
  double max_run_fraction = 0.05;
  double mhr_low_bpm = 70.0;
  double mhr_high_bpm = 110.0;
  double spike_delta_min_bpm = 5.0;
  double spike_delta_max_bpm = 40.0;
  bool compound_enabled = true;
  std::uint64_t seed = 0;

  double probability(ArtefactClass c) const;
  void validate() const;

  std::string to_json_string() const;
  static InjectionConfig from_json_string(const std::string& text);
};

struct CorruptionRecord {
  std::string id;
  std::vector<double> clean;      // bpm, no missing (clean-subset contract)
  std::vector<double> corrupted;  // bpm, NaN = missing, unclamped scaling values
  std::array<std::vector<std::uint8_t>, kClassCount> masks;  // per-class position masks
  std::array<bool, kClassCount> labels{};                    // label_c = any(mask_c)
  // Primary-participation flags (the per-class Bernoulli draws that placed at
  // least one run). The missing label can additionally fire through compound
  // flanks, so labels[Missing] >= participated[Missing] in aggregate.
  std::array<bool, kClassCount> participated{};

  std::size_t length() const { return clean.size(); }
  std::vector<Run> runs(ArtefactClass c) const;
  std::vector<std::uint8_t> mask_union() const;
  std::size_t masked_total() const;
};

// Deterministic in (segment contents, id, start index, cfg.seed).
// Throws unclean-input if the segment has missing samples.
CorruptionRecord inject(const signal::Segment10& seg, const InjectionConfig& cfg);

// Primitive corruptions. Value semantics: the input sequence is copied,
// modified on the run/position set, and returned.
std::vector<double> apply_halving(std::vector<double> seg, std::span<const Run> runs);
std::vector<double> apply_doubling(std::vector<double> seg, std::span<const Run> runs);
std::vector<double> apply_missing(std::vector<double> seg, std::span<const Run> runs);
std::vector<double> apply_spike(std::vector<double> seg, std::span<const std::size_t> positions,
                                const InjectionConfig& cfg, Rng& rng);
// Baseline drawn uniform in [80,100] bpm plus a bounded random walk
// (step sd 0.5 bpm) clamped to [70,110].
std::vector<double> synthesize_mhr(std::size_t length, const InjectionConfig& cfg, Rng& rng);

// Mask JSONL: one object per record with labels and half-open run lists.
std::string record_to_mask_json(const CorruptionRecord& rec);
std::string records_to_mask_jsonl(std::span<const CorruptionRecord> recs);
struct MaskEntry {
  std::string id;
  std::array<bool, kClassCount> labels{};
  std::array<std::vector<Run>, kClassCount> runs;
};
std::vector<MaskEntry> parse_mask_jsonl(const std::string& text);

}  // namespace cleanctg::noise
