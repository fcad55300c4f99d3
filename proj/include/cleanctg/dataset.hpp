#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "cleanctg/noise.hpp"
#include "cleanctg/signal.hpp"

namespace cleanctg::data {

// Per-parent corruption records; 1-minute training examples are views into
// them (record index + minute offset).
struct Dataset {
  std::vector<noise::CorruptionRecord> records;
  noise::InjectionConfig injection;
};

Dataset build_dataset(const std::vector<signal::Segment10>& cleans,
                      const noise::InjectionConfig& cfg);

struct ExampleRef {
  std::size_t record = 0;
  std::size_t offset = 0;  // multiple of 60
};

inline std::vector<ExampleRef> all_examples(const Dataset& ds) {
  std::vector<ExampleRef> out;
  out.reserve(ds.records.size() * 10);
  for (std::size_t r = 0; r < ds.records.size(); ++r)
    for (std::size_t o = 0; o < signal::kSegmentSamples; o += signal::kMinuteSamples)
      out.push_back({r, o});
  return out;
}

// Model-facing view of one 1-minute example.
struct ModelInput {
  signal::NormalizedSegment seg1;   // corrupted minute
  signal::NormalizedSegment seg10;  // corrupted parent
  std::vector<double> clean_target;  // normalized clean minute
  std::array<double, noise::kClassCount> labels{};
  std::array<std::vector<std::uint8_t>, noise::kClassCount> masks;  // per-class, 60 each
};

ModelInput make_input(const Dataset& ds, const ExampleRef& ref);

// Disjoint by parent record: a 10-minute segment contributes children to
// exactly one side of every boundary.
struct Split {
  std::vector<ExampleRef> train, val, test;
};

Split split_dataset(const Dataset& ds, double test_fraction, double val_fraction,
                    std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace cleanctg::data
