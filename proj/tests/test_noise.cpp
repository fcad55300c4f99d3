#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cleanctg/noise.hpp"
#include "cleanctg/signal.hpp"

using namespace cleanctg;
using namespace cleanctg::noise;

namespace {

signal::Segment10 constant_segment(double bpm, const std::string& id = "seg",
                                   std::size_t start = 0) {
  signal::Segment10 seg;
  seg.values.assign(signal::kSegmentSamples, bpm);
  seg.source_id = id;
  seg.start_index = start;
  return seg;
}

signal::Segment10 wobbly_segment(std::uint64_t seed) {
  signal::Segment10 seg;
  seg.source_id = "w" + std::to_string(seed);
  Rng rng(seed);
  const double base = rng.uniform(120.0, 150.0);
  seg.values.resize(signal::kSegmentSamples);
  for (auto& v : seg.values) v = base + rng.normal(0.0, 2.0);
  return seg;
}

InjectionConfig only_class(ArtefactClass c) {
  InjectionConfig cfg;
  cfg.p_halving = cfg.p_doubling = cfg.p_mhr = cfg.p_missing = cfg.p_spike = 0.0;
  cfg.compound_enabled = false;
  switch (c) {
    case ArtefactClass::Halving: cfg.p_halving = 1.0; break;
    case ArtefactClass::Doubling: cfg.p_doubling = 1.0; break;
    case ArtefactClass::Mhr: cfg.p_mhr = 1.0; break;
    case ArtefactClass::Missing: cfg.p_missing = 1.0; break;
    case ArtefactClass::Spike: cfg.p_spike = 1.0; break;
  }
  return cfg;
}

bool identical_records(const CorruptionRecord& a, const CorruptionRecord& b) {
  if (a.masks != b.masks || a.labels != b.labels) return false;
  return std::memcmp(a.corrupted.data(), b.corrupted.data(),
                     a.corrupted.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("halving a constant 140 segment gives exactly 70 on mask positions") {
  auto cfg = only_class(ArtefactClass::Halving);
  cfg.seed = 5;
  const auto rec = inject(constant_segment(140.0), cfg);
  REQUIRE(rec.labels[0]);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < rec.length(); ++i) {
    if (rec.masks[0][i]) {
      CHECK(rec.corrupted[i] == 70.0);
      ++masked;
    } else {
      CHECK(rec.corrupted[i] == 140.0);
    }
  }
  CHECK(masked > 0);
}

TEST_CASE("injection is deterministic in (segment, seed)") {
  InjectionConfig cfg;
  cfg.seed = 42;
  const auto seg = wobbly_segment(1);
  CHECK(identical_records(inject(seg, cfg), inject(seg, cfg)));

  InjectionConfig other = cfg;
  other.seed = 43;
  bool all_same = true;
  for (int i = 0; i < 20 && all_same; ++i) {
    const auto s = wobbly_segment(100 + static_cast<std::uint64_t>(i));
    all_same = identical_records(inject(s, cfg), inject(s, other));
  }
  CHECK_FALSE(all_same);
}

TEST_CASE("unclean input is rejected") {
  auto seg = constant_segment(140.0);
  seg.values[17] = missing_value();
  try {
    inject(seg, InjectionConfig{});
    FAIL("expected unclean-input");
  } catch (const ValidationError& e) {
    CHECK(e.code() == "unclean-input");
  }
}

TEST_CASE("apply_halving/doubling: point values, identity, inverse") {
  std::vector<double> seg(60, 150.0);
  const std::vector<Run> runs{{10, 20}};
  const auto halved = apply_halving(seg, runs);
  CHECK(halved[10] == 75.0);
  CHECK(halved[9] == 150.0);

  CHECK(apply_halving(seg, {}) == seg);

  const auto back = apply_halving(apply_doubling(seg, runs), runs);
  for (std::size_t i = 0; i < seg.size(); ++i) CHECK(std::abs(back[i] - seg[i]) <= 1e-12);
}

TEST_CASE("apply_halving rejects out-of-bounds runs") {
  std::vector<double> seg(60, 150.0);
  CHECK_THROWS_AS(apply_halving(seg, std::vector<Run>{{50, 61}}), ValidationError);
  CHECK_THROWS_AS(apply_halving(seg, std::vector<Run>{{10, 12}, {11, 14}}), ValidationError);
}

TEST_CASE("apply_missing marks exactly the run") {
  std::vector<double> seg(60, 150.0);
  const auto out = apply_missing(seg, std::vector<Run>{{10, 20}});
  for (std::size_t i = 0; i < 60; ++i) {
    if (i >= 10 && i < 20)
      CHECK(is_missing(out[i]));
    else
      CHECK(out[i] == 150.0);
  }
  CHECK(apply_missing(seg, {}) == seg);
}

TEST_CASE("synthesize_mhr: range and smoothness") {
  InjectionConfig cfg;
  Rng rng(3);
  CHECK(synthesize_mhr(0, cfg, rng).empty());

  const auto run = synthesize_mhr(30, cfg, rng);
  REQUIRE(run.size() == 30);
  for (double v : run) {
    CHECK(v >= 70.0);
    CHECK(v <= 110.0);
  }

  // Monte Carlo lag-1 autocorrelation over 10,000 generated runs.
  double num = 0.0, den = 0.0;
  for (int r = 0; r < 10000; ++r) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(60, 150));
    const auto vs = synthesize_mhr(len, cfg, rng);
    double mu = 0.0;
    for (double v : vs) mu += v;
    mu /= static_cast<double>(vs.size());
    for (std::size_t i = 0; i + 1 < vs.size(); ++i) num += (vs[i] - mu) * (vs[i + 1] - mu);
    for (double v : vs) den += (v - mu) * (v - mu);
  }
  CHECK(num / den > 0.9);
}

TEST_CASE("apply_spike: offsets in the 5-40 band, sign balance") {
  InjectionConfig cfg;
  Rng rng(9);
  std::vector<double> seg(60, 140.0);
  const std::vector<std::size_t> one{7};
  const auto spiked = apply_spike(seg, one, cfg, rng);
  const double v = spiked[7];
  const bool in_band = (v >= 100.0 && v <= 135.0) || (v >= 145.0 && v <= 180.0);
  CHECK(in_band);
  CHECK(apply_spike(seg, {}, cfg, rng) == seg);

  int positive = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto out = apply_spike(seg, one, cfg, rng);
    const double delta = out[7] - 140.0;
    CHECK(std::abs(delta) >= 5.0);
    CHECK(std::abs(delta) <= 40.0);
    if (delta > 0) ++positive;
  }
  CHECK(positive > 4800);
  CHECK(positive < 5200);
}

TEST_CASE("caps, disjointness, label consistency, clean preservation") {
  InjectionConfig cfg;
  cfg.seed = 77;
  const auto cap_total = static_cast<std::size_t>(0.5 * 600);
  const auto cap_run = static_cast<std::size_t>(0.05 * 600);
  for (int s = 0; s < 1000; ++s) {
    const auto seg = wobbly_segment(static_cast<std::uint64_t>(s));
    const auto rec = inject(seg, cfg);

    CHECK(rec.masked_total() <= cap_total);
    for (std::size_t c = 0; c < kClassCount; ++c) {
      for (const Run& r : rec.runs(static_cast<ArtefactClass>(c)))
        CHECK(r.length() <= cap_run);
      CHECK(rec.labels[c] ==
            std::any_of(rec.masks[c].begin(), rec.masks[c].end(),
                        [](std::uint8_t b) { return b != 0; }));
    }
    // Disjoint masks.
    for (std::size_t i = 0; i < rec.length(); ++i) {
      int owners = 0;
      for (const auto& m : rec.masks) owners += m[i] ? 1 : 0;
      CHECK(owners <= 1);
      if (owners == 0) CHECK(rec.corrupted[i] == rec.clean[i]);  // bit-exact
    }
  }
}

TEST_CASE("participation rates land near configured probabilities") {
  InjectionConfig cfg;
  cfg.seed = 31;
  std::array<int, kClassCount> part{};
  std::array<int, kClassCount> labelled{};
  const int n = 2000;
  for (int s = 0; s < n; ++s) {
    const auto rec = inject(wobbly_segment(static_cast<std::uint64_t>(s) + 50000), cfg);
    for (std::size_t c = 0; c < kClassCount; ++c) {
      part[c] += rec.participated[c] ? 1 : 0;
      labelled[c] += rec.labels[c] ? 1 : 0;
    }
  }
  const std::array<double, kClassCount> expected{0.05, 0.05, 0.10, 0.10, 0.10};
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double rate = static_cast<double>(part[c]) / n;
    INFO("class ", kClassNames[c], " rate ", rate);
    CHECK(std::abs(rate - expected[c]) < 0.03);
    // Labels match participation except for missing, which also fires
    // through compound flanks.
    if (static_cast<ArtefactClass>(c) == ArtefactClass::Missing)
      CHECK(labelled[c] >= part[c]);
    else
      CHECK(labelled[c] == part[c]);
  }
}

TEST_CASE("halving time-fraction ballpark under defaults") {
  InjectionConfig cfg;
  cfg.seed = 99;
  std::size_t halved = 0, total = 0;
  for (int s = 0; s < 2000; ++s) {
    const auto rec = inject(wobbly_segment(static_cast<std::uint64_t>(s) + 80000), cfg);
    const auto& m = rec.masks[0];
    halved += static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    total += rec.length();
  }
  const double frac = static_cast<double>(halved) / static_cast<double>(total);
  CHECK(frac > 0.003);
  CHECK(frac < 0.014);
}

TEST_CASE("compound placement flanks scaling runs with missing samples") {
  auto cfg = only_class(ArtefactClass::Halving);
  cfg.compound_enabled = true;
  int flanked = 0, interior = 0;
  for (int s = 0; s < 50; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto rec = inject(wobbly_segment(static_cast<std::uint64_t>(s) + 900), cfg);
    const auto& missing = rec.masks[static_cast<std::size_t>(ArtefactClass::Missing)];
    for (const Run& r : rec.runs(ArtefactClass::Halving)) {
      if (r.begin == 0 || r.end == rec.length()) continue;
      ++interior;
      if (missing[r.begin - 1] || missing[r.end]) ++flanked;
    }
  }
  REQUIRE(interior > 0);
  // The global 50% budget can occasionally squeeze a flank out entirely.
  CHECK(static_cast<double>(flanked) / static_cast<double>(interior) > 0.95);
}

TEST_CASE("mask JSONL round-trips labels and runs") {
  InjectionConfig cfg;
  cfg.seed = 4;
  std::vector<CorruptionRecord> recs;
  for (int s = 0; s < 5; ++s)
    recs.push_back(inject(wobbly_segment(static_cast<std::uint64_t>(s) + 7000), cfg));
  const auto text = records_to_mask_jsonl(recs);
  const auto entries = parse_mask_jsonl(text);
  REQUIRE(entries.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(entries[i].id == recs[i].id);
    for (std::size_t c = 0; c < kClassCount; ++c) {
      CHECK(entries[i].labels[c] == recs[i].labels[c]);
      const auto runs = recs[i].runs(static_cast<ArtefactClass>(c));
      REQUIRE(entries[i].runs[c].size() == runs.size());
      for (std::size_t r = 0; r < runs.size(); ++r) {
        CHECK(entries[i].runs[c][r].begin == runs[r].begin);
        CHECK(entries[i].runs[c][r].end == runs[r].end);
      }
    }
  }
}
