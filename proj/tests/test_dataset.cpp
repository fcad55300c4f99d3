#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <set>

#include "cleanctg/dataset.hpp"
#include "cleanctg/simulate.hpp"

using namespace cleanctg;
using namespace cleanctg::data;

namespace {

Dataset small_dataset(std::size_t parents, std::uint64_t seed) {
  const auto cleans = sim::simulate_clean_segments(parents, sim::TraceConfig{}, seed);
  noise::InjectionConfig cfg;
  cfg.seed = seed;
  return build_dataset(cleans, cfg);
}

}  // namespace

TEST_CASE("simulated clean traces satisfy the clean-subset contract") {
  const auto segs = sim::simulate_clean_segments(20, sim::TraceConfig{}, 7);
  REQUIRE(segs.size() == 20);
  for (const auto& seg : segs) {
    REQUIRE(seg.values.size() == 600);
    for (double v : seg.values) {
      CHECK_FALSE(is_missing(v));
      CHECK(v >= 40.0);
      CHECK(v <= 235.0);
    }
  }
}

TEST_CASE("100 clean parents yield 1000 examples") {
  const auto ds = small_dataset(100, 3);
  CHECK(all_examples(ds).size() == 1000);
}

TEST_CASE("child labels follow the slice masks") {
  const auto ds = small_dataset(60, 4);
  std::size_t checked = 0;
  for (const auto& ref : all_examples(ds)) {
    const auto in = make_input(ds, ref);
    for (std::size_t c = 0; c < noise::kClassCount; ++c) {
      const bool any = std::any_of(in.masks[c].begin(), in.masks[c].end(),
                                   [](std::uint8_t b) { return b != 0; });
      CHECK(in.labels[c] == (any ? 1.0 : 0.0));
      ++checked;
    }
  }
  CHECK(checked == 60 * 10 * 5);
}

TEST_CASE("clean target matches the clean parent slice") {
  const auto ds = small_dataset(5, 5);
  const auto in = make_input(ds, {2, 120});
  const auto expected = signal::normalize(
      std::span<const double>(ds.records[2].clean.data() + 120, 60));
  CHECK(in.clean_target == expected.values);
}

TEST_CASE("95/5 split by parent with no leakage") {
  const auto ds = small_dataset(100, 6);
  const auto split = split_dataset(ds, 0.05, 0.10, 42);
  CHECK(split.test.size() == 50);
  CHECK(split.train.size() + split.val.size() == 950);

  std::set<std::size_t> train_parents, val_parents, test_parents;
  for (const auto& r : split.train) train_parents.insert(r.record);
  for (const auto& r : split.val) val_parents.insert(r.record);
  for (const auto& r : split.test) test_parents.insert(r.record);
  for (auto p : test_parents) {
    CHECK_FALSE(train_parents.contains(p));
    CHECK_FALSE(val_parents.contains(p));
  }
  for (auto p : val_parents) CHECK_FALSE(train_parents.contains(p));

  // Deterministic in the seed.
  const auto split2 = split_dataset(ds, 0.05, 0.10, 42);
  CHECK(split2.test.size() == split.test.size());
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    CHECK(split2.test[i].record == split.test[i].record);
    CHECK(split2.test[i].offset == split.test[i].offset);
  }
}

TEST_CASE("dataset container round-trips bit-exactly") {
  const auto ds = small_dataset(12, 8);
  const auto dir = std::filesystem::temp_directory_path() / "cleanctg_ds_test";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);

  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& a = ds.records[r];
    const auto& b = back.records[r];
    CHECK(a.id == b.id);
    CHECK(a.labels == b.labels);
    CHECK(a.participated == b.participated);
    CHECK(a.masks == b.masks);
    CHECK(std::memcmp(a.clean.data(), b.clean.data(), a.clean.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.corrupted.data(), b.corrupted.data(),
                      a.corrupted.size() * sizeof(double)) == 0);
  }
  CHECK(back.injection.to_json_string() == ds.injection.to_json_string());
  std::filesystem::remove_all(dir);
}
