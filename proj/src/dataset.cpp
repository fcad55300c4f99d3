#include "cleanctg/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace cleanctg::data {

Dataset build_dataset(const std::vector<signal::Segment10>& cleans,
                      const noise::InjectionConfig& cfg) {
  if (cleans.empty()) throw ValidationError("empty-dataset", "no clean segments supplied");
  Dataset ds;
  ds.injection = cfg;
  ds.records.reserve(cleans.size());
  for (const auto& seg : cleans) ds.records.push_back(noise::inject(seg, cfg));
  return ds;
}

ModelInput make_input(const Dataset& ds, const ExampleRef& ref) {
  if (ref.record >= ds.records.size())
    throw ValidationError("shape", "example reference out of range");
  const auto& rec = ds.records[ref.record];
  if (ref.offset % signal::kMinuteSamples != 0 ||
      ref.offset + signal::kMinuteSamples > rec.length())
    throw ValidationError("offset", "bad minute offset");

  ModelInput in;
  in.seg10 = signal::normalize(rec.corrupted);
  const std::span<const double> minute(rec.corrupted.data() + ref.offset,
                                       signal::kMinuteSamples);
  in.seg1 = signal::normalize(minute);
  const std::span<const double> clean_minute(rec.clean.data() + ref.offset,
                                             signal::kMinuteSamples);
  in.clean_target = signal::normalize(clean_minute).values;

  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    in.masks[c].assign(rec.masks[c].begin() + static_cast<std::ptrdiff_t>(ref.offset),
                       rec.masks[c].begin() +
                           static_cast<std::ptrdiff_t>(ref.offset + signal::kMinuteSamples));
    in.labels[c] = std::any_of(in.masks[c].begin(), in.masks[c].end(),
                               [](std::uint8_t b) { return b != 0; })
                       ? 1.0
                       : 0.0;
  }
  return in;
}

Split split_dataset(const Dataset& ds, double test_fraction, double val_fraction,
                    std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0 || val_fraction < 0.0 || val_fraction >= 1.0)
    throw ValidationError("config", "split fractions must be in [0,1)");
  const std::size_t parents = ds.records.size();
  std::vector<std::size_t> order(parents);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(seed ^ 0x73706c6974ull));  // independent split stream
  rng.shuffle(order);

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * parents));
  const auto n_val =
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(parents - n_test)));

  std::vector<std::uint8_t> bucket(parents, 0);  // 0 train, 1 val, 2 test
  for (std::size_t i = 0; i < n_test; ++i) bucket[order[i]] = 2;
  for (std::size_t i = n_test; i < n_test + n_val; ++i) bucket[order[i]] = 1;

  Split split;
  for (std::size_t r = 0; r < parents; ++r)
    for (std::size_t o = 0; o < signal::kSegmentSamples; o += signal::kMinuteSamples) {
      const ExampleRef ref{r, o};
      (bucket[r] == 2 ? split.test : bucket[r] == 1 ? split.val : split.train).push_back(ref);
    }
  return split;
}

namespace {

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("dataset", "truncated records.bin");
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest{{"version", 1},
                                  {"records", ds.records.size()},
                                  {"injection", nlohmann::json::parse(ds.injection.to_json_string())}};
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

  std::ofstream out(dir / "records.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("io", "cannot write " + (dir / "records.bin").string());
  for (const auto& rec : ds.records) {
    put(out, static_cast<std::uint32_t>(rec.id.size()));
    out.write(rec.id.data(), static_cast<std::streamsize>(rec.id.size()));
    for (std::size_t c = 0; c < noise::kClassCount; ++c)
      put(out, static_cast<std::uint8_t>(rec.participated[c] ? 1 : 0));
    out.write(reinterpret_cast<const char*>(rec.clean.data()),
              static_cast<std::streamsize>(rec.clean.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(rec.corrupted.data()),
              static_cast<std::streamsize>(rec.corrupted.size() * sizeof(double)));
    for (std::size_t c = 0; c < noise::kClassCount; ++c) {
      const auto runs = rec.runs(static_cast<noise::ArtefactClass>(c));
      put(out, static_cast<std::uint32_t>(runs.size()));
      for (const auto& r : runs) {
        put(out, static_cast<std::uint32_t>(r.begin));
        put(out, static_cast<std::uint32_t>(r.end));
      }
    }
  }
  if (!out) throw RuntimeFailure("io", "dataset write failed");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset", std::string("bad dataset manifest: ") + e.what());
  }
  Dataset ds;
  ds.injection = noise::InjectionConfig::from_json_string(manifest.at("injection").dump());
  const auto count = manifest.at("records").get<std::size_t>();

  std::ifstream in(dir / "records.bin", std::ios::binary);
  if (!in) throw ValidationError("io", "cannot open " + (dir / "records.bin").string());
  ds.records.resize(count);
  for (auto& rec : ds.records) {
    const auto id_len = get<std::uint32_t>(in);
    rec.id.resize(id_len);
    in.read(rec.id.data(), id_len);
    for (std::size_t c = 0; c < noise::kClassCount; ++c)
      rec.participated[c] = get<std::uint8_t>(in) != 0;
    rec.clean.resize(signal::kSegmentSamples);
    in.read(reinterpret_cast<char*>(rec.clean.data()),
            static_cast<std::streamsize>(rec.clean.size() * sizeof(double)));
    rec.corrupted.resize(signal::kSegmentSamples);
    in.read(reinterpret_cast<char*>(rec.corrupted.data()),
            static_cast<std::streamsize>(rec.corrupted.size() * sizeof(double)));
    if (!in) throw ValidationError("dataset", "truncated records.bin");
    for (std::size_t c = 0; c < noise::kClassCount; ++c) {
      rec.masks[c].assign(signal::kSegmentSamples, 0);
      const auto run_count = get<std::uint32_t>(in);
      for (std::uint32_t r = 0; r < run_count; ++r) {
        const auto begin = get<std::uint32_t>(in);
        const auto end = get<std::uint32_t>(in);
        if (end > signal::kSegmentSamples || begin >= end)
          throw ValidationError("dataset", "corrupt run bounds");
        for (std::uint32_t i = begin; i < end; ++i) rec.masks[c][i] = 1;
      }
      rec.labels[c] = std::any_of(rec.masks[c].begin(), rec.masks[c].end(),
                                  [](std::uint8_t b) { return b != 0; });
    }
  }
  return ds;
}

}  // namespace cleanctg::data
