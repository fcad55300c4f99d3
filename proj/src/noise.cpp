#include "cleanctg/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace cleanctg::noise {

ArtefactClass class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kClassCount; ++i)
    if (name == kClassNames[i]) return static_cast<ArtefactClass>(i);
  throw ValidationError("artefact-class", "unknown artefact class: " + std::string(name));
}

double InjectionConfig::probability(ArtefactClass c) const {
  switch (c) {
    case ArtefactClass::Halving: return p_halving;
    case ArtefactClass::Doubling: return p_doubling;
    case ArtefactClass::Mhr: return p_mhr;
    case ArtefactClass::Missing: return p_missing;
    case ArtefactClass::Spike: return p_spike;
  }
  throw RuntimeFailure("artefact-class", "bad class index");
}

void InjectionConfig::validate() const {
  for (double p : {p_halving, p_doubling, p_mhr, p_missing, p_spike})
    if (p < 0.0 || p > 1.0) throw ValidationError("config", "injection probability outside [0,1]");
  if (max_total_fraction <= 0.0 || max_total_fraction > 1.0)
    throw ValidationError("config", "max_total_fraction must be in (0,1]");
  if (max_run_fraction <= 0.0 || max_run_fraction > max_total_fraction)
    throw ValidationError("config", "max_run_fraction must be in (0, max_total_fraction]");
  if (mhr_low_bpm >= mhr_high_bpm || spike_delta_min_bpm >= spike_delta_max_bpm ||
      spike_delta_min_bpm <= 0.0)
    throw ValidationError("config", "bad artefact value range");
}

std::string InjectionConfig::to_json_string() const {
  nlohmann::ordered_json j{{"p_halving", p_halving},
                           {"p_doubling", p_doubling},
                           {"p_mhr", p_mhr},
                           {"p_missing", p_missing},
                           {"p_spike", p_spike},
                           {"max_total_fraction", max_total_fraction},
                           {"max_run_fraction", max_run_fraction},
                           {"mhr_low_bpm", mhr_low_bpm},
                           {"mhr_high_bpm", mhr_high_bpm},
                           {"spike_delta_min_bpm", spike_delta_min_bpm},
                           {"spike_delta_max_bpm", spike_delta_max_bpm},
                           {"compound_enabled", compound_enabled},
                           {"seed", seed}};
  return j.dump();
}

InjectionConfig InjectionConfig::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config", std::string("bad injection config json: ") + e.what());
  }
  InjectionConfig cfg;
  cfg.p_halving = j.value("p_halving", cfg.p_halving);
  cfg.p_doubling = j.value("p_doubling", cfg.p_doubling);
  cfg.p_mhr = j.value("p_mhr", cfg.p_mhr);
  cfg.p_missing = j.value("p_missing", cfg.p_missing);
  cfg.p_spike = j.value("p_spike", cfg.p_spike);
  cfg.max_total_fraction = j.value("max_total_fraction", cfg.max_total_fraction);
  cfg.max_run_fraction = j.value("max_run_fraction", cfg.max_run_fraction);
  cfg.mhr_low_bpm = j.value("mhr_low_bpm", cfg.mhr_low_bpm);
  cfg.mhr_high_bpm = j.value("mhr_high_bpm", cfg.mhr_high_bpm);
  cfg.spike_delta_min_bpm = j.value("spike_delta_min_bpm", cfg.spike_delta_min_bpm);
  cfg.spike_delta_max_bpm = j.value("spike_delta_max_bpm", cfg.spike_delta_max_bpm);
  cfg.compound_enabled = j.value("compound_enabled", cfg.compound_enabled);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

std::vector<Run> CorruptionRecord::runs(ArtefactClass c) const {
  const auto& m = masks[static_cast<std::size_t>(c)];
  std::vector<Run> out;
  std::size_t i = 0;
  while (i < m.size()) {
    if (!m[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < m.size() && m[j]) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::uint8_t> CorruptionRecord::mask_union() const {
  std::vector<std::uint8_t> u(length(), 0);
  for (const auto& m : masks)
    for (std::size_t i = 0; i < u.size(); ++i) u[i] |= m[i];
  return u;
}

std::size_t CorruptionRecord::masked_total() const {
  const auto u = mask_union();
  return static_cast<std::size_t>(std::count(u.begin(), u.end(), std::uint8_t{1}));
}

namespace {

void check_runs(std::size_t length, std::span<const Run> runs) {
  std::vector<std::uint8_t> seen(length, 0);
  for (const Run& r : runs) {
    if (r.begin >= r.end || r.end > length)
      throw ValidationError("run-range", "run [" + std::to_string(r.begin) + "," +
                                             std::to_string(r.end) + ") out of bounds");
    for (std::size_t i = r.begin; i < r.end; ++i) {
      if (seen[i]) throw ValidationError("run-range", "overlapping runs");
      seen[i] = 1;
    }
  }
}

std::vector<double> apply_factor(std::vector<double> seg, std::span<const Run> runs, double f) {
  check_runs(seg.size(), runs);
  for (const Run& r : runs)
    for (std::size_t i = r.begin; i < r.end; ++i) seg[i] *= f;
  return seg;
}

}  // namespace

std::vector<double> apply_halving(std::vector<double> seg, std::span<const Run> runs) {
  return apply_factor(std::move(seg), runs, 0.5);
}

std::vector<double> apply_doubling(std::vector<double> seg, std::span<const Run> runs) {
  return apply_factor(std::move(seg), runs, 2.0);
}

std::vector<double> apply_missing(std::vector<double> seg, std::span<const Run> runs) {
  check_runs(seg.size(), runs);
  for (const Run& r : runs)
    for (std::size_t i = r.begin; i < r.end; ++i) seg[i] = missing_value();
  return seg;
}

std::vector<double> apply_spike(std::vector<double> seg, std::span<const std::size_t> positions,
                                const InjectionConfig& cfg, Rng& rng) {
  for (std::size_t p : positions) {
    if (p >= seg.size()) throw ValidationError("run-range", "spike position out of bounds");
    const double mag = rng.uniform(cfg.spike_delta_min_bpm, cfg.spike_delta_max_bpm);
    seg[p] += rng.bernoulli(0.5) ? mag : -mag;
  }
  return seg;
}

std::vector<double> synthesize_mhr(std::size_t length, const InjectionConfig& cfg, Rng& rng) {
  std::vector<double> out(length);
  if (length == 0) return out;
  double v = rng.uniform(cfg.mhr_low_bpm + 10.0, cfg.mhr_high_bpm - 10.0);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = v;
    v = std::clamp(v + rng.normal(0.0, 0.5), cfg.mhr_low_bpm, cfg.mhr_high_bpm);
  }
  return out;
}

namespace {

struct Placement {
  std::array<std::vector<std::uint8_t>, kClassCount> masks;
  std::size_t total = 0;
  std::size_t budget = 0;  // global cap in samples
  std::size_t max_run = 0;
  std::size_t length = 0;

  bool free_span(std::size_t begin, std::size_t end) const {
    for (std::size_t i = begin; i < end; ++i)
      for (const auto& m : masks)
        if (m[i]) return false;
    return true;
  }

  bool class_adjacent(ArtefactClass c, std::size_t begin, std::size_t end) const {
    const auto& m = masks[static_cast<std::size_t>(c)];
    if (begin > 0 && m[begin - 1]) return true;
    if (end < length && m[end]) return true;
    return false;
  }

  void mark(ArtefactClass c, std::size_t begin, std::size_t end) {
    auto& m = masks[static_cast<std::size_t>(c)];
    for (std::size_t i = begin; i < end; ++i) m[i] = 1;
    total += end - begin;
  }

  // Maximal run of class c that would contain [begin, end) after marking.
  std::size_t merged_run_length(ArtefactClass c, std::size_t begin, std::size_t end) const {
    const auto& m = masks[static_cast<std::size_t>(c)];
    std::size_t lo = begin;
    while (lo > 0 && m[lo - 1]) --lo;
    std::size_t hi = end;
    while (hi < length && m[hi]) ++hi;
    return hi - lo;
  }
};

// Missing-class flank next to a scaling/MHR run. Grows from the anchor
// outward; trimmed so disjointness, the per-run cap and the global cap hold.
void place_flank(Placement& pl, std::size_t anchor, bool leftward, std::size_t want) {
  std::size_t len = 0;
  while (len < want) {
    std::size_t pos;
    if (leftward) {
      if (anchor < len + 1) break;
      pos = anchor - len - 1;
    } else {
      pos = anchor + len;
      if (pos >= pl.length) break;
    }
    bool occupied = false;
    for (const auto& m : pl.masks)
      if (m[pos]) {
        occupied = true;
        break;
      }
    if (occupied) break;
    ++len;
  }
  if (len == 0) return;
  len = std::min(len, pl.budget - pl.total);
  if (len == 0) return;
  std::size_t begin = leftward ? anchor - len : anchor;
  std::size_t end = leftward ? anchor : anchor + len;
  // Keep the merged missing run under the per-run cap.
  while (end > begin && pl.merged_run_length(ArtefactClass::Missing, begin, end) > pl.max_run) {
    if (leftward)
      ++begin;
    else
      --end;
  }
  if (end > begin) pl.mark(ArtefactClass::Missing, begin, end);
}

}  // namespace

CorruptionRecord inject(const signal::Segment10& seg, const InjectionConfig& cfg) {
  cfg.validate();
  const std::size_t n = seg.values.size();
  if (n != signal::kSegmentSamples)
    throw ValidationError("shape", "inject expects a 600-sample segment");
  for (double v : seg.values)
    if (is_missing(v))
      throw ValidationError("unclean-input", "segment has missing samples; clean subset required");

  // Stream is a deterministic function of (segment, cfg.seed).
  std::uint64_t h = fnv1a64(seg.source_id);
  h = fnv1a64(&seg.start_index, sizeof(seg.start_index), h);
  h = fnv1a64(seg.values.data(), n * sizeof(double), h);
  Rng rng(splitmix64(cfg.seed ^ h));

  Placement pl;
  pl.length = n;
  pl.budget = static_cast<std::size_t>(std::floor(cfg.max_total_fraction * static_cast<double>(n)));
  pl.max_run = static_cast<std::size_t>(std::floor(cfg.max_run_fraction * static_cast<double>(n)));
  for (auto& m : pl.masks) m.assign(n, 0);

  std::vector<int> order(kClassCount);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::array<bool, kClassCount> participated{};
  for (int ci : order) {
    const auto cls = static_cast<ArtefactClass>(ci);
    if (!rng.bernoulli(cfg.probability(cls))) continue;

    const bool spike = cls == ArtefactClass::Spike;
    const double frac = spike ? rng.uniform(0.01, 0.05) : rng.uniform(0.05, 0.25);
    const auto target = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     std::llround(frac * static_cast<double>(n))));
    const std::size_t len_lo = std::min<std::size_t>(3, pl.max_run);
    const std::size_t len_hi = spike ? std::min<std::size_t>(3, pl.max_run) : pl.max_run;

    std::size_t placed = 0;
    for (int attempt = 0; attempt < 120 && placed < target; ++attempt) {
      if (pl.total >= pl.budget) break;
      auto len = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(spike ? 1 : len_lo),
                          static_cast<std::int64_t>(len_hi)));
      len = std::min(len, pl.budget - pl.total);
      if (len == 0 || (!spike && len < len_lo)) break;
      const auto begin =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - len)));
      const std::size_t end = begin + len;
      if (!pl.free_span(begin, end)) continue;
      if (pl.class_adjacent(cls, begin, end)) continue;  // would merge past the run cap
      pl.mark(cls, begin, end);
      placed += len;

      if (cfg.compound_enabled &&
          (cls == ArtefactClass::Halving || cls == ArtefactClass::Doubling ||
           cls == ArtefactClass::Mhr)) {
        place_flank(pl, begin, true, static_cast<std::size_t>(rng.uniform_int(2, 10)));
        place_flank(pl, end, false, static_cast<std::size_t>(rng.uniform_int(2, 10)));
      }
    }
    if (placed > 0) participated[static_cast<std::size_t>(ci)] = true;
  }

  CorruptionRecord rec;
  rec.id = seg.source_id + ":" + std::to_string(seg.start_index);
  rec.clean = seg.values;
  rec.participated = participated;
  rec.masks = std::move(pl.masks);
  for (std::size_t c = 0; c < kClassCount; ++c)
    rec.labels[c] = std::any_of(rec.masks[c].begin(), rec.masks[c].end(),
                                [](std::uint8_t b) { return b != 0; });

  // Value application in canonical class order; masks are disjoint so the
  // order cannot change the outcome, only the rng draw sequence.
  rec.corrupted = rec.clean;
  rec.corrupted = apply_halving(std::move(rec.corrupted), rec.runs(ArtefactClass::Halving));
  rec.corrupted = apply_doubling(std::move(rec.corrupted), rec.runs(ArtefactClass::Doubling));
  for (const Run& r : rec.runs(ArtefactClass::Mhr)) {
    const auto values = synthesize_mhr(r.length(), cfg, rng);
    std::copy(values.begin(), values.end(),
              rec.corrupted.begin() + static_cast<std::ptrdiff_t>(r.begin));
  }
  rec.corrupted = apply_missing(std::move(rec.corrupted), rec.runs(ArtefactClass::Missing));
  std::vector<std::size_t> spike_positions;
  for (const Run& r : rec.runs(ArtefactClass::Spike))
    for (std::size_t i = r.begin; i < r.end; ++i) spike_positions.push_back(i);
  rec.corrupted = apply_spike(std::move(rec.corrupted), spike_positions, cfg, rng);
  return rec;
}

std::string record_to_mask_json(const CorruptionRecord& rec) {
  nlohmann::ordered_json j;
  j["id"] = rec.id;
  nlohmann::ordered_json labels, runs;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    labels[kClassNames[c]] = rec.labels[c];
    auto arr = nlohmann::ordered_json::array();
    for (const Run& r : rec.runs(static_cast<ArtefactClass>(c)))
      arr.push_back({r.begin, r.end});
    runs[kClassNames[c]] = std::move(arr);
  }
  j["labels"] = std::move(labels);
  j["runs"] = std::move(runs);
  return j.dump();
}

std::string records_to_mask_jsonl(std::span<const CorruptionRecord> recs) {
  std::string out;
  for (const auto& rec : recs) {
    out += record_to_mask_json(rec);
    out += '\n';
  }
  return out;
}

std::vector<MaskEntry> parse_mask_jsonl(const std::string& text) {
  std::vector<MaskEntry> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed-jsonl", e.what());
    }
    MaskEntry e;
    e.id = j.at("id").get<std::string>();
    for (std::size_t c = 0; c < kClassCount; ++c) {
      e.labels[c] = j.at("labels").at(kClassNames[c]).get<bool>();
      for (const auto& pair : j.at("runs").at(kClassNames[c]))
        e.runs[c].push_back({pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>()});
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace cleanctg::noise
