#include "cleanctg/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace cleanctg::signal {

void FhrSignal::validate() const {
  if (rate_hz != 1 && rate_hz != 4)
    throw ValidationError("invalid-rate", "rate_hz must be 1 or 4, got " + std::to_string(rate_hz));
  if (samples.empty()) throw ValidationError("empty-signal", "signal must have at least one sample");
  for (double v : samples) {
    if (is_missing(v)) continue;
    if (v < kBpmMin || v > kBpmMax)
      throw ValidationError("bpm-range", "sample " + format_double(v) + " outside [30,300] bpm");
  }
}

FhrSignal downsample(const FhrSignal& input) {
  if (input.rate_hz != 4)
    throw ValidationError("invalid-rate", "downsample expects a 4 Hz signal");
  FhrSignal out;
  out.rate_hz = 1;
  out.id = input.id;
  const std::size_t blocks = input.samples.size() / 4;
  out.samples.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double sum = 0.0;
    int present = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = input.samples[b * 4 + k];
      if (!is_missing(v)) {
        sum += v;
        ++present;
      }
    }
    out.samples.push_back(present == 0 ? missing_value() : sum / present);
  }
  return out;
}

std::vector<Segment10> segment(const FhrSignal& input) {
  if (input.rate_hz != 1)
    throw ValidationError("invalid-rate", "segmentation expects a 1 Hz signal");
  if (input.samples.size() < kSegmentSamples)
    throw ValidationError("too-short", "need at least 600 samples, got " +
                                           std::to_string(input.samples.size()));
  const std::size_t count = input.samples.size() / kSegmentSamples;
  std::vector<Segment10> segments;
  segments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Segment10 seg;
    seg.source_id = input.id;
    seg.start_index = i * kSegmentSamples;
    seg.values.assign(input.samples.begin() + static_cast<std::ptrdiff_t>(seg.start_index),
                      input.samples.begin() + static_cast<std::ptrdiff_t>(seg.start_index + kSegmentSamples));
    segments.push_back(std::move(seg));
  }
  return segments;
}

Segment1 slice_minute(const Segment10& parent, std::size_t offset) {
  if (offset % kMinuteSamples != 0 || offset + kMinuteSamples > kSegmentSamples)
    throw ValidationError("offset", "minute offset must be one of {0,60,...,540}");
  Segment1 out;
  out.parent_id = parent.source_id + ":" + std::to_string(parent.start_index);
  out.offset = offset;
  out.values.assign(parent.values.begin() + static_cast<std::ptrdiff_t>(offset),
                    parent.values.begin() + static_cast<std::ptrdiff_t>(offset + kMinuteSamples));
  return out;
}

NormalizedSegment normalize(std::span<const double> bpm_values) {
  NormalizedSegment out;
  out.values.resize(bpm_values.size());
  out.missing_mask.resize(bpm_values.size());
  for (std::size_t i = 0; i < bpm_values.size(); ++i) {
    const double v = bpm_values[i];
    if (is_missing(v)) {
      out.values[i] = 0.0;
      out.missing_mask[i] = 1.0;
    } else {
      out.values[i] = std::clamp(v, 0.0, kNormalizationMaxBpm) / kNormalizationMaxBpm;
      out.missing_mask[i] = 0.0;
    }
  }
  return out;
}

double denormalize_value(double v) { return v * kNormalizationMaxBpm; }

std::vector<double> denormalize(const NormalizedSegment& seg) {
  std::vector<double> out(seg.values.size());
  for (std::size_t i = 0; i < seg.values.size(); ++i)
    out[i] = seg.missing_mask[i] != 0.0 ? missing_value() : denormalize_value(seg.values[i]);
  return out;
}

double clamp_to_bpm_range(double v) {
  if (is_missing(v)) return v;
  return std::clamp(v, kBpmMin, kBpmMax);
}

std::string signal_to_csv(const FhrSignal& sig) {
  std::string out = "t_sec,fhr_bpm\n";
  const double dt = 1.0 / sig.rate_hz;
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    out += format_double(static_cast<double>(i) * dt);
    out += ',';
    out += format_double(sig.samples[i]);  // empty for missing
    out += '\n';
  }
  return out;
}

namespace {

double parse_field(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("malformed-csv",
                          "line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

FhrSignal signal_from_csv(const std::string& text, const std::string& id) {
  FhrSignal sig;
  sig.id = id;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "t_sec,fhr_bpm" && line != "t_sec,fhr_bpm\r"))
    throw ValidationError("malformed-csv", "expected header 't_sec,fhr_bpm'");
  std::size_t line_no = 1;
  double prev_t = 0.0;
  double step = 0.0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ValidationError("malformed-csv", "line " + std::to_string(line_no) + ": missing comma");
    const double t = parse_field(std::string_view(line).substr(0, comma), line_no);
    const std::string_view value = std::string_view(line).substr(comma + 1);
    if (sig.samples.size() == 1) {
      step = t - prev_t;
    } else if (sig.samples.size() > 1 && std::abs((t - prev_t) - step) > 1e-9) {
      throw ValidationError("malformed-csv", "line " + std::to_string(line_no) + ": non-uniform sampling");
    }
    prev_t = t;
    sig.samples.push_back(value.empty() ? missing_value() : parse_field(value, line_no));
  }
  if (sig.samples.empty()) throw ValidationError("malformed-csv", "no samples");
  if (sig.samples.size() > 1) {
    if (std::abs(step - 1.0) < 1e-9)
      sig.rate_hz = 1;
    else if (std::abs(step - 0.25) < 1e-9)
      sig.rate_hz = 4;
    else
      throw ValidationError("invalid-rate", "sample spacing " + format_double(step) +
                                                " implies unsupported rate (need 1 or 0.25 s)");
  }
  sig.validate();
  return sig;
}

FhrSignal read_signal_csv(const std::filesystem::path& path) {
  return signal_from_csv(read_text_file(path.string()), path.stem().string());
}

void write_signal_csv(const FhrSignal& sig, const std::filesystem::path& path) {
  write_text_file(path.string(), signal_to_csv(sig));
}

}  // namespace cleanctg::signal
