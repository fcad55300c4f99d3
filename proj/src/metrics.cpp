#include "cleanctg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cleanctg::eval {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("shape", "scores and labels must align");
  std::size_t npos = 0, nneg = 0;
  for (int l : labels) {
    if (l == 1)
      ++npos;
    else if (l == 0)
      ++nneg;
    else
      throw ValidationError("labels", "labels must be 0/1");
  }
  if (npos == 0 || nneg == 0)
    throw ValidationError("undefined-metric", "AU-ROC needs both classes present");

  // Rank-sum with midranks for ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) pos_rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

Confusion confusion_metrics(std::span<const double> probs, std::span<const int> labels,
                            double threshold) {
  if (probs.size() != labels.size())
    throw ValidationError("shape", "probs and labels must align");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] > threshold;
    if (labels[i] == 1)
      predicted ? ++tp : ++fn;
    else
      predicted ? ++fp : ++tn;
  }
  Confusion out;
  if (tp + fn > 0) out.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (tn + fp > 0) out.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  out.accuracy = probs.empty() ? 0.0
                               : static_cast<double>(tp + tn) / static_cast<double>(probs.size());
  return out;
}

SplitMse split_mse(std::span<const double> cleaned, std::span<const double> clean,
                   std::span<const std::uint8_t> corrupt_mask) {
  SplitMseAccumulator acc;
  acc.add(cleaned, clean, corrupt_mask);
  return acc.result();
}

void SplitMseAccumulator::add(std::span<const double> cleaned, std::span<const double> clean,
                              std::span<const std::uint8_t> corrupt_mask) {
  if (cleaned.size() != clean.size() || cleaned.size() != corrupt_mask.size())
    throw ValidationError("shape", "split_mse parts must align");
  for (std::size_t i = 0; i < cleaned.size(); ++i)
    add_point(cleaned[i], clean[i], corrupt_mask[i] != 0);
}

void SplitMseAccumulator::add_point(double cleaned, double clean, bool corrupt) {
  const double d = cleaned - clean;
  if (corrupt) {
    corrupt_sum_ += d * d;
    ++corrupt_n_;
  } else {
    clean_sum_ += d * d;
    ++clean_n_;
  }
}

SplitMse SplitMseAccumulator::result() const {
  SplitMse out;
  out.corrupt_count = corrupt_n_;
  out.clean_count = clean_n_;
  if (corrupt_n_ > 0) out.corrupt = corrupt_sum_ / static_cast<double>(corrupt_n_);
  if (clean_n_ > 0) out.clean = clean_sum_ / static_cast<double>(clean_n_);
  return out;
}

namespace {

std::vector<double> midranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && xs[idx[j]] == xs[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = midrank;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman_rank_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ValidationError("shape", "spearman needs two aligned series");
  const auto rx = midranks(xs);
  const auto ry = midranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0)
    throw ValidationError("undefined-metric", "spearman undefined on constant series");
  return num / std::sqrt(dx * dy);
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

nlohmann::json DetectionReport::to_json() const {
  nlohmann::ordered_json per;
  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    per[noise::kClassNames[c]] = {{"auroc", per_class[c].auroc},
                                  {"sensitivity", opt_json(per_class[c].sensitivity)},
                                  {"specificity", opt_json(per_class[c].specificity)},
                                  {"accuracy", per_class[c].accuracy}};
  }
  return nlohmann::ordered_json{{"macro_auroc", macro_auroc},
                                {"macro_sensitivity", macro_sensitivity},
                                {"macro_specificity", macro_specificity},
                                {"macro_accuracy", macro_accuracy},
                                {"threshold", threshold},
                                {"examples", examples},
                                {"per_class", per}};
}

DetectionReport build_detection_report(
    const std::vector<std::array<double, noise::kClassCount>>& probs,
    const std::vector<std::array<int, noise::kClassCount>>& labels, double threshold) {
  if (probs.size() != labels.size())
    throw ValidationError("shape", "probs and labels must align");
  DetectionReport report;
  report.threshold = threshold;
  report.examples = probs.size();
  double auroc_sum = 0.0, sens_sum = 0.0, spec_sum = 0.0, acc_sum = 0.0;
  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    std::vector<double> s(probs.size());
    std::vector<int> l(labels.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s[i] = probs[i][c];
      l[i] = labels[i][c];
    }
    ClassMetrics m;
    m.auroc = auroc(s, l);
    const Confusion conf = confusion_metrics(s, l, threshold);
    m.sensitivity = conf.sensitivity;
    m.specificity = conf.specificity;
    m.accuracy = conf.accuracy;
    report.per_class[c] = m;
    auroc_sum += m.auroc;
    sens_sum += m.sensitivity.value_or(0.0);
    spec_sum += m.specificity.value_or(0.0);
    acc_sum += m.accuracy;
  }
  const double k = static_cast<double>(noise::kClassCount);
  report.macro_auroc = auroc_sum / k;
  report.macro_sensitivity = sens_sum / k;
  report.macro_specificity = spec_sum / k;
  report.macro_accuracy = acc_sum / k;
  return report;
}

nlohmann::json ReconReport::to_json() const {
  nlohmann::ordered_json per;
  for (std::size_t c = 0; c < noise::kClassCount; ++c)
    per[noise::kClassNames[c]] = opt_json(per_class_mse[c]);
  return nlohmann::ordered_json{{"mse_corrupt", opt_json(overall.corrupt)},
                                {"mse_clean", opt_json(overall.clean)},
                                {"corrupt_positions", overall.corrupt_count},
                                {"clean_positions", overall.clean_count},
                                {"per_class_mse_corrupt", per},
                                {"baselines",
                                 {{"linear_interpolation_mse_corrupt", opt_json(interp_corrupt_mse)},
                                  {"autoregression_mse_corrupt", opt_json(ar_corrupt_mse)}}},
                                {"examples", examples}};
}

std::string sweep_curve_csv(std::span<const SweepPoint> curve, double SweepPoint::*column) {
  std::string out = "run_length,mse\n";
  for (const auto& p : curve) {
    out += std::to_string(p.run_length);
    out += ',';
    out += format_double(p.*column);
    out += '\n';
  }
  return out;
}

}  // namespace cleanctg::eval
