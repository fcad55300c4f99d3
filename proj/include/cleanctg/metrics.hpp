#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cleanctg/common.hpp"
#include "cleanctg/noise.hpp"

namespace cleanctg::eval {

// Probability a random positive outranks a random negative, ties counted 1/2
// (rank-sum form, equal to the trapezoidal ROC area). Throws undefined-metric
// when labels are single-class.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::optional<double> sensitivity;  // TP / (TP + FN); empty when no positives
  std::optional<double> specificity;  // TN / (TN + FP); empty when no negatives
  double accuracy = 0.0;
};

Confusion confusion_metrics(std::span<const double> probs, std::span<const int> labels,
                            double threshold);

struct SplitMse {
  std::optional<double> corrupt;  // mean squared error over mask-union positions
  std::optional<double> clean;    // over the complement
  std::size_t corrupt_count = 0;
  std::size_t clean_count = 0;
};

SplitMse split_mse(std::span<const double> cleaned, std::span<const double> clean,
                   std::span<const std::uint8_t> corrupt_mask);

// Pools squared errors across many segments before dividing.
class SplitMseAccumulator {
 public:
  void add(std::span<const double> cleaned, std::span<const double> clean,
           std::span<const std::uint8_t> corrupt_mask);
  void add_point(double cleaned, double clean, bool corrupt);
  SplitMse result() const;

 private:
  double corrupt_sum_ = 0.0, clean_sum_ = 0.0;
  std::size_t corrupt_n_ = 0, clean_n_ = 0;
};

double spearman_rank_correlation(std::span<const double> xs, std::span<const double> ys);

struct ClassMetrics {
  double auroc = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double accuracy = 0.0;
};

struct DetectionReport {
  std::array<ClassMetrics, noise::kClassCount> per_class{};
  double macro_auroc = 0.0;  // unweighted mean over the five classes
  double macro_sensitivity = 0.0;
  double macro_specificity = 0.0;
  double macro_accuracy = 0.0;
  double threshold = 0.5;
  std::size_t examples = 0;

  nlohmann::json to_json() const;
};

DetectionReport build_detection_report(
    const std::vector<std::array<double, noise::kClassCount>>& probs,
    const std::vector<std::array<int, noise::kClassCount>>& labels, double threshold);

struct ReconReport {
  SplitMse overall;
  // Per artefact class: MSE over positions carrying that class's mask.
  std::array<std::optional<double>, noise::kClassCount> per_class_mse{};
  std::optional<double> interp_corrupt_mse;
  std::optional<double> ar_corrupt_mse;
  std::size_t examples = 0;

  nlohmann::json to_json() const;
};

struct SweepPoint {
  std::size_t run_length = 0;
  double model_mse = 0.0;
  double interp_mse = 0.0;
  double ar_mse = 0.0;
  std::size_t segments = 0;
};

std::string sweep_curve_csv(std::span<const SweepPoint> curve,
                            double SweepPoint::*column);

}  // namespace cleanctg::eval
