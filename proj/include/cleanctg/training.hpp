#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cleanctg/dataset.hpp"
#include "cleanctg/detector.hpp"
#include "cleanctg/model.hpp"
#include "cleanctg/reconstructor.hpp"

namespace cleanctg::train {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int max_epochs = 30;
  int patience = 5;  // epochs without validation improvement
  double test_fraction = 0.05;
  double val_fraction = 0.10;  // of the training side
  std::uint64_t seed = 0;
  double lambda_bce = 1.0;
  double lambda_mse = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // stage 1: macro AU-ROC; stage 2: -val_loss
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_metric = 0.0;
  std::string metric_name;

  std::string metrics_csv() const;
};

// AU-ROC averaged over the classes with both labels present in `labels`;
// falls back to 0.5 when no class is scored.
double safe_macro_auroc(const std::vector<std::array<double, noise::kClassCount>>& probs,
                        const std::vector<std::array<int, noise::kClassCount>>& labels);

// Stage 1: multilabel BCE; keeps the checkpoint with the best validation
// macro AU-ROC (patience-based early stop). Deterministic given the seed.
TrainReport train_detector(const data::Dataset& ds, const data::Split& split,
                           const detect::DetectorConfig& dcfg, const TrainConfig& tcfg,
                           nc::ModelState& state);

// Stage 2: composite loss (mask BCE for halving/doubling + reconstruction
// MSE) against a frozen detector; refuses to run without stage-1 parameters.
TrainReport train_reconstructor(const data::Dataset& ds, const data::Split& split,
                                const nc::ModelState& detector_state,
                                const detect::DetectorConfig& dcfg,
                                const recon::ReconstructorConfig& rcfg, const TrainConfig& tcfg,
                                nc::ModelState& recon_state);

}  // namespace cleanctg::train
