#include "cleanctg/training.hpp"

#include "cleanctg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace cleanctg::train {

using nc::Tensor;

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ValidationError("config", "learning rate must be positive");
  if (batch < 1 || max_epochs < 1 || patience < 0)
    throw ValidationError("config", "bad batch/epoch/patience");
  if (test_fraction < 0.0 || test_fraction >= 1.0 || val_fraction < 0.0 || val_fraction >= 1.0)
    throw ValidationError("config", "split fractions must be in [0,1)");
  if (lambda_bce < 0.0 || lambda_mse < 0.0)
    throw ValidationError("config", "loss weights must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"lr", lr},
                        {"batch", batch},
                        {"max_epochs", max_epochs},
                        {"patience", patience},
                        {"test_fraction", test_fraction},
                        {"val_fraction", val_fraction},
                        {"seed", seed},
                        {"lambda_bce", lambda_bce},
                        {"lambda_mse", lambda_mse}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.lambda_bce = j.value("lambda_bce", cfg.lambda_bce);
  cfg.lambda_mse = j.value("lambda_mse", cfg.lambda_mse);
  cfg.validate();
  return cfg;
}

std::string TrainReport::metrics_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_metric\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_double(e.train_loss);
    out += ',';
    out += format_double(e.val_loss);
    out += ',';
    out += format_double(e.val_metric);
    out += '\n';
  }
  return out;
}

double safe_macro_auroc(const std::vector<std::array<double, noise::kClassCount>>& probs,
                        const std::vector<std::array<int, noise::kClassCount>>& labels) {
  double sum = 0.0;
  int counted = 0;
  for (std::size_t c = 0; c < noise::kClassCount; ++c) {
    std::vector<double> s(probs.size());
    std::vector<int> l(labels.size());
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s[i] = probs[i][c];
      l[i] = labels[i][c];
      (l[i] ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    sum += eval::auroc(s, l);
    ++counted;
  }
  return counted == 0 ? 0.5 : sum / counted;
}

namespace {

struct PreparedExample {
  signal::NormalizedSegment seg1;
  std::size_t record = 0;
  std::size_t offset = 0;
  Tensor labels;      // [5]
  Tensor mask_h;      // [60] ground truth
  Tensor mask_d;      // [60]
  Tensor clean60;     // [60] normalized clean target
  std::array<int, noise::kClassCount> labels_int{};
};

struct PreparedData {
  std::vector<signal::NormalizedSegment> parents;
  std::vector<PreparedExample> train, val;
};

PreparedExample prepare_example(const data::Dataset& ds, const data::ExampleRef& ref) {
  const auto in = data::make_input(ds, ref);
  PreparedExample ex;
  ex.seg1 = in.seg1;
  ex.record = ref.record;
  ex.offset = ref.offset;
  ex.labels = Tensor::from_vector({in.labels.begin(), in.labels.end()});
  auto to_double = [](const std::vector<std::uint8_t>& m) {
    std::vector<double> v(m.begin(), m.end());
    return Tensor::from_vector(std::move(v));
  };
  ex.mask_h = to_double(in.masks[static_cast<std::size_t>(noise::ArtefactClass::Halving)]);
  ex.mask_d = to_double(in.masks[static_cast<std::size_t>(noise::ArtefactClass::Doubling)]);
  ex.clean60 = Tensor::from_vector(in.clean_target);
  for (std::size_t c = 0; c < noise::kClassCount; ++c)
    ex.labels_int[c] = in.labels[c] > 0.5 ? 1 : 0;
  return ex;
}

PreparedData prepare(const data::Dataset& ds, const data::Split& split) {
  PreparedData out;
  out.parents.reserve(ds.records.size());
  for (const auto& rec : ds.records) out.parents.push_back(signal::normalize(rec.corrupted));
  out.train.reserve(split.train.size());
  for (const auto& ref : split.train) out.train.push_back(prepare_example(ds, ref));
  out.val.reserve(split.val.size());
  for (const auto& ref : split.val) out.val.push_back(prepare_example(ds, ref));
  return out;
}

using Snapshot = std::map<std::string, std::vector<double>>;

Snapshot snapshot_params(const nc::ModelState& state, const std::string& prefix) {
  Snapshot snap;
  for (const auto& name : state.names())
    if (name.rfind(prefix, 0) == 0) snap[name] = state.find(name)->data();
  return snap;
}

void restore_params(nc::ModelState& state, const Snapshot& snap) {
  for (const auto& [name, values] : snap) state.at(name).mutable_data() = values;
}

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss))
    throw RuntimeFailure("training",
                         "loss diverged (non-finite) at epoch " + std::to_string(epoch));
}

}  // namespace

TrainReport train_detector(const data::Dataset& ds, const data::Split& split,
                           const detect::DetectorConfig& dcfg, const TrainConfig& tcfg,
                           nc::ModelState& state) {
  tcfg.validate();
  if (split.train.empty() || split.val.empty())
    throw ValidationError("empty-dataset", "training requires non-empty train and val splits");

  Rng init_rng(tcfg.seed);
  detect::Detector det(dcfg, state, init_rng);
  const PreparedData prep = prepare(ds, split);

  nc::AdamOptimizer opt({.lr = tcfg.lr});
  Rng order_rng = Rng(tcfg.seed).fork(1);
  Rng dropout_rng = Rng(tcfg.seed).fork(2);

  TrainReport report;
  report.metric_name = "val_macro_auroc";
  Snapshot best;
  int stale = 0;

  std::vector<std::size_t> order(prep.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      // Per-example backward: gradients accumulate on the leaves and each
      // example's graph is released before the next forward.
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = prep.train[order[i]];
        const auto fwd =
            det.forward(ex.seg1, prep.parents[ex.record], ex.offset, true, &dropout_rng);
        const Tensor loss = nc::scale(nc::bce_loss(fwd.probs, ex.labels), inv_batch);
        check_finite(loss.value(), epoch);
        epoch_loss += loss.value() * static_cast<double>(stop - start);
        loss.backward();
      }
      opt.step(state);
    }

    // Validation in eval mode.
    std::vector<std::array<double, noise::kClassCount>> val_probs;
    std::vector<std::array<int, noise::kClassCount>> val_labels;
    double val_loss = 0.0;
    {
      nc::NoGradGuard ng;
      for (const auto& ex : prep.val) {
        const auto fwd = det.forward(ex.seg1, prep.parents[ex.record], ex.offset, false, nullptr);
        val_loss += nc::bce_loss(fwd.probs, ex.labels).value();
        std::array<double, noise::kClassCount> p{};
        for (std::size_t c = 0; c < noise::kClassCount; ++c) p[c] = fwd.probs.data()[c];
        val_probs.push_back(p);
        val_labels.push_back(ex.labels_int);
      }
    }
    val_loss /= static_cast<double>(prep.val.size());
    const double val_metric = safe_macro_auroc(val_probs, val_labels);

    report.epochs.push_back({epoch, epoch_loss / static_cast<double>(order.size()), val_loss,
                             val_metric});
    if (report.best_epoch < 0 || val_metric > report.best_val_metric) {
      report.best_epoch = epoch;
      report.best_val_metric = val_metric;
      best = snapshot_params(state, "detector.");
      stale = 0;
    } else if (++stale > tcfg.patience) {
      break;
    }
  }
  restore_params(state, best);
  return report;
}

TrainReport train_reconstructor(const data::Dataset& ds, const data::Split& split,
                                const nc::ModelState& detector_state,
                                const detect::DetectorConfig& dcfg,
                                const recon::ReconstructorConfig& rcfg, const TrainConfig& tcfg,
                                nc::ModelState& recon_state) {
  tcfg.validate();
  if (detector_state.find("detector.pool.queries") == nullptr)
    throw ValidationError("stage-order",
                          "stage 2 requires a stage-1 detector checkpoint");
  if (split.train.empty() || split.val.empty())
    throw ValidationError("empty-dataset", "training requires non-empty train and val splits");

  const detect::Detector det(dcfg, detector_state);
  const std::uint64_t detector_hash_before = detector_state.content_hash();

  Rng init_rng(tcfg.seed + 1);
  recon::Reconstructor rc(rcfg, recon_state, init_rng);
  const PreparedData prep = prepare(ds, split);

  // The detector is frozen: its outputs per example are constants, computed
  // once up front.
  struct Frozen {
    Tensor fused;
    std::array<bool, noise::kClassCount> gates{};
  };
  auto freeze = [&](const std::vector<PreparedExample>& exs) {
    std::vector<Frozen> out;
    out.reserve(exs.size());
    nc::NoGradGuard ng;
    for (const auto& ex : exs) {
      auto det_out = det.detect(ex.seg1, prep.parents[ex.record], ex.offset);
      out.push_back({std::move(det_out.fused), det_out.gates});
    }
    return out;
  };
  const std::vector<Frozen> frozen_train = freeze(prep.train);
  const std::vector<Frozen> frozen_val = freeze(prep.val);

  nc::AdamOptimizer opt({.lr = tcfg.lr});
  Rng order_rng = Rng(tcfg.seed).fork(3);
  Rng dropout_rng = Rng(tcfg.seed).fork(4);

  auto example_loss = [&](const PreparedExample& ex, const Frozen& fz, bool training,
                          Rng* rng) {
    const auto out = rc.forward(ex.seg1, fz.fused, fz.gates, training, rng);
    const std::vector<Tensor> masks{out.mask_halving, out.mask_doubling};
    const std::vector<Tensor> gts{ex.mask_h, ex.mask_d};
    const Tensor bce = nc::bce_loss(nc::concat(masks, 0), nc::concat(gts, 0));
    const Tensor mse = nc::mse_loss(out.cleaned, ex.clean60);
    return nc::add(nc::scale(bce, tcfg.lambda_bce), nc::scale(mse, tcfg.lambda_mse));
  };

  TrainReport report;
  report.metric_name = "val_loss";
  Snapshot best;
  int stale = 0;

  std::vector<std::size_t> order(prep.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const Tensor loss = nc::scale(
            example_loss(prep.train[order[i]], frozen_train[order[i]], true, &dropout_rng),
            inv_batch);
        check_finite(loss.value(), epoch);
        epoch_loss += loss.value() * static_cast<double>(stop - start);
        loss.backward();
      }
      opt.step(recon_state);
    }

    double val_loss = 0.0;
    {
      nc::NoGradGuard ng;
      for (std::size_t i = 0; i < prep.val.size(); ++i)
        val_loss += example_loss(prep.val[i], frozen_val[i], false, nullptr).value();
    }
    val_loss /= static_cast<double>(prep.val.size());

    report.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(order.size()), val_loss, -val_loss});
    if (report.best_epoch < 0 || -val_loss > report.best_val_metric) {
      report.best_epoch = epoch;
      report.best_val_metric = -val_loss;
      best = snapshot_params(recon_state, "reconstructor.");
      stale = 0;
    } else if (++stale > tcfg.patience) {
      break;
    }
  }
  restore_params(recon_state, best);

  if (detector_state.content_hash() != detector_hash_before)
    throw RuntimeFailure("training", "frozen detector parameters changed during stage 2");
  return report;
}

}  // namespace cleanctg::train
