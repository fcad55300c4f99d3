#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cleanctg/simulate.hpp"
#include "cleanctg/training.hpp"

using namespace cleanctg;
using namespace cleanctg::train;

namespace {

detect::DetectorConfig tiny_detector() {
  detect::DetectorConfig cfg;
  cfg.local_kernels = {3, 5};
  cfg.context_kernels = {9, 15};
  cfg.channels = 4;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.ffn_dim = 32;
  cfg.dropout = 0.1;
  return cfg;
}

recon::ReconstructorConfig tiny_reconstructor() {
  recon::ReconstructorConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.mask_layers = 1;
  cfg.denoise_layers = 1;
  cfg.ffn_dim = 32;
  cfg.dropout = 0.1;
  return cfg;
}

struct Fixture {
  data::Dataset ds;
  data::Split split;
};

Fixture make_fixture(std::size_t parents, std::uint64_t seed) {
  Fixture f;
  const auto cleans = sim::simulate_clean_segments(parents, sim::TraceConfig{}, seed);
  noise::InjectionConfig icfg;
  icfg.seed = seed;
  f.ds = data::build_dataset(cleans, icfg);
  f.split = data::split_dataset(f.ds, 0.1, 0.15, seed);
  return f;
}

}  // namespace

TEST_CASE("stage 1 smoke: loss decreases and the run is seed-reproducible") {
  const auto f = make_fixture(40, 11);
  TrainConfig tcfg;
  tcfg.max_epochs = 3;
  tcfg.batch = 32;
  tcfg.seed = 5;

  nc::ModelState state;
  const auto report = train_detector(f.ds, f.split, tiny_detector(), tcfg, state);
  REQUIRE(report.epochs.size() >= 2);
  CHECK(report.epochs.back().train_loss < report.epochs.front().train_loss);
  CHECK(report.best_epoch >= 1);

  nc::ModelState state2;
  const auto report2 = train_detector(f.ds, f.split, tiny_detector(), tcfg, state2);
  CHECK(report2.epochs.back().train_loss == report.epochs.back().train_loss);
  CHECK(state2.content_hash() == state.content_hash());
}

TEST_CASE("stage 2 smoke: frozen detector, decreasing composite loss") {
  const auto f = make_fixture(40, 12);
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.batch = 32;
  tcfg.seed = 6;

  nc::ModelState detector_state;
  train_detector(f.ds, f.split, tiny_detector(), tcfg, detector_state);
  const auto hash_before = detector_state.content_hash();

  nc::ModelState recon_state;
  const auto report = train_reconstructor(f.ds, f.split, detector_state, tiny_detector(),
                                          tiny_reconstructor(), tcfg, recon_state);
  CHECK(detector_state.content_hash() == hash_before);
  REQUIRE(report.epochs.size() == 2);
  CHECK(report.epochs.back().train_loss < report.epochs.front().train_loss);
  CHECK(recon_state.find("reconstructor.fuse.w") != nullptr);
}

TEST_CASE("stage 2 with lambda_mse = 0 still reduces the mask BCE") {
  const auto f = make_fixture(30, 13);
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.batch = 32;
  tcfg.seed = 7;
  tcfg.lambda_mse = 0.0;

  nc::ModelState detector_state;
  train_detector(f.ds, f.split, tiny_detector(), tcfg, detector_state);
  nc::ModelState recon_state;
  const auto report = train_reconstructor(f.ds, f.split, detector_state, tiny_detector(),
                                          tiny_reconstructor(), tcfg, recon_state);
  CHECK(report.epochs.back().train_loss < report.epochs.front().train_loss);
}

TEST_CASE("stage ordering is enforced") {
  const auto f = make_fixture(20, 14);
  TrainConfig tcfg;
  tcfg.max_epochs = 1;
  nc::ModelState empty_state;  // no stage-1 parameters
  nc::ModelState recon_state;
  try {
    train_reconstructor(f.ds, f.split, empty_state, tiny_detector(), tiny_reconstructor(), tcfg,
                        recon_state);
    FAIL("expected stage-order error");
  } catch (const ValidationError& e) {
    CHECK(e.code() == "stage-order");
  }
}

TEST_CASE("metrics CSV has the expected shape") {
  TrainReport report;
  report.epochs = {{1, 0.5, 0.4, 0.9}, {2, 0.3, 0.35, 0.93}};
  const auto csv = report.metrics_csv();
  CHECK(csv == "epoch,train_loss,val_loss,val_metric\n1,0.5,0.4,0.9\n2,0.3,0.35,0.93\n");
}
