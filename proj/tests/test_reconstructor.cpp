#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cleanctg/noise.hpp"
#include "cleanctg/reconstructor.hpp"
#include "test_util.hpp"

using namespace cleanctg;
using namespace cleanctg::recon;
using nc::Tensor;

namespace {

ReconstructorConfig tiny_config() {
  ReconstructorConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.mask_layers = 1;
  cfg.denoise_layers = 1;
  cfg.ffn_dim = 16;
  cfg.dropout = 0.0;
  return cfg;
}

signal::NormalizedSegment random_segment(Rng& rng, double missing_p = 0.0) {
  signal::NormalizedSegment seg;
  seg.values.resize(60);
  seg.missing_mask.assign(60, 0.0);
  for (std::size_t i = 0; i < 60; ++i) {
    if (missing_p > 0.0 && rng.bernoulli(missing_p)) {
      seg.values[i] = 0.0;
      seg.missing_mask[i] = 1.0;
    } else {
      seg.values[i] = rng.uniform(0.3, 0.8);
    }
  }
  return seg;
}

}  // namespace

TEST_CASE("math_correct: stated examples and bit-exact identity") {
  const Tensor x({60}, 0.5);
  const Tensor ones({60}, 1.0);
  const Tensor zeros({60}, 0.0);
  const Tensor doubled = Reconstructor::math_correct(x, ones, 2.0);
  for (double v : doubled.data()) CHECK(v == 1.0);

  Rng rng(1);
  const Tensor random_x = testutil::random_tensor({60}, rng, 0.1, 0.9, false);
  const Tensor same = Reconstructor::math_correct(random_x, zeros, 2.0);
  CHECK(same.data() == random_x.data());  // bit-exact
}

TEST_CASE("math_correct repairs injector halving exactly under the true mask") {
  signal::Segment10 seg;
  seg.source_id = "oracle";
  Rng rng(2);
  seg.values.resize(600);
  for (auto& v : seg.values) v = rng.uniform(110.0, 180.0);

  noise::InjectionConfig cfg;
  cfg.p_halving = 1.0;
  cfg.p_doubling = cfg.p_mhr = cfg.p_missing = cfg.p_spike = 0.0;
  cfg.compound_enabled = false;
  cfg.seed = 3;
  const auto rec = noise::inject(seg, cfg);

  // Normalized domain: halving scales linearly through zero, so the
  // multiplicative inverse is exact where no clamping occurred.
  const auto corrupted = signal::normalize(rec.corrupted);
  const auto clean = signal::normalize(rec.clean);
  std::vector<double> mask(rec.masks[0].begin(), rec.masks[0].end());
  const Tensor fixed = Reconstructor::math_correct(Tensor::from_vector(corrupted.values),
                                                   Tensor::from_vector(mask), 2.0);
  double mse = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < 600; ++i) {
    if (!rec.masks[0][i]) continue;
    const double d = fixed.data()[i] - clean.values[i];
    mse += d * d;
    ++count;
  }
  REQUIRE(count > 0);
  CHECK(mse / static_cast<double>(count) <= 1e-12);
}

TEST_CASE("predict_mask stays in (0,1); zero-weight head gives sigmoid(bias)") {
  Rng rng(4);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  Rng data_rng(5);
  const auto seg = random_segment(data_rng);
  const Tensor x = Tensor::from_vector(seg.values);
  const Tensor miss = Tensor::from_vector(seg.missing_mask);
  const Tensor fused = testutil::random_tensor({60, 8}, rng, -1, 1, false);

  const auto mask = rc.predict_mask(x, miss, fused, noise::ArtefactClass::Halving);
  for (double v : mask.soft.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  auto& w = state.at("reconstructor.mask0.out.w").mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  state.at("reconstructor.mask0.out.b").mutable_data()[0] = 0.7;
  const auto flat = rc.predict_mask(x, miss, fused, noise::ArtefactClass::Halving);
  const double expected = 1.0 / (1.0 + std::exp(-0.7));
  for (double v : flat.soft.data()) CHECK(v == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(rc.predict_mask(x, miss, fused, noise::ArtefactClass::Spike), ValidationError);
}

TEST_CASE("transformer_denoise: shape, range, determinism") {
  Rng rng(6);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  Rng data_rng(7);
  const auto seg = random_segment(data_rng, 0.2);
  const Tensor x = Tensor::from_vector(seg.values);
  const Tensor miss = Tensor::from_vector(seg.missing_mask);
  const Tensor fused = testutil::random_tensor({60, 8}, rng, -1, 1, false);

  const auto a = rc.transformer_denoise(x, miss, fused, noise::ArtefactClass::Missing);
  CHECK(a.shape() == nc::Shape{60});
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto b = rc.transformer_denoise(x, miss, fused, noise::ArtefactClass::Missing);
  CHECK(a.data() == b.data());
  CHECK_THROWS_AS(rc.transformer_denoise(x, miss, fused, noise::ArtefactClass::Halving),
                  ValidationError);
}

TEST_CASE("gate_combine is bit-exact per the gating equation") {
  Rng rng(8);
  const Tensor x = testutil::random_tensor({60}, rng, 0.0, 1.0, false);
  const Tensor xc = testutil::random_tensor({60}, rng, 0.0, 1.0, false);
  CHECK(Reconstructor::gate_combine(x, xc, false).data() == x.data());
  CHECK(Reconstructor::gate_combine(x, xc, true).data() == xc.data());
}

TEST_CASE("fusion: convexity and degenerate cases") {
  Rng rng(9);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  const Tensor fused = testutil::random_tensor({60, 8}, rng, -1, 1, false);
  const Tensor x = testutil::random_tensor({60}, rng, 0.2, 0.8, false);

  SUBCASE("identical candidates collapse to that value") {
    std::array<Tensor, 5> branches;
    const Tensor c = testutil::random_tensor({60}, rng, 0.2, 0.8, false);
    for (auto& b : branches) b = c;
    // Candidate rows differ from x only via c.
    Tensor weights;
    const Tensor out = rc.fuse(c, branches, fused, &weights);
    for (std::size_t i = 0; i < 60; ++i)
      CHECK(out.data()[i] == doctest::Approx(c.data()[i]).epsilon(1e-12));
    for (std::size_t t = 0; t < 60; ++t) {
      double sum = 0.0;
      for (std::size_t b = 0; b < 6; ++b) sum += weights.data()[t * 6 + b];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }

  SUBCASE("output lies within the candidate hull") {
    std::array<Tensor, 5> branches;
    for (auto& b : branches) b = testutil::random_tensor({60}, rng, 0.0, 1.0, false);
    const Tensor out = rc.fuse(x, branches, fused);
    for (std::size_t t = 0; t < 60; ++t) {
      double lo = x.data()[t], hi = x.data()[t];
      for (const auto& b : branches) {
        lo = std::min(lo, b.data()[t]);
        hi = std::max(hi, b.data()[t]);
      }
      CHECK(out.data()[t] >= lo - 1e-12);
      CHECK(out.data()[t] <= hi + 1e-12);
    }
  }
}

TEST_CASE("identity under silence: all gates off reproduces the input bit-exactly") {
  Rng rng(10);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  Rng data_rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto seg = random_segment(data_rng, 0.1);
    const Tensor fused = testutil::random_tensor({60, 8}, data_rng, -1, 1, false);
    const auto out = rc.forward(seg, fused, {false, false, false, false, false});
    CHECK(out.cleaned.data() == seg.values);  // bit-exact
  }
}

TEST_CASE("gated scaling branch applies the binarized mask at inference") {
  Rng rng(12);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  // Saturate the halving mask head positive: mask == 1 everywhere.
  auto& w = state.at("reconstructor.mask0.out.w").mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  state.at("reconstructor.mask0.out.b").mutable_data()[0] = 20.0;

  Rng data_rng(13);
  const auto seg = random_segment(data_rng);
  const Tensor fused = testutil::random_tensor({60, 8}, data_rng, -1, 1, false);
  const auto out = rc.forward(seg, fused, {true, false, false, false, false});
  const auto& halving_branch = out.branch[0];
  for (std::size_t i = 0; i < 60; ++i)
    CHECK(halving_branch.data()[i] == doctest::Approx(seg.values[i] * 2.0).epsilon(1e-12));
}

TEST_CASE("stage-2 composite gradient passes finite differences on a tiny config") {
  Rng rng(14);
  nc::ModelState state;
  Reconstructor rc(tiny_config(), state, rng);
  Rng data_rng(15);
  const auto seg = random_segment(data_rng, 0.1);
  const Tensor fused = testutil::random_tensor({60, 8}, data_rng, -1, 1, false);
  const Tensor clean_target = testutil::random_tensor({60}, data_rng, 0.2, 0.8, false);
  const Tensor gt_mask({60}, 0.0);

  std::vector<Tensor*> leaves;
  for (const auto& name : state.names()) leaves.push_back(&state.at(name));
  auto loss_fn = [&] {
    const auto out = rc.forward(seg, fused, {true, true, true, true, true}, true);
    const std::vector<Tensor> masks{out.mask_halving, out.mask_doubling};
    const std::vector<Tensor> gts{gt_mask, gt_mask};
    return nc::add(nc::bce_loss(nc::concat(masks, 0), nc::concat(gts, 0)),
                   nc::mse_loss(out.cleaned, clean_target));
  };
  Rng probe_rng(16);
  CHECK(testutil::gradient_sampled_rel_error(loss_fn, leaves, 2, probe_rng) < 1e-4);
}
