#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cleanctg/tensor.hpp"
#include "test_util.hpp"

using namespace cleanctg;
using namespace cleanctg::nc;
using testutil::gradient_max_rel_error;
using testutil::random_tensor;

TEST_CASE("sigmoid value and derivative at zero") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor y = sigmoid(x);
  CHECK(y.value() == doctest::Approx(0.5));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("layer_norm of a constant vector returns its shift parameter") {
  Tensor x({1, 8}, 3.7);
  Rng rng(1);
  Tensor gain = random_tensor({8}, rng);
  Tensor bias = random_tensor({8}, rng);
  const Tensor y = layer_norm(x, gain, bias);
  for (std::size_t j = 0; j < 8; ++j)
    CHECK(y.data()[j] == doctest::Approx(bias.data()[j]).epsilon(1e-9));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(2);
  const Tensor x = random_tensor({6, 9}, rng, -4.0, 4.0, false);
  const Tensor y = softmax(x, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) s += y.data()[i * 9 + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("attention with identical context rows returns that row") {
  Rng rng(3);
  const Tensor q = random_tensor({5, 8}, rng, -1, 1, false);
  std::vector<double> row(8);
  for (auto& v : row) v = rng.uniform(-1, 1);
  std::vector<double> kv;
  for (int i = 0; i < 7; ++i) kv.insert(kv.end(), row.begin(), row.end());
  const Tensor k({7, 8}, kv), v({7, 8}, kv);
  const Tensor out = multi_head_attention(q, k, v, 2);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(out.data()[i * 8 + j] == doctest::Approx(row[j]).epsilon(1e-9));
}

TEST_CASE("matmul forward matches a hand example") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor y = matmul(a, b);
  CHECK(y.data() == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("shape errors are rejected") {
  const Tensor a({2, 3}, 1.0);
  const Tensor b({2, 3}, 1.0);
  CHECK_THROWS_AS(matmul(a, b), ValidationError);
  CHECK_THROWS_AS(multi_head_attention(a, a, a, 5), ValidationError);  // 5 does not divide 3
  CHECK_THROWS_AS(add(a, Tensor({4}, 1.0)), ValidationError);
}

TEST_CASE("gradient check: elementwise, reductions, losses") {
  Rng rng(17);
  for (int inst = 0; inst < 10; ++inst) {
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor vec = random_tensor({5}, rng);

    CHECK(gradient_max_rel_error([&] { return mean_all(mul(a, b)); }, {&a, &b}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(add(a, vec)); }, {&a, &vec}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(sub(a, b)); }, {&a, &b}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(gelu(a)); }, {&a}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(sigmoid(a)); }, {&a}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mse_loss(a, b); }, {&a}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(sum_axis(mul(a, a), 0)); }, {&a}) < 1e-4);
  }
}

TEST_CASE("gradient check: relu away from the kink") {
  Rng rng(18);
  for (int inst = 0; inst < 10; ++inst) {
    Tensor a = random_tensor({4, 5}, rng, 0.05, 1.0);
    Tensor b = random_tensor({4, 5}, rng, -1.0, -0.05);
    CHECK(gradient_max_rel_error([&] { return mean_all(relu(a)); }, {&a}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(relu(b)); }, {&b}) < 1e-4);
  }
}

TEST_CASE("gradient check: bce in the unclamped region") {
  Rng rng(19);
  for (int inst = 0; inst < 10; ++inst) {
    Tensor p = random_tensor({8}, rng, 0.05, 0.95);
    Tensor t = random_tensor({8}, rng, 0.0, 1.0, false);
    CHECK(gradient_max_rel_error([&] { return bce_loss(p, t); }, {&p}) < 1e-4);
  }
}

TEST_CASE("gradient check: matmul, transpose, conv1d, pooling") {
  Rng rng(20);
  for (int inst = 0; inst < 10; ++inst) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    CHECK(gradient_max_rel_error([&] { return mean_all(matmul(a, b)); }, {&a, &b}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(transpose(a)); }, {&a}) < 1e-4);

    Tensor x = random_tensor({2, 12}, rng);
    Tensor w = random_tensor({3, 2, 5}, rng);
    Tensor bias = random_tensor({3}, rng);
    CHECK(gradient_max_rel_error([&] { return mean_all(conv1d(x, w, bias)); },
                                 {&x, &w, &bias}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(avg_pool1d(x, 3)); }, {&x}) < 1e-4);
  }
}

TEST_CASE("gradient check: layer_norm, softmax, attention, concat/slice") {
  Rng rng(21);
  for (int inst = 0; inst < 10; ++inst) {
    Tensor x = random_tensor({4, 6}, rng);
    Tensor gain = random_tensor({6}, rng, 0.5, 1.5);
    Tensor bias = random_tensor({6}, rng);
    CHECK(gradient_max_rel_error([&] { return mean_all(layer_norm(x, gain, bias)); },
                                 {&x, &gain, &bias}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(softmax(x, 1)); }, {&x}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(softmax(x, 0)); }, {&x}) < 1e-4);

    Tensor q = random_tensor({3, 6}, rng);
    Tensor k = random_tensor({5, 6}, rng);
    Tensor v = random_tensor({5, 6}, rng);
    CHECK(gradient_max_rel_error(
              [&] { return mean_all(multi_head_attention(q, k, v, 3)); }, {&q, &k, &v}) < 1e-4);

    Tensor c1 = random_tensor({2, 3}, rng);
    Tensor c2 = random_tensor({2, 4}, rng);
    CHECK(gradient_max_rel_error(
              [&] {
                std::vector<Tensor> parts{c1, c2};
                return mean_all(mul(concat(parts, 1), concat(parts, 1)));
              },
              {&c1, &c2}) < 1e-4);
    CHECK(gradient_max_rel_error([&] { return mean_all(slice(c2, 1, 1, 3)); }, {&c2}) < 1e-4);
    Tensor vv = random_tensor({4}, rng);
    CHECK(gradient_max_rel_error([&] { return mean_all(mul(broadcast_col(vv, 3),
                                                           broadcast_col(vv, 3))); },
                                 {&vv}) < 1e-4);
  }
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Rng rng(30);
  Tensor a = random_tensor({3, 3}, rng);
  NoGradGuard ng;
  const Tensor y = mean_all(mul(a, a));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("forward determinism: same inputs, same bits") {
  Rng rng(31);
  const Tensor x = random_tensor({8, 8}, rng, -2, 2, false);
  const Tensor w = random_tensor({8, 8}, rng, -1, 1, false);
  const auto a = softmax(matmul(x, w), 1).data();
  const auto b = softmax(matmul(x, w), 1).data();
  CHECK(a == b);
}

TEST_CASE("dropout scales by 1/keep and is identity at rate 0") {
  Rng rng(32);
  Tensor x({100}, 1.0, true);
  Rng drop_rng(5);
  const Tensor y = dropout(x, 0.5, drop_rng);
  for (double v : y.data()) CHECK((v == 0.0 || v == doctest::Approx(2.0)));
  Rng drop2(5);
  const Tensor z = dropout(x, 0.0, drop2);
  CHECK(z.data() == x.data());
}
