#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cleanctg/common.hpp"

namespace cleanctg::nc {

using Shape = std::vector<std::size_t>;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

// Dense tensor of doubles with reverse-mode gradients. Handle semantics:
// copies share the node. Values are written once at construction; parameter
// tensors may be updated in place between graph builds.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  Tensor(Shape shape, double fill, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_vector(std::vector<double> v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaf tensors only (parameter updates)
  double value() const;                 // scalar convenience

  bool requires_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  // Reverse pass from a scalar tensor.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive, ops compute values only: no graph is recorded and outputs do
// not require grad. Used for inference paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise; b may match a's shape, be rank-1 matching a's last axis, or be
// a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
Tensor transpose(const Tensor& a);                // 2-D
Tensor reshape(const Tensor& a, Shape shape);

// x [Cin,L], w [Cout,Cin,K] (odd K), b [Cout]; stride 1, zero "same" padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor avg_pool1d(const Tensor& x, std::size_t window);  // [C,L] -> [C,L/window]

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor softmax(const Tensor& x, std::size_t axis);  // 2-D

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor mean_all(const Tensor& x);                  // -> [1]
Tensor sum_axis(const Tensor& x, std::size_t axis);  // 2-D -> 1-D

Tensor concat(std::span<const Tensor> xs, std::size_t axis);  // 1-D axis 0 or 2-D
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t stop);

// v [R] replicated to [R, cols]; gradient is the row sum.
Tensor broadcast_col(const Tensor& v, std::size_t cols);

// Scaled dot-product attention, logits divided by sqrt(d_k), d_k = D/heads.
// q [Tq,D]; k,v [Tk,D]. Throws config error when heads does not divide D.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

// Mean losses over all elements; BCE clamps probabilities to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& probs, const Tensor& targets);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Inverted-dropout with a caller-owned rng; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace cleanctg::nc
