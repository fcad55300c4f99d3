#include "cleanctg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <Eigen/Core>

namespace cleanctg::nc {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void shape_error(const std::string& msg) { throw ValidationError("shape", msg); }

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->node()->requires_grad) return true;
  return false;
}

Tensor finish(NodePtr out, bool tracked, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward) {
  if (tracked) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward = std::move(backward);
  }
  return Tensor(std::move(out));
}

enum class Broadcast { Same, LastAxis, Scalar };

Broadcast resolve_broadcast(const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::Same;
  if (shape_size(b) == 1) return Broadcast::Scalar;
  if (b.size() == 1 && !a.empty() && b[0] == a.back()) return Broadcast::LastAxis;
  shape_error("incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

// Index of b's element aligned with a's flat index i.
inline std::size_t bcast_index(Broadcast k, std::size_t i, std::size_t bn) {
  switch (k) {
    case Broadcast::Same: return i;
    case Broadcast::Scalar: return 0;
    case Broadcast::LastAxis: return i % bn;
  }
  return 0;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size())
    shape_error("data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
  node_ = make_node(std::move(shape), std::move(data));
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  node_ = make_node(shape, std::vector<double>(shape_size(shape), fill));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::from_vector(std::vector<double> v, bool requires_grad) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) shape_error("axis out of range");
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

const std::vector<double>& Tensor::data() const { return node_->value; }

std::vector<double>& Tensor::mutable_data() {
  if (node_->backward) throw RuntimeFailure("graph", "cannot mutate a non-leaf tensor");
  return node_->value;
}

double Tensor::value() const {
  if (size() != 1) shape_error("value() requires a scalar tensor");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::backward() const {
  if (!node_ || node_->value.size() != 1)
    shape_error("backward() requires a defined scalar tensor");
  if (!node_->requires_grad) throw RuntimeFailure("graph", "tensor does not require grad");

  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->requires_grad) n->backward(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise binary ops

namespace {

template <typename Fwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd,
                 void (*bwd)(Node&, Node&, Node&, Broadcast)) {
  const auto kind = resolve_broadcast(a.shape(), b.shape());
  const std::size_t n = a.size();
  const std::size_t bn = b.size();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[bcast_index(kind, i, bn)]);
  const bool tracked = track({&a, &b});
  auto node = make_node(a.shape(), std::move(out));
  NodePtr pa = a.node(), pb = b.node();
  return finish(std::move(node), tracked, {pa, pb},
                [pa, pb, kind, bwd](Node& self) { bwd(self, *pa, *pb, kind); });
}

void add_bwd(Node& self, Node& a, Node& b, Broadcast kind) {
  if (a.requires_grad) {
    a.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) a.grad[i] += self.grad[i];
  }
  if (b.requires_grad) {
    b.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      b.grad[bcast_index(kind, i, b.size())] += self.grad[i];
  }
}

void sub_bwd(Node& self, Node& a, Node& b, Broadcast kind) {
  if (a.requires_grad) {
    a.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) a.grad[i] += self.grad[i];
  }
  if (b.requires_grad) {
    b.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      b.grad[bcast_index(kind, i, b.size())] -= self.grad[i];
  }
}

void mul_bwd(Node& self, Node& a, Node& b, Broadcast kind) {
  if (a.requires_grad) {
    a.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      a.grad[i] += self.grad[i] * b.value[bcast_index(kind, i, b.size())];
  }
  if (b.requires_grad) {
    b.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      b.grad[bcast_index(kind, i, b.size())] += self.grad[i] * a.value[i];
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x + y; }, add_bwd);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x - y; }, sub_bwd);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x * y; }, mul_bwd);
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * s;
  const bool tracked = track({&a});
  auto node = make_node(a.shape(), std::move(out));
  NodePtr pa = a.node();
  return finish(std::move(node), tracked, {pa}, [pa, s](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) pa->grad[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + s;
  const bool tracked = track({&a});
  auto node = make_node(a.shape(), std::move(out));
  NodePtr pa = a.node();
  return finish(std::move(node), tracked, {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul needs [M,K]x[K,N], got " + shape_str(a.shape()) + " x " +
                shape_str(b.shape()));
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    MapC A(a.data().data(), m, k), B(b.data().data(), k, n);
    MapM Y(out.data(), m, n);
    Y.noalias() = A * B;
  }
  const bool tracked = track({&a, &b});
  auto node = make_node({a.dim(0), b.dim(1)}, std::move(out));
  NodePtr pa = a.node(), pb = b.node();
  return finish(std::move(node), tracked, {pa, pb}, [pa, pb, m, k, n](Node& self) {
    MapC G(self.grad.data(), m, n);
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapM GA(pa->grad.data(), m, k);
      MapC B(pb->value.data(), k, n);
      GA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapM GB(pb->grad.data(), k, n);
      MapC A(pa->value.data(), m, k);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) shape_error("transpose needs a 2-D tensor");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  const bool tracked = track({&a});
  auto node = make_node({c, r}, std::move(out));
  NodePtr pa = a.node();
  return finish(std::move(node), tracked, {pa}, [pa, r, c](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) shape_error("reshape size mismatch");
  std::vector<double> out = a.data();
  const bool tracked = track({&a});
  auto node = make_node(std::move(shape), std::move(out));
  NodePtr pa = a.node();
  return finish(std::move(node), tracked, {pa}, [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

namespace {

// Unrolled patch matrix [cin*k, len]; zero padding outside the signal.
std::vector<double> im2col(const std::vector<double>& xv, std::size_t cin, std::size_t len,
                           std::size_t k, std::ptrdiff_t pad) {
  std::vector<double> col(cin * k * len, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* xrow = &xv[ci * len];
    for (std::size_t kk = 0; kk < k; ++kk) {
      double* crow = &col[(ci * k + kk) * len];
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - pad;
      const std::size_t t_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
      const std::size_t t_hi =
          shift > 0 ? len - static_cast<std::size_t>(shift) : len;
      for (std::size_t t = t_lo; t < t_hi; ++t)
        crow[t] = xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift)];
    }
  }
  return col;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 3) shape_error("conv1d needs x [Cin,L], w [Cout,Cin,K]");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) shape_error("conv1d channel mismatch");
  if (b.size() != cout) shape_error("conv1d bias size mismatch");
  if (k % 2 == 0) shape_error("conv1d requires an odd kernel size");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);

  auto col = im2col(x.data(), cin, len, k, pad);
  std::vector<double> out(cout * len);
  {
    MapC W(w.data().data(), static_cast<Eigen::Index>(cout),
           static_cast<Eigen::Index>(cin * k));
    MapC C(col.data(), static_cast<Eigen::Index>(cin * k), static_cast<Eigen::Index>(len));
    MapM Y(out.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(len));
    Y.noalias() = W * C;
  }
  for (std::size_t co = 0; co < cout; ++co) {
    const double bias = b.data()[co];
    for (std::size_t t = 0; t < len; ++t) out[co * len + t] += bias;
  }

  const bool tracked = track({&x, &w, &b});
  auto node = make_node({cout, len}, std::move(out));
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  return finish(std::move(node), tracked, {px, pw, pb},
                [px, pw, pb, cin, cout, len, k, pad, col = std::move(col)](Node& self) {
    const auto m = static_cast<Eigen::Index>(cout);
    const auto kk_rows = static_cast<Eigen::Index>(cin * k);
    const auto n = static_cast<Eigen::Index>(len);
    MapC G(self.grad.data(), m, n);
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t t = 0; t < len; ++t) pb->grad[co] += self.grad[co * len + t];
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      MapC C(col.data(), kk_rows, n);
      MapM GW(pw->grad.data(), m, kk_rows);
      GW.noalias() += G * C.transpose();
    }
    if (px->requires_grad) {
      px->ensure_grad();
      std::vector<double> gcol(cin * k * len);
      MapC W(pw->value.data(), m, kk_rows);
      MapM GC(gcol.data(), kk_rows, n);
      GC.noalias() = W.transpose() * G;
      // Scatter the column gradient back onto the padded input positions.
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* gx = &px->grad[ci * len];
        for (std::size_t kidx = 0; kidx < k; ++kidx) {
          const double* grow = &gcol[(ci * k + kidx) * len];
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kidx) - pad;
          const std::size_t t_lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t_hi = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
          for (std::size_t t = t_lo; t < t_hi; ++t)
            gx[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift)] += grow[t];
        }
      }
    }
  });
}

Tensor avg_pool1d(const Tensor& x, std::size_t window) {
  if (x.rank() != 2) shape_error("avg_pool1d needs a 2-D tensor");
  const std::size_t c = x.dim(0), len = x.dim(1);
  if (window == 0 || len % window != 0)
    shape_error("avg_pool1d window must divide the length");
  const std::size_t out_len = len / window;
  std::vector<double> out(c * out_len);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < out_len; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < window; ++i) acc += x.data()[ch * len + j * window + i];
      out[ch * out_len + j] = acc / static_cast<double>(window);
    }
  const bool tracked = track({&x});
  auto node = make_node({c, out_len}, std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, c, len, window, out_len](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    const double inv = 1.0 / static_cast<double>(window);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < out_len; ++j) {
        const double gy = self.grad[ch * out_len + j] * inv;
        for (std::size_t i = 0; i < window; ++i) px->grad[ch * len + j * window + i] += gy;
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Shape shape = x.shape();
  const std::size_t d = shape.back();
  const std::size_t rows = x.size() / d;
  if (gain.size() != d || bias.size() != d) shape_error("layer_norm gain/bias size mismatch");

  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x.data()[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mu) * inv;
      xhat[r * d + j] = xh;
      out[r * d + j] = gain.data()[j] * xh + bias.data()[j];
    }
  }
  const bool tracked = track({&x, &gain, &bias});
  auto node = make_node(std::move(shape), std::move(out));
  NodePtr px = x.node(), pg = gain.node(), pb = bias.node();
  return finish(std::move(node), tracked, {px, pg, pb},
                [px, pg, pb, d, rows, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Node& self) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = &self.grad[r * d];
      const double* xh = &xhat[r * d];
      if (pg->requires_grad) {
        pg->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) pg->grad[j] += gy[j] * xh[j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) pb->grad[j] += gy[j];
      }
      if (px->requires_grad) {
        px->ensure_grad();
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gj = gy[j] * pg->value[j];
          mean_g += gj;
          mean_gx += gj * xh[j];
        }
        mean_g /= static_cast<double>(d);
        mean_gx /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double gj = gy[j] * pg->value[j];
          px->grad[r * d + j] += inv_std[r] * (gj - mean_g - xh[j] * mean_gx);
        }
      }
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) shape_error("softmax needs a 2-D tensor and axis 0/1");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const std::size_t lines = axis == 1 ? r : c;
  const std::size_t lane = axis == 1 ? c : r;
  auto at = [axis, c](std::size_t line, std::size_t i) {
    return axis == 1 ? line * c + i : i * c + line;
  };
  std::vector<double> out(x.size());
  for (std::size_t l = 0; l < lines; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lane; ++i) mx = std::max(mx, x.data()[at(l, i)]);
    double sum = 0.0;
    for (std::size_t i = 0; i < lane; ++i) {
      const double e = std::exp(x.data()[at(l, i)] - mx);
      out[at(l, i)] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < lane; ++i) out[at(l, i)] /= sum;
  }
  const bool tracked = track({&x});
  auto node = make_node({r, c}, std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, lines, lane, at](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t l = 0; l < lines; ++l) {
      double dot = 0.0;
      for (std::size_t i = 0; i < lane; ++i) dot += self.grad[at(l, i)] * self.value[at(l, i)];
      for (std::size_t i = 0; i < lane; ++i) {
        const auto idx = at(l, i);
        px->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x.data()[i]);
  const bool tracked = track({&x});
  auto node = make_node(x.shape(), std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, df](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      px->grad[i] += self.grad[i] * df(px->value[i], self.value[i]);
  });
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary_op(
      x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

// ---------------------------------------------------------------------------
// reductions and reshuffles

Tensor mean_all(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const bool tracked = track({&x});
  auto node = make_node({1}, {acc / n});
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, n](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < px->value.size(); ++i) px->grad[i] += g;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) shape_error("sum_axis needs a 2-D tensor and axis 0/1");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const std::size_t out_n = axis == 1 ? r : c;
  std::vector<double> out(out_n, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 1 ? i : j] += x.data()[i * c + j];
  const bool tracked = track({&x});
  auto node = make_node({out_n}, std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, r, c, axis](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        px->grad[i * c + j] += self.grad[axis == 1 ? i : j];
  });
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) shape_error("concat of nothing");
  const std::size_t rank = xs.front().rank();
  if (rank == 1) {
    if (axis != 0) shape_error("concat axis out of range");
    std::size_t total = 0;
    for (const auto& t : xs) total += t.size();
    std::vector<double> out;
    out.reserve(total);
    for (const auto& t : xs) out.insert(out.end(), t.data().begin(), t.data().end());
    bool tracked = false;
    std::vector<NodePtr> parents;
    for (const auto& t : xs) {
      parents.push_back(t.node());
      tracked = tracked || (g_grad_enabled && t.requires_grad());
    }
    auto node = make_node({total}, std::move(out));
    return finish(std::move(node), tracked, parents, [parents](Node& self) {
      std::size_t off = 0;
      for (const auto& p : parents) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
        }
        off += p->value.size();
      }
    });
  }
  if (rank != 2 || axis > 1) shape_error("concat supports 1-D or 2-D tensors");
  const std::size_t fixed = axis == 0 ? xs.front().dim(1) : xs.front().dim(0);
  std::size_t total = 0;
  for (const auto& t : xs) {
    if (t.rank() != 2 || (axis == 0 ? t.dim(1) : t.dim(0)) != fixed)
      shape_error("concat shape mismatch");
    total += axis == 0 ? t.dim(0) : t.dim(1);
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const auto& t : xs) {
    const std::size_t tr = t.dim(0), tc = t.dim(1);
    for (std::size_t i = 0; i < tr; ++i)
      for (std::size_t j = 0; j < tc; ++j) {
        if (axis == 0)
          out[(off + i) * cols + j] = t.data()[i * tc + j];
        else
          out[i * cols + (off + j)] = t.data()[i * tc + j];
      }
    off += axis == 0 ? tr : tc;
  }
  bool tracked = false;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> sizes;
  for (const auto& t : xs) {
    parents.push_back(t.node());
    sizes.push_back(axis == 0 ? t.dim(0) : t.dim(1));
    tracked = tracked || (g_grad_enabled && t.requires_grad());
  }
  auto node = make_node({rows, cols}, std::move(out));
  return finish(std::move(node), tracked, parents,
                [parents, sizes, axis, cols](Node& self) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parents.size(); ++pi) {
      const auto& p = parents[pi];
      const std::size_t tr = p->shape[0], tc = p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < tr; ++i)
          for (std::size_t j = 0; j < tc; ++j) {
            const std::size_t src =
                axis == 0 ? (off + i) * cols + j : i * cols + (off + j);
            p->grad[i * tc + j] += self.grad[src];
          }
      }
      off += sizes[pi];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t stop) {
  if (start >= stop) shape_error("slice: empty range");
  if (x.rank() == 1) {
    if (axis != 0 || stop > x.dim(0)) shape_error("slice out of range");
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(start),
                            x.data().begin() + static_cast<std::ptrdiff_t>(stop));
    const bool tracked = track({&x});
    auto node = make_node({stop - start}, std::move(out));
    NodePtr px = x.node();
    return finish(std::move(node), tracked, {px}, [px, start](Node& self) {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) px->grad[start + i] += self.grad[i];
    });
  }
  if (x.rank() != 2 || axis > 1 || stop > x.dim(axis)) shape_error("slice out of range");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const std::size_t n = stop - start;
  const std::size_t rows = axis == 0 ? n : r;
  const std::size_t cols = axis == 0 ? c : n;
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t si = axis == 0 ? start + i : i;
      const std::size_t sj = axis == 1 ? start + j : j;
      out[i * cols + j] = x.data()[si * c + sj];
    }
  const bool tracked = track({&x});
  auto node = make_node({rows, cols}, std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, axis, start, rows, cols, c](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t si = axis == 0 ? start + i : i;
        const std::size_t sj = axis == 1 ? start + j : j;
        px->grad[si * c + sj] += self.grad[i * cols + j];
      }
  });
}

Tensor broadcast_col(const Tensor& v, std::size_t cols) {
  if (v.rank() != 1) shape_error("broadcast_col needs a 1-D tensor");
  const std::size_t r = v.dim(0);
  std::vector<double> out(r * cols);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = v.data()[i];
  const bool tracked = track({&v});
  auto node = make_node({r, cols}, std::move(out));
  NodePtr pv = v.node();
  return finish(std::move(node), tracked, {pv}, [pv, r, cols](Node& self) {
    if (!pv->requires_grad) return;
    pv->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += self.grad[i * cols + j];
      pv->grad[i] += acc;
    }
  });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    shape_error("attention needs 2-D q/k/v");
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0)
    throw ValidationError("config", "heads must divide d_model exactly");
  if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0))
    shape_error("attention shape mismatch");
  const std::size_t dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice(q, 1, h * dk, (h + 1) * dk);
    const Tensor kh = slice(k, 1, h * dk, (h + 1) * dk);
    const Tensor vh = slice(v, 1, h * dk, (h + 1) * dk);
    const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dk), 1);
    outs.push_back(matmul(weights, vh));
  }
  return concat(outs, 1);
}

// ---------------------------------------------------------------------------
// losses

Tensor bce_loss(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape()) shape_error("bce_loss shape mismatch");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double n = static_cast<double>(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.data()[i], lo, hi);
    const double t = targets.data()[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  const bool tracked = track({&probs, &targets});
  auto node = make_node({1}, {acc / n});
  NodePtr pp = probs.node(), pt = targets.node();
  return finish(std::move(node), tracked, {pp, pt}, [pp, pt, n](Node& self) {
    if (!pp->requires_grad) return;
    pp->ensure_grad();
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < pp->value.size(); ++i) {
      const double praw = pp->value[i];
      if (praw < lo || praw > hi) continue;  // clamped region, zero slope
      pp->grad[i] += g * (praw - pt->value[i]) / (praw * (1.0 - praw));
    }
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) shape_error("mse_loss shape mismatch");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  const bool tracked = track({&pred, &target});
  auto node = make_node({1}, {acc / n});
  NodePtr pa = pred.node(), pb = target.node();
  return finish(std::move(node), tracked, {pa, pb}, [pa, pb, n](Node& self) {
    const double g = self.grad[0] / n;
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < pa->value.size(); ++i)
        pa->grad[i] += g * 2.0 * (pa->value[i] - pb->value[i]);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < pb->value.size(); ++i)
        pb->grad[i] -= g * 2.0 * (pa->value[i] - pb->value[i]);
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ValidationError("config", "dropout rate must be in [0,1)");
  if (rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * mask[i];
  const bool tracked = track({&x});
  auto node = make_node(x.shape(), std::move(out));
  NodePtr px = x.node();
  return finish(std::move(node), tracked, {px}, [px, mask = std::move(mask)](Node& self) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) px->grad[i] += self.grad[i] * mask[i];
  });
}

}  // namespace cleanctg::nc
