#pragma once

// Dense tensor kernel with reverse-mode automatic differentiation.
//
// Tensors are cheap handles onto shared nodes. Ops record a backward closure
// on the output node whenever gradient mode is on and an input participates
// in differentiation; backward(loss) then walks the recorded graph once in
// reverse topological order. Gradients accumulate across backward calls until
// zero_grad(); running backward twice therefore doubles them.
//
// The scalar type is a template parameter: float for training, double for
// finite-difference checks. Every op validates that its output stayed finite
// and throws NonFiniteError otherwise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "uigroup/error.hpp"
#include "uigroup/rng.hpp"

namespace uigroup {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Thread-local gradient recording switch (tapes are per-thread).
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;            // empty until first accumulation
  bool requires_grad = false;     // leaf parameter
  bool needs_grad = false;        // participates in backward
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
void check_finite(const std::vector<S>& v, const char* op) {
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw NonFiniteError(std::string("non-finite value produced by ") + op);
}

}  // namespace detail

template <typename S>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static Tensor filled(Shape shape, S v, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), v);
    t.node_->shape = std::move(shape);
    t.node_->requires_grad = requires_grad;
    t.node_->needs_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw ShapeError("value count does not match shape " + shape_str(shape));
    detail::check_finite(values, "from");
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    t.node_->needs_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  static Tensor uniform(Shape shape, S lo, S hi, Rng& rng, bool requires_grad = false) {
    std::vector<S> vals(static_cast<std::size_t>(shape_numel(shape)));
    for (S& v : vals) v = static_cast<S>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return from(std::move(shape), std::move(vals), requires_grad);
  }

  // Xavier/Glorot uniform by explicit fans.
  static Tensor xavier(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng,
                       bool requires_grad = true) {
    const S limit = static_cast<S>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    return uniform(std::move(shape), -limit, limit, rng, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return node_->numel(); }

  const std::vector<S>& value() const& { return node_->value; }
  std::vector<S> value() && { return node_->value; }  // rvalue: detach a copy
  // Direct mutation for optimizers and loaders; bypasses the tape on purpose.
  std::vector<S>& raw_value() { return node_->value; }
  const std::vector<S>& grad() const& {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<S> grad() && {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  // Same values, no graph connection.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  S item() const {
    if (numel() != 1) throw ContractError("item() requires a single-element tensor");
    return node_->value[0];
  }

  S at(std::int64_t row, std::int64_t col) const {  // rank-2 convenience
    return node_->value[static_cast<std::size_t>(row * node_->shape[1] + col)];
  }

  NodePtr& node() { return node_; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <typename S, typename... Parents>
bool should_record(const Parents&... parents) {
  return grad_mode_flag() && (... || parents.node()->needs_grad);
}

template <typename S>
Tensor<S> make_result(Shape shape, std::vector<S> value, const char* op) {
  check_finite(value, op);
  return Tensor<S>::from(std::move(shape), std::move(value));
}

template <typename S>
void accumulate(Node<S>& target, const std::vector<S>& delta) {
  target.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) target.grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and structural ops

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  Tensor<S> r = detail::make_result(a.shape(), std::move(out), "add");
  if (detail::should_record<S>(a, b)) {
    r.node()->needs_grad = true;
    r.node()->parents = {a.node(), b.node()};
    r.node()->backward_fn = [](detail::Node<S>& self) {
      for (auto& p : self.parents)
        if (p->needs_grad) detail::accumulate(*p, self.grad);
    };
  }
  return r;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  Tensor<S> r = detail::make_result(a.shape(), std::move(out), "sub");
  if (detail::should_record<S>(a, b)) {
    r.node()->needs_grad = true;
    r.node()->parents = {a.node(), b.node()};
    r.node()->backward_fn = [](detail::Node<S>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.needs_grad) detail::accumulate(pa, self.grad);
      if (pb.needs_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
      }
    };
  }
  return r;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  Tensor<S> r = detail::make_result(a.shape(), std::move(out), "mul");
  if (detail::should_record<S>(a, b)) {
    r.node()->needs_grad = true;
    r.node()->parents = {a.node(), b.node()};
    r.node()->backward_fn = [](detail::Node<S>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.needs_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i] * pb.value[i];
      }
      if (pb.needs_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] += self.grad[i] * pa.value[i];
      }
    };
  }
  return r;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  Tensor<S> r = detail::make_result(a.shape(), std::move(out), "scale");
  if (detail::should_record<S>(a)) {
    r.node()->needs_grad = true;
    r.node()->parents = {a.node()};
    r.node()->backward_fn = [c](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
    };
  }
  return r;
}

// x[n,d] + row[1,d], broadcast over rows (bias add).
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& row) {
  if (x.rank() != 2 || row.rank() != 2 || row.dim(0) != 1 || row.dim(1) != x.dim(1))
    throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(row.shape()));
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<S> out(x.value().size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i * d + j)] =
          x.value()[static_cast<std::size_t>(i * d + j)] + row.value()[static_cast<std::size_t>(j)];
  Tensor<S> r = detail::make_result(x.shape(), std::move(out), "add_rowvec");
  if (detail::should_record<S>(x, row)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node(), row.node()};
    r.node()->backward_fn = [n, d](detail::Node<S>& self) {
      auto& px = *self.parents[0];
      auto& pr = *self.parents[1];
      if (px.needs_grad) detail::accumulate(px, self.grad);
      if (pr.needs_grad) {
        pr.ensure_grad();
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < d; ++j)
            pr.grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * d + j)];
      }
    };
  }
  return r;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m * n), S(0));
  const S* av = a.value().data();
  const S* bv = b.value().data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const S aip = av[i * k + p];
      const S* brow = bv + p * n;
      S* crow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  Tensor<S> r = detail::make_result({m, n}, std::move(out), "matmul");
  if (detail::should_record<S>(a, b)) {
    r.node()->needs_grad = true;
    r.node()->parents = {a.node(), b.node()};
    r.node()->backward_fn = [m, k, n](detail::Node<S>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const S* g = self.grad.data();
      if (pa.needs_grad) {  // dA = dC * B^T
        pa.ensure_grad();
        const S* bv = pb.value.data();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t p = 0; p < k; ++p) {
            S acc = S(0);
            const S* grow = g + i * n;
            const S* brow = bv + p * n;
            for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            pa.grad[static_cast<std::size_t>(i * k + p)] += acc;
          }
      }
      if (pb.needs_grad) {  // dB = A^T * dC
        pb.ensure_grad();
        const S* av = pa.value.data();
        for (std::int64_t p = 0; p < k; ++p)
          for (std::int64_t i = 0; i < m; ++i) {
            const S aip = av[i * k + p];
            const S* grow = g + i * n;
            S* brow = pb.grad.data() + p * n;
            for (std::int64_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
      }
    };
  }
  return r;
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("transpose2d: rank-2 required");
  const std::int64_t m = x.dim(0), n = x.dim(1);
  std::vector<S> out(x.value().size());
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j * m + i)] = x.value()[static_cast<std::size_t>(i * n + j)];
  Tensor<S> r = detail::make_result({n, m}, std::move(out), "transpose2d");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [m, n](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          p.grad[static_cast<std::size_t>(i * n + j)] += self.grad[static_cast<std::size_t>(j * m + i)];
    };
  }
  return r;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > S(0) ? x.value()[i] : S(0);
  Tensor<S> r = detail::make_result(x.shape(), std::move(out), "relu");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (p.value[i] > S(0)) p.grad[i] += self.grad[i];
    };
  }
  return r;
}

// Row-wise stable softmax along the last axis of a rank-2 tensor.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: rank-2 required");
  const std::int64_t n = x.dim(0), k = x.dim(1);
  std::vector<S> out(x.value().size());
  for (std::int64_t i = 0; i < n; ++i) {
    const S* row = x.value().data() + i * k;
    S* orow = out.data() + i * k;
    S mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::int64_t j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::int64_t j = 0; j < k; ++j) orow[j] /= sum;
  }
  Tensor<S> r = detail::make_result(x.shape(), std::move(out), "softmax_rows");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [n, k](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const S* y = self.value.data() + i * k;
        const S* g = self.grad.data() + i * k;
        S dot = S(0);
        for (std::int64_t j = 0; j < k; ++j) dot += g[j] * y[j];
        S* pg = p.grad.data() + i * k;
        for (std::int64_t j = 0; j < k; ++j) pg[j] += (g[j] - dot) * y[j];
      }
    };
  }
  return r;
}

// Row-wise layer normalization with affine parameters gamma/beta of shape [1,d].
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  if (x.rank() != 2) throw ShapeError("layer_norm: rank-2 required");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  if (gamma.shape() != Shape{1, d} || beta.shape() != Shape{1, d})
    throw ShapeError("layer_norm: gamma/beta must be [1," + std::to_string(d) + "]");

  std::vector<S> out(x.value().size());
  std::vector<S> xhat(x.value().size());
  std::vector<S> inv_std(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const S* row = x.value().data() + i * d;
    S mean = S(0);
    for (std::int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<S>(d);
    const S istd = S(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = istd;
    for (std::int64_t j = 0; j < d; ++j) {
      const S xh = (row[j] - mean) * istd;
      xhat[static_cast<std::size_t>(i * d + j)] = xh;
      out[static_cast<std::size_t>(i * d + j)] =
          gamma.value()[static_cast<std::size_t>(j)] * xh + beta.value()[static_cast<std::size_t>(j)];
    }
  }
  Tensor<S> r = detail::make_result(x.shape(), std::move(out), "layer_norm");
  if (detail::should_record<S>(x, gamma, beta)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node(), gamma.node(), beta.node()};
    r.node()->backward_fn = [n, d, xhat = std::move(xhat),
                             inv_std = std::move(inv_std)](detail::Node<S>& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      if (pg.needs_grad) pg.ensure_grad();
      if (pb.needs_grad) pb.ensure_grad();
      if (px.needs_grad) px.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const S* g = self.grad.data() + i * d;
        const S* xh = xhat.data() + i * d;
        if (pg.needs_grad)
          for (std::int64_t j = 0; j < d; ++j) pg.grad[static_cast<std::size_t>(j)] += g[j] * xh[j];
        if (pb.needs_grad)
          for (std::int64_t j = 0; j < d; ++j) pb.grad[static_cast<std::size_t>(j)] += g[j];
        if (px.needs_grad) {
          // dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          S mean_dxh = S(0), mean_dxh_xh = S(0);
          for (std::int64_t j = 0; j < d; ++j) {
            const S dxh = g[j] * pg.value[static_cast<std::size_t>(j)];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
          }
          mean_dxh /= static_cast<S>(d);
          mean_dxh_xh /= static_cast<S>(d);
          S* gx = px.grad.data() + i * d;
          const S istd = inv_std[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < d; ++j) {
            const S dxh = g[j] * pg.value[static_cast<std::size_t>(j)];
            gx[j] += istd * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// convolution stack primitives

// Valid cross-correlation: x[C,H,W] * w[OC,C,KH,KW] + b[OC], square stride.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride) {
  if (x.rank() != 3 || w.rank() != 4) throw ShapeError("conv2d: x must be rank-3, w rank-4");
  const std::int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::int64_t OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != C) throw ShapeError("conv2d: channel mismatch");
  if (b.shape() != Shape{OC}) throw ShapeError("conv2d: bias must be [out_channels]");
  if (stride < 1 || KH > H || KW > W) throw ShapeError("conv2d: kernel exceeds input");
  const std::int64_t OH = (H - KH) / stride + 1, OW = (W - KW) / stride + 1;

  std::vector<S> out(static_cast<std::size_t>(OC * OH * OW));
  const S* xv = x.value().data();
  const S* wv = w.value().data();
  for (std::int64_t oc = 0; oc < OC; ++oc) {
    const S bias = b.value()[static_cast<std::size_t>(oc)];
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        S acc = bias;
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t ky = 0; ky < KH; ++ky) {
            const S* xrow = xv + (c * H + oy * stride + ky) * W + ox * stride;
            const S* wrow = wv + ((oc * C + c) * KH + ky) * KW;
            for (std::int64_t kx = 0; kx < KW; ++kx) acc += xrow[kx] * wrow[kx];
          }
        out[static_cast<std::size_t>((oc * OH + oy) * OW + ox)] = acc;
      }
  }
  Tensor<S> r = detail::make_result({OC, OH, OW}, std::move(out), "conv2d");
  if (detail::should_record<S>(x, w, b)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node(), w.node(), b.node()};
    r.node()->backward_fn = [C, H, W, OC, KH, KW, OH, OW, stride](detail::Node<S>& self) {
      auto& px = *self.parents[0];
      auto& pw = *self.parents[1];
      auto& pb = *self.parents[2];
      const S* g = self.grad.data();
      if (pb.needs_grad) {
        pb.ensure_grad();
        for (std::int64_t oc = 0; oc < OC; ++oc) {
          S acc = S(0);
          const S* grow = g + oc * OH * OW;
          for (std::int64_t i = 0; i < OH * OW; ++i) acc += grow[i];
          pb.grad[static_cast<std::size_t>(oc)] += acc;
        }
      }
      if (pw.needs_grad) {
        pw.ensure_grad();
        const S* xv = px.value.data();
        for (std::int64_t oc = 0; oc < OC; ++oc)
          for (std::int64_t oy = 0; oy < OH; ++oy)
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              const S go = g[(oc * OH + oy) * OW + ox];
              for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t ky = 0; ky < KH; ++ky) {
                  const S* xrow = xv + (c * H + oy * stride + ky) * W + ox * stride;
                  S* wrow = pw.grad.data() + ((oc * C + c) * KH + ky) * KW;
                  for (std::int64_t kx = 0; kx < KW; ++kx) wrow[kx] += go * xrow[kx];
                }
            }
      }
      if (px.needs_grad) {
        px.ensure_grad();
        const S* wv = pw.value.data();
        for (std::int64_t oc = 0; oc < OC; ++oc)
          for (std::int64_t oy = 0; oy < OH; ++oy)
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              const S go = g[(oc * OH + oy) * OW + ox];
              for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t ky = 0; ky < KH; ++ky) {
                  S* xrow = px.grad.data() + (c * H + oy * stride + ky) * W + ox * stride;
                  const S* wrow = wv + ((oc * C + c) * KH + ky) * KW;
                  for (std::int64_t kx = 0; kx < KW; ++kx) xrow[kx] += go * wrow[kx];
                }
            }
      }
    };
  }
  return r;
}

// [C,H,W] -> [1,C] channel means.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool: rank-3 required");
  const std::int64_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<S> out(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    S acc = S(0);
    const S* base = x.value().data() + c * HW;
    for (std::int64_t i = 0; i < HW; ++i) acc += base[i];
    out[static_cast<std::size_t>(c)] = acc / static_cast<S>(HW);
  }
  Tensor<S> r = detail::make_result({1, C}, std::move(out), "global_avg_pool");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [C, HW](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::int64_t c = 0; c < C; ++c) {
        const S gc = self.grad[static_cast<std::size_t>(c)] / static_cast<S>(HW);
        S* base = p.grad.data() + c * HW;
        for (std::int64_t i = 0; i < HW; ++i) base[i] += gc;
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// lookup / reduction / reshaping ops

// Gathers table rows. Row 0 is the reserved padding row: lookups of index 0
// return zeros regardless of the stored values and never receive gradient.
template <typename S>
Tensor<S> embedding_rows(const Tensor<S>& table, const std::vector<int>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding_rows: table must be rank-2");
  const std::int64_t V = table.dim(0), d = table.dim(1);
  const std::int64_t n = static_cast<std::int64_t>(indices.size());
  std::vector<S> out(static_cast<std::size_t>(n * d), S(0));
  for (std::int64_t i = 0; i < n; ++i) {
    const int idx = indices[static_cast<std::size_t>(i)];
    if (idx < 0 || idx >= V)
      throw BoundsError("embedding index " + std::to_string(idx) + " out of [0," +
                        std::to_string(V) + ")");
    if (idx == 0) continue;
    const S* row = table.value().data() + static_cast<std::int64_t>(idx) * d;
    std::copy(row, row + d, out.begin() + i * d);
  }
  Tensor<S> r = detail::make_result({n, d}, std::move(out), "embedding_rows");
  if (detail::should_record<S>(table)) {
    r.node()->needs_grad = true;
    r.node()->parents = {table.node()};
    r.node()->backward_fn = [indices, d](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx == 0) continue;
        const S* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
        S* row = p.grad.data() + static_cast<std::int64_t>(idx) * d;
        for (std::int64_t j = 0; j < d; ++j) row[j] += g[j];
      }
    };
  }
  return r;
}

// [n,d] -> [1,d] column sums.
template <typename S>
Tensor<S> sum_rows(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("sum_rows: rank-2 required");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<S> out(static_cast<std::size_t>(d), S(0));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(j)] += x.value()[static_cast<std::size_t>(i * d + j)];
  Tensor<S> r = detail::make_result({1, d}, std::move(out), "sum_rows");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [n, d](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j)
          p.grad[static_cast<std::size_t>(i * d + j)] += self.grad[static_cast<std::size_t>(j)];
    };
  }
  return r;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S acc = S(0);
  for (S v : x.value()) acc += v;
  Tensor<S> r = detail::make_result<S>({1}, {acc}, "sum_all");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (S& g : p.grad) g += self.grad[0];
    };
  }
  return r;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, std::int64_t start, std::int64_t width) {
  if (x.rank() != 2) throw ShapeError("slice_cols: rank-2 required");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  if (start < 0 || width < 1 || start + width > d) throw ShapeError("slice_cols: bad range");
  std::vector<S> out(static_cast<std::size_t>(n * width));
  for (std::int64_t i = 0; i < n; ++i)
    std::copy(x.value().begin() + i * d + start, x.value().begin() + i * d + start + width,
              out.begin() + i * width);
  Tensor<S> r = detail::make_result({n, width}, std::move(out), "slice_cols");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [n, d, start, width](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < width; ++j)
          p.grad[static_cast<std::size_t>(i * d + start + j)] +=
              self.grad[static_cast<std::size_t>(i * width + j)];
    };
  }
  return r;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::int64_t n = parts[0].dim(0);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != n) throw ShapeError("concat_cols: row mismatch");
    total += p.dim(1);
  }
  std::vector<S> out(static_cast<std::size_t>(n * total));
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t w = p.dim(1);
    for (std::int64_t i = 0; i < n; ++i)
      std::copy(p.value().begin() + i * w, p.value().begin() + (i + 1) * w,
                out.begin() + i * total + off);
    off += w;
  }
  Tensor<S> r = detail::make_result({n, total}, std::move(out), "concat_cols");
  bool rec = grad_mode_flag();
  bool any = false;
  for (const auto& p : parts) any = any || p.node()->needs_grad;
  if (rec && any) {
    r.node()->needs_grad = true;
    for (const auto& p : parts) r.node()->parents.push_back(p.node());
    std::vector<std::int64_t> widths;
    for (const auto& p : parts) widths.push_back(p.dim(1));
    r.node()->backward_fn = [n, total, widths](detail::Node<S>& self) {
      std::int64_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        auto& p = *self.parents[k];
        const std::int64_t w = widths[k];
        if (p.needs_grad) {
          p.ensure_grad();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < w; ++j)
              p.grad[static_cast<std::size_t>(i * w + j)] +=
                  self.grad[static_cast<std::size_t>(i * total + off + j)];
        }
        off += w;
      }
    };
  }
  return r;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::int64_t d = parts[0].dim(1);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != d) throw ShapeError("concat_rows: column mismatch");
    total += p.dim(0);
  }
  std::vector<S> out;
  out.reserve(static_cast<std::size_t>(total * d));
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  Tensor<S> r = detail::make_result({total, d}, std::move(out), "concat_rows");
  bool any = false;
  for (const auto& p : parts) any = any || p.node()->needs_grad;
  if (grad_mode_flag() && any) {
    r.node()->needs_grad = true;
    for (const auto& p : parts) r.node()->parents.push_back(p.node());
    std::vector<std::int64_t> rows;
    for (const auto& p : parts) rows.push_back(p.dim(0));
    r.node()->backward_fn = [d, rows](detail::Node<S>& self) {
      std::int64_t off = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        auto& p = *self.parents[k];
        if (p.needs_grad) {
          p.ensure_grad();
          for (std::int64_t i = 0; i < rows[k] * d; ++i)
            p.grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(off * d + i)];
        }
        off += rows[k];
      }
    };
  }
  return r;
}

// Inverted dropout (training path). Callers skip this op entirely in eval
// mode, which makes eval the exact identity.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, S p, Rng& rng) {
  if (!(p >= S(0) && p < S(1))) throw ConfigError("dropout probability must be in [0,1)");
  if (p == S(0)) return x;
  const S keep_scale = S(1) / (S(1) - p);
  std::vector<S> mask(x.value().size());
  std::vector<S> out(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool keep = rng.uniform() >= static_cast<double>(p);
    mask[i] = keep ? keep_scale : S(0);
    out[i] = x.value()[i] * mask[i];
  }
  Tensor<S> r = detail::make_result(x.shape(), std::move(out), "dropout");
  if (detail::should_record<S>(x)) {
    r.node()->needs_grad = true;
    r.node()->parents = {x.node()};
    r.node()->backward_fn = [mask = std::move(mask)](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
    };
  }
  return r;
}

// Class-weighted mean of per-row negative log-likelihoods:
//   loss = sum_i w[t_i] * (-log softmax(logits_i)[t_i]) / sum_i w[t_i]
template <typename S>
Tensor<S> weighted_cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                                 const std::vector<S>& class_weights) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be rank-2");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n)
    throw ShapeError("cross_entropy: target count mismatch");
  if (static_cast<std::int64_t>(class_weights.size()) != k)
    throw ShapeError("cross_entropy: weight count mismatch");
  if (n == 0) throw ShapeError("cross_entropy: empty batch");

  std::vector<S> probs(logits.value().size());
  S weighted_nll = S(0), weight_sum = S(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k)
      throw BoundsError("cross_entropy: target " + std::to_string(t) + " out of [0," +
                        std::to_string(k) + ")");
    const S* row = logits.value().data() + i * k;
    S* prow = probs.data() + i * k;
    S mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::int64_t j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (std::int64_t j = 0; j < k; ++j) prow[j] /= sum;
    const S w = class_weights[static_cast<std::size_t>(t)];
    weighted_nll += w * -std::log(prow[t]);
    weight_sum += w;
  }
  if (!(weight_sum > S(0))) throw ContractError("cross_entropy: weights sum to zero");

  Tensor<S> r = detail::make_result<S>({1}, {weighted_nll / weight_sum}, "cross_entropy");
  if (detail::should_record<S>(logits)) {
    r.node()->needs_grad = true;
    r.node()->parents = {logits.node()};
    r.node()->backward_fn = [n, k, targets, class_weights, probs = std::move(probs),
                             weight_sum](detail::Node<S>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const S g = self.grad[0] / weight_sum;
      for (std::int64_t i = 0; i < n; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        const S w = class_weights[static_cast<std::size_t>(t)];
        const S* prow = probs.data() + i * k;
        S* grow = p.grad.data() + i * k;
        for (std::int64_t j = 0; j < k; ++j)
          grow[j] += g * w * (prow[j] - (j == t ? S(1) : S(0)));
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// backward pass

template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.numel() != 1) throw ContractError("backward requires a scalar loss");
  auto* root = loss.node().get();
  if (!root->needs_grad) return;  // nothing reachable requires grad

  // Post-order over the recorded graph: inputs appear before consumers.
  std::vector<detail::Node<S>*> order;
  std::unordered_set<detail::Node<S>*> visited;
  struct Item {
    detail::Node<S>* node;
    std::size_t next = 0;
  };
  std::vector<Item> stack{{root}};
  visited.insert(root);
  while (!stack.empty()) {
    Item& top = stack.back();
    if (top.next < top.node->parents.size()) {
      detail::Node<S>* parent = top.node->parents[top.next++].get();
      if (parent->needs_grad && visited.insert(parent).second) stack.push_back({parent});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  // Intermediate grads are scratch space for this pass; only leaf parameters
  // accumulate across backward calls.
  for (detail::Node<S>* node : order)
    if (!node->requires_grad) node->grad.assign(node->value.size(), S(0));

  root->ensure_grad();
  root->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<S>& node = **it;
    if (node.backward_fn) {
      node.ensure_grad();
      node.backward_fn(node);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam with classic L2 regularization (lambda * param added to the gradient
// before the moment updates).

template <typename S>
struct AdamState {
  S lr = S(1e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S l2_lambda = S(0);
  std::int64_t t = 0;
  std::vector<std::vector<S>> m, v;

  void init(const std::vector<Tensor<S>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value().size(), S(0));
      v.emplace_back(p.value().size(), S(0));
    }
    t = 0;
  }
};

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: state not initialized for this parameter list");
  ++state.t;
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta1), state.t));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(state.beta2), state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].raw_value();
    if (state.m[k].size() != value.size())
      throw ShapeError("adam_step: parameter shape changed");
    const bool has_grad = params[k].has_grad();
    const std::vector<S>* grad = has_grad ? &params[k].grad() : nullptr;
    for (std::size_t i = 0; i < value.size(); ++i) {
      S g = has_grad ? (*grad)[i] : S(0);
      g += state.l2_lambda * value[i];
      state.m[k][i] = state.beta1 * state.m[k][i] + (S(1) - state.beta1) * g;
      state.v[k][i] = state.beta2 * state.v[k][i] + (S(1) - state.beta2) * g * g;
      const S mhat = state.m[k][i] / bc1;
      const S vhat = state.v[k][i] / bc2;
      value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace uigroup
