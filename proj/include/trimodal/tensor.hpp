#pragma once

// Dense row-major tensors and a define-by-run reverse-mode autodiff graph.
//
// Graph tensors are rank 2 (scalars are 1x1, vectors are 1xN).  There is no
// implicit broadcasting: shapes must match exactly unless `broadcast` is used.
// A Graph records one node per operation in construction order; `backward`
// walks the nodes in exact reverse order, so gradients are deterministic for a
// fixed graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trimodal/error.hpp"

namespace trimodal {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  bool requires_grad = false;
  std::vector<T> grad;  // empty, or values.size() entries

  Tensor() = default;
  Tensor(Shape s, std::vector<T> v, bool rg = false) : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    validate();
  }

  static Tensor zeros(Shape s, bool rg = false) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)), rg);
  }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

  T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  void zero_grad() {
    if (requires_grad) grad.assign(values.size(), T(0));
    else grad.clear();
  }

  void validate() const {
    for (std::size_t d : shape)
      if (d == 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape));
    if (shape_size(shape) != values.size())
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    if (!grad.empty() && grad.size() != values.size()) throw ShapeError("gradient size does not match values");
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](T x) { return std::isfinite(x); });
  }
};

enum class OpKind {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kExp,
  kLog,
  kPow,
  kSum,
  kTranspose,
  kConcat,
  kSlice,
  kBroadcast,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kLayerNorm,
  kMaskedFill,
  kGelu,
  kGatherRows,
  kCosineMatrix,
};

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kPow: return "pow";
    case OpKind::kSum: return "sum";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kMaskedFill: return "masked_fill";
    case OpKind::kGelu: return "gelu";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kCosineMatrix: return "cosine_matrix";
  }
  return "unknown";
}

template <typename T>
class Graph;

// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& tensor() const { return graph->node(id).out; }
  const std::vector<T>& value() const { return tensor().values; }
  const Shape& shape() const { return tensor().shape; }
  std::size_t rows() const { return shape()[0]; }
  std::size_t cols() const { return shape()[1]; }
  T item() const {
    if (value().size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return value()[0];
  }
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor<T> out;
    Tensor<T>* param = nullptr;
    BackwardFn backward;
  };

  Graph() = default;
  // With track_grad false, no node requires a gradient and no backward
  // closures are kept (inference).
  explicit Graph(bool track_grad) : track_grad_(track_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Shape shape, std::vector<T> values) {
    Tensor<T> t(std::move(shape), std::move(values), false);
    check_finite(t, OpKind::kConstant);
    return push(OpKind::kConstant, {}, std::move(t), nullptr);
  }

  Var<T> constant(const Tensor<T>& t) { return constant(t.shape, t.values); }

  // Leaf node bound to an externally owned parameter. Repeated calls with the
  // same parameter return the same node, so its gradient accumulates once.
  Var<T> param(Tensor<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>{this, it->second};
    p.validate();
    if (p.shape.size() != 2) throw ShapeError("graph tensors must be rank 2, got " + shape_str(p.shape));
    check_finite(p, OpKind::kParameter);
    Tensor<T> t(p.shape, p.values, p.requires_grad && track_grad_);
    Var<T> v = push(OpKind::kParameter, {}, std::move(t), &p);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var<T> push(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> out, Tensor<T>* param, BackwardFn bw = {}) {
    if (out.shape.size() != 2) throw ShapeError("graph tensors must be rank 2, got " + shape_str(out.shape));
    if (kind != OpKind::kParameter) {
      out.requires_grad = false;
      for (std::size_t i : inputs) out.requires_grad = out.requires_grad || nodes_[i].out.requires_grad;
      check_finite(out, kind);
    }
    if (!track_grad_) bw = {};
    nodes_.push_back(Node{kind, std::move(inputs), std::move(out), param, std::move(bw)});
    return Var<T>{this, nodes_.size() - 1};
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].out.requires_grad; }

  // Gradient buffer of a node, allocated on first use.
  std::vector<T>& grad(std::size_t id) {
    auto& t = nodes_[id].out;
    if (t.grad.empty()) t.grad.assign(t.values.size(), T(0));
    return t.grad;
  }

  // Reverse sweep from a scalar node; parameter gradients are accumulated
  // into the bound parameters' grad buffers.
  void backward(Var<T> loss) {
    if (loss.graph != this) throw ShapeError("loss belongs to another graph");
    const auto& lt = nodes_[loss.id].out;
    if (lt.values.size() != 1) throw ShapeError("backward requires a scalar loss, got " + shape_str(lt.shape));
    for (auto& n : nodes_) n.out.grad.clear();
    if (!lt.requires_grad) return;
    grad(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.out.requires_grad || n.out.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        Tensor<T>& p = *n.param;
        if (p.grad.size() != p.values.size()) p.grad.assign(p.values.size(), T(0));
        for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.out.grad[k];
        for (T g : p.grad)
          if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter");
      }
    }
  }

 private:
  static void check_finite(const Tensor<T>& t, OpKind kind) {
    if (!t.all_finite()) throw NumericalError("non-finite value produced by " + std::string(op_name(kind)));
  }

  bool track_grad_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> param_nodes_;
};

namespace ad {

namespace detail {

template <typename T>
void same_graph(const Var<T>& a, const Var<T>& b) {
  if (a.graph != b.graph) throw ShapeError("operands belong to different graphs");
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, std::string_view op) {
  same_graph(a, b);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> blank(std::size_t r, std::size_t c) {
  return Tensor<T>::zeros({r, c});
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_graph(a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> out = detail::blank<T>(m, n);
  const T* A = a.value().data();
  const T* B = b.value().data();
  T* C = out.values.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return a.graph->push(OpKind::kMatmul, {a.id, b.id}, std::move(out), nullptr, [m, k, n](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0], ib = nd.inputs[1];
    const T* dC = nd.out.grad.data();
    if (g.requires_grad(ia)) {
      const T* B = g.node(ib).out.values.data();
      T* dA = g.grad(ia).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += dC[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
    }
    if (g.requires_grad(ib)) {
      const T* A = g.node(ia).out.values.data();
      T* dB = g.grad(ib).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * dC[i * n + j];
        }
    }
  });
}

namespace detail {

// Elementwise binary op with per-element partials da = f_a(x, y), db = f_b(x, y).
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(OpKind kind, Var<T> a, Var<T> b, F f, DA da, DB db) {
  same_shape(a, b, op_name(kind));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(x[i], y[i]);
  return a.graph->push(kind, {a.id, b.id}, std::move(out), nullptr, [da, db](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0], ib = nd.inputs[1];
    const auto& x = g.node(ia).out.values;
    const auto& y = g.node(ib).out.values;
    const auto& dy = nd.out.grad;
    if (g.requires_grad(ia)) {
      auto& gx = g.grad(ia);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i] * da(x[i], y[i]);
    }
    if (g.requires_grad(ib)) {
      auto& gy = g.grad(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += dy[i] * db(x[i], y[i]);
    }
  });
}

// Elementwise unary op; the derivative sees the input and the output.
template <typename T, typename F, typename D>
Var<T> unary(OpKind kind, Var<T> a, F f, D d) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(x[i]);
  return a.graph->push(kind, {a.id}, std::move(out), nullptr, [d](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    const auto& x = g.node(ia).out.values;
    const auto& y = nd.out.values;
    const auto& dy = nd.out.grad;
    auto& gx = g.grad(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i] * d(x[i], y[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::binary(
      OpKind::kAdd, a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return detail::binary(
      OpKind::kSub, a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::binary(
      OpKind::kMul, a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return detail::unary(
      OpKind::kScale, a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return detail::unary(
      OpKind::kExp, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  for (T x : a.value())
    if (!(x > T(0))) throw NumericalError("log of non-positive value");
  return detail::unary(
      OpKind::kLog, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> pow(Var<T> a, T p) {
  return detail::unary(
      OpKind::kPow, a, [p](T x) { return std::pow(x, p); }, [p](T x, T) { return p * std::pow(x, p - T(1)); });
}

// Tanh approximation of GELU.
template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  return detail::unary(
      OpKind::kGelu, a,
      [](T x) { return T(0.5) * x * (T(1) + std::tanh(k * (x + c * x * x * x))); },
      [](T x, T) {
        const T t = std::tanh(k * (x + c * x * x * x));
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * k * (T(1) + T(3) * c * x * x);
      });
}

// Sum over an axis, keeping it as size 1 (axis 0 -> 1xN, axis 1 -> Mx1).
template <typename T>
Var<T> sum(Var<T> a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("sum: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = axis == 0 ? detail::blank<T>(1, n) : detail::blank<T>(m, 1);
  const auto& x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[axis == 0 ? j : i] += x[i * n + j];
  return a.graph->push(OpKind::kSum, {a.id}, std::move(out), nullptr, [m, n, axis](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    const auto& dy = nd.out.grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += dy[axis == 0 ? j : i];
  });
}

template <typename T>
Var<T> mean(Var<T> a, int axis) {
  const std::size_t count = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), T(1) / static_cast<T>(count));
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  return sum(sum(a, 1), 0);
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = detail::blank<T>(n, m);
  const auto& x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[j * m + i] = x[i * n + j];
  return a.graph->push(OpKind::kTranspose, {a.id}, std::move(out), nullptr, [m, n](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    const auto& dy = nd.out.grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += dy[j * m + i];
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph<T>* g = parts[0].graph;
  const int other = 1 - axis;
  std::size_t total = 0;
  std::vector<std::size_t> ids, extents;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    if (p.shape()[other] != parts[0].shape()[other])
      throw ShapeError("concat: mismatched extent " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    ids.push_back(p.id);
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  const std::size_t fixed = parts[0].shape()[other];
  const std::size_t R = axis == 0 ? total : fixed, C = axis == 0 ? fixed : total;
  Tensor<T> out = detail::blank<T>(R, C);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& x = parts[q].value();
    const std::size_t pr = parts[q].rows(), pc = parts[q].cols();
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t r = axis == 0 ? offset + i : i, c = axis == 0 ? j : offset + j;
        out.values[r * C + c] = x[i * pc + j];
      }
    offset += extents[q];
  }
  return g->push(OpKind::kConcat, ids, std::move(out), nullptr, [axis, C, extents](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    std::size_t offset = 0;
    for (std::size_t q = 0; q < nd.inputs.size(); ++q) {
      const std::size_t iq = nd.inputs[q];
      if (g.requires_grad(iq)) {
        const auto& sh = g.node(iq).out.shape;
        auto& gx = g.grad(iq);
        for (std::size_t i = 0; i < sh[0]; ++i)
          for (std::size_t j = 0; j < sh[1]; ++j) {
            const std::size_t r = axis == 0 ? offset + i : i, c = axis == 0 ? j : offset + j;
            gx[i * sh[1] + j] += nd.out.grad[r * C + c];
          }
      }
      offset += extents[q];
    }
  });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts, int axis) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

// Contiguous range [start, start + len) along an axis.
template <typename T>
Var<T> slice(Var<T> a, int axis, std::size_t start, std::size_t len) {
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (len == 0 || start + len > extent)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) + ") out of " +
                     shape_str(a.shape()));
  const std::size_t R = axis == 0 ? len : m, C = axis == 0 ? n : len;
  Tensor<T> out = detail::blank<T>(R, C);
  const auto& x = a.value();
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j)
      out.values[i * C + j] = axis == 0 ? x[(start + i) * n + j] : x[i * n + start + j];
  return a.graph->push(OpKind::kSlice, {a.id}, std::move(out), nullptr,
                       [axis, start, n, R, C](Graph<T>& g, std::size_t self) {
                         const auto& nd = g.node(self);
                         const std::size_t ia = nd.inputs[0];
                         if (!g.requires_grad(ia)) return;
                         auto& gx = g.grad(ia);
                         for (std::size_t i = 0; i < R; ++i)
                           for (std::size_t j = 0; j < C; ++j)
                             gx[axis == 0 ? (start + i) * n + j : i * n + start + j] += nd.out.grad[i * C + j];
                       });
}

// Expand size-1 dimensions of `a` to `target`.
template <typename T>
Var<T> broadcast(Var<T> a, const Shape& target) {
  if (target.size() != 2) throw ShapeError("broadcast: target must be rank 2");
  const std::size_t m = a.rows(), n = a.cols();
  if ((m != 1 && m != target[0]) || (n != 1 && n != target[1]))
    throw ShapeError("broadcast: cannot expand " + shape_str(a.shape()) + " to " + shape_str(target));
  const std::size_t R = target[0], C = target[1];
  Tensor<T> out = detail::blank<T>(R, C);
  const auto& x = a.value();
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out.values[i * C + j] = x[(m == 1 ? 0 : i) * n + (n == 1 ? 0 : j)];
  return a.graph->push(OpKind::kBroadcast, {a.id}, std::move(out), nullptr, [m, n, R, C](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) gx[(m == 1 ? 0 : i) * n + (n == 1 ? 0 : j)] += nd.out.grad[i * C + j];
  });
}

// Row-wise softmax with max subtraction.
template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const std::size_t m = a.rows(), n = a.cols();
  const auto& x = a.value();
  for (T v : x)
    if (!std::isfinite(v)) throw NumericalError("softmax_rows: non-finite input");
  Tensor<T> out = detail::blank<T>(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    T* y = out.values.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return a.graph->push(OpKind::kSoftmaxRows, {a.id}, std::move(out), nullptr, [m, n](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    const auto& y = nd.out.values;
    const auto& dy = nd.out.grad;
    for (std::size_t i = 0; i < m; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
    }
  });
}

// Row-wise log-softmax; exact where softmax would underflow.
template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
  const std::size_t m = a.rows(), n = a.cols();
  const auto& x = a.value();
  for (T v : x)
    if (!std::isfinite(v)) throw NumericalError("log_softmax_rows: non-finite input");
  Tensor<T> out = detail::blank<T>(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] = row[j] - lz;
  }
  return a.graph->push(OpKind::kLogSoftmaxRows, {a.id}, std::move(out), nullptr, [m, n](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    const auto& y = nd.out.values;
    const auto& dy = nd.out.grad;
    for (std::size_t i = 0; i < m; ++i) {
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) total += dy[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += dy[i * n + j] - std::exp(y[i * n + j]) * total;
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

// Row-wise layer normalisation with 1xN gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  detail::same_graph(x, gain);
  detail::same_graph(x, bias);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.shape() != Shape{1, n} || bias.shape() != Shape{1, n})
    throw ShapeError("layer_norm: gain/bias must be " + shape_str({1, n}));
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> out = detail::blank<T>(m, n);
  std::vector<T> xhat(m * n), rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    rstd[i] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * rstd[i];
      out.values[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return x.graph->push(
      OpKind::kLayerNorm, {x.id, gain.id, bias.id}, std::move(out), nullptr,
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, std::size_t self) {
        const auto& nd = g.node(self);
        const std::size_t ix = nd.inputs[0], ig = nd.inputs[1], ib = nd.inputs[2];
        const auto& dy = nd.out.grad;
        if (g.requires_grad(ig)) {
          auto& gg = g.grad(ig);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * xhat[i * n + j];
        }
        if (g.requires_grad(ib)) {
          auto& gb = g.grad(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
        }
        if (g.requires_grad(ix)) {
          const auto& gv = g.node(ig).out.values;
          auto& gx = g.grad(ix);
          for (std::size_t i = 0; i < m; ++i) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const T d = dy[i * n + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[i * n + j];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = dy[i * n + j] * gv[j];
              gx[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
            }
          }
        }
      });
}

// Entries where mask is true are replaced by `fill` and receive no gradient.
template <typename T>
Var<T> masked_fill(Var<T> a, const std::vector<bool>& mask, T fill) {
  if (mask.size() != a.value().size()) throw ShapeError("masked_fill: mask size mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = mask[i] ? fill : x[i];
  return a.graph->push(OpKind::kMaskedFill, {a.id}, std::move(out), nullptr, [mask](Graph<T>& g, std::size_t self) {
    const auto& nd = g.node(self);
    const std::size_t ia = nd.inputs[0];
    if (!g.requires_grad(ia)) return;
    auto& gx = g.grad(ia);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!mask[i]) gx[i] += nd.out.grad[i];
  });
}

// Rows of `table` selected by `indices` (embedding lookup).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> indices) {
  const std::size_t vocab = table.rows(), n = table.cols();
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor<T> out = detail::blank<T>(idx.size(), n);
  const auto& x = table.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= vocab)
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range " + std::to_string(vocab));
    std::copy_n(x.data() + idx[r] * n, n, out.values.data() + r * n);
  }
  return table.graph->push(OpKind::kGatherRows, {table.id}, std::move(out), nullptr,
                           [n, idx = std::move(idx)](Graph<T>& g, std::size_t self) {
                             const auto& nd = g.node(self);
                             const std::size_t it = nd.inputs[0];
                             if (!g.requires_grad(it)) return;
                             auto& gt = g.grad(it);
                             for (std::size_t r = 0; r < idx.size(); ++r)
                               for (std::size_t j = 0; j < n; ++j) gt[idx[r] * n + j] += nd.out.grad[r * n + j];
                           });
}

inline constexpr double kCosineEps = 1e-12;

// (i, j) = a_i . b_j / (|a_i| |b_j| + eps), clamped to [-1, 1].
template <typename T>
Var<T> cosine_matrix(Var<T> a, Var<T> b) {
  detail::same_graph(a, b);
  if (a.cols() != b.cols())
    throw ShapeError("cosine_matrix: embedding width mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.rows(), p = b.rows(), n = a.cols();
  const auto& A = a.value();
  const auto& B = b.value();
  std::vector<T> na(m), nb(p);
  for (std::size_t i = 0; i < m; ++i) {
    T s = 0;
    for (std::size_t k = 0; k < n; ++k) s += A[i * n + k] * A[i * n + k];
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < p; ++j) {
    T s = 0;
    for (std::size_t k = 0; k < n; ++k) s += B[j * n + k] * B[j * n + k];
    nb[j] = std::sqrt(s);
  }
  Tensor<T> out = detail::blank<T>(m, p);
  std::vector<T> dots(m * p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      T d = 0;
      for (std::size_t k = 0; k < n; ++k) d += A[i * n + k] * B[j * n + k];
      dots[i * p + j] = d;
      const T c = d / (na[i] * nb[j] + static_cast<T>(kCosineEps));
      out.values[i * p + j] = std::clamp(c, T(-1), T(1));
    }
  return a.graph->push(
      OpKind::kCosineMatrix, {a.id, b.id}, std::move(out), nullptr,
      [m, p, n, na = std::move(na), nb = std::move(nb), dots = std::move(dots)](Graph<T>& g, std::size_t self) {
        const auto& nd = g.node(self);
        const std::size_t ia = nd.inputs[0], ib = nd.inputs[1];
        const auto& A = g.node(ia).out.values;
        const auto& B = g.node(ib).out.values;
        const auto& dy = nd.out.grad;
        const bool ga = g.requires_grad(ia), gb = g.requires_grad(ib);
        std::vector<T>* GA = ga ? &g.grad(ia) : nullptr;
        std::vector<T>* GB = gb ? &g.grad(ib) : nullptr;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            const T up = dy[i * p + j];
            if (up == T(0)) continue;
            const T D = na[i] * nb[j] + static_cast<T>(kCosineEps);
            const T N = dots[i * p + j];
            const T inv = T(1) / D;
            const T q = N * inv * inv;
            // d/da_i = b_j / D - N / D^2 * |b_j| * a_i / |a_i|
            if (ga) {
              const T ca = na[i] > T(0) ? q * nb[j] / na[i] : T(0);
              for (std::size_t k = 0; k < n; ++k) (*GA)[i * n + k] += up * (B[j * n + k] * inv - ca * A[i * n + k]);
            }
            if (gb) {
              const T cb = nb[j] > T(0) ? q * na[i] / nb[j] : T(0);
              for (std::size_t k = 0; k < n; ++k) (*GB)[j * n + k] += up * (A[i * n + k] * inv - cb * B[j * n + k]);
            }
          }
      });
}

// Row vector `bias` (1xN) added to every row of `x`.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> bias) {
  return add(x, broadcast(bias, x.shape()));
}

}  // namespace ad

}  // namespace trimodal
