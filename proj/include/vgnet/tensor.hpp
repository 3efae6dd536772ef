#pragma once

// Dense float64 tensors with reverse-mode differentiation. Each operation
// returns a fresh tensor whose node records its parents and a pull-style
// backward closure; backward(loss) replays the trace in reverse topological
// order exactly once per node, accumulating gradients additively across uses.
// Values are immutable once a node participates in a trace; only leaves may
// be mutated (optimizer updates, finite-difference probes) between traces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vgnet/common.hpp"

namespace vgnet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  if (s.empty()) return "scalar";
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  return os.str();
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // null for leaves

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> data) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(n);
  }

  static Tensor zeros(Shape shape) {
    std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape shape, double v) {
    std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return from({}, {v}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    std::size_t n = numel(shape);
    std::vector<double> d(n);
    for (auto& x : d) x = rng.normal(0.0, stddev);
    return from(std::move(shape), std::move(d));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  const std::vector<double>& values() const { return node_->value; }

  // Leaf mutation only: optimizer steps, batchnorm running buffers, tests.
  std::vector<double>& raw() { return node_->value; }

  double item() const {
    if (node_->value.size() != 1)
      throw std::runtime_error("item: tensor is not scalar, shape " + shape_str(node_->shape));
    return node_->value[0];
  }

  double at(std::initializer_list<std::size_t> idx) const {
    return node_->value[flat_index(idx)];
  }

  Tensor& set_requires_grad(bool rg = true) {
    node_->requires_grad = rg;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& grad() const {
    if (node_->grad.size() != node_->value.size())
      throw std::runtime_error("grad: no gradient recorded for this tensor");
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Fresh leaf holding a copy of the values; drops history and grad.
  Tensor detached_copy() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(n);
  }

  NodePtr node() const { return node_; }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size())
      throw std::invalid_argument("at: rank mismatch for shape " + shape_str(s));
    std::size_t off = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      if (i >= s[d]) throw std::out_of_range("at: index out of range");
      off = off * s[d] + i;
      ++d;
    }
    return off;
  }

  NodePtr node_;
};

// Builds a non-leaf node. If no parent requires grad the history is dropped
// so pure data pipelines do not grow a trace.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(n);
}

// The trace of a backward pass: parents before children.
using ComputeTrace = std::vector<TensorNode*>;

inline ComputeTrace trace_from(const Tensor& root) {
  ComputeTrace order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  TensorNode* r = root.node().get();
  if (!r->requires_grad) return order;
  stack.emplace_back(r, 0);
  seen.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }
  return order;
}

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::runtime_error("backward: loss must be scalar, got shape " +
                             shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::runtime_error("backward: loss does not depend on any differentiable tensor");
  ComputeTrace order = trace_from(loss);
  for (TensorNode* n : order) n->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting machinery (NumPy semantics: align right, 1s stretch).

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument(std::string(op) + ": shape mismatch (" + shape_str(a) +
                                  " vs " + shape_str(b) + ")");
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` aligned to broadcast result `out`; 0 where broadcast.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    std::size_t o = i + (out.size() - in.size());
    st[o] = (in[i] == 1) ? 0 : acc;
    acc *= in[i];
  }
  return st;
}

// Calls f(flat_out_index, off_a, off_b) for every element of `out`.
template <class F>
inline void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                               const std::vector<std::size_t>& sb, F&& f) {
  std::size_t total = numel(out);
  std::size_t r = out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t i = 0; i < total; ++i) {
    f(i, offa, offb);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out[d]) {
        offa += sa[d];
        offb += sb[d];
        break;
      }
      idx[d] = 0;
      offa -= sa[d] * (out[d] - 1);
      offb -= sb[d] * (out[d] - 1);
    }
  }
}

namespace detail {

enum class BinKind { add, sub, mul };

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinKind::add: return x + y;
      case BinKind::sub: return x - y;
      default: return x * y;
    }
  };
  if (as == bs) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(pa[i], pb[i]);
    NodePtr an = a.node(), bn = b.node();
    return make_op(as, std::move(out), {a, b}, [an, bn, kind](TensorNode& self) {
      std::size_t n = self.value.size();
      const double* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        if (kind == BinKind::mul) {
          const double* pb = bn->value.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        if (kind == BinKind::mul) {
          const double* pa = an->value.data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
        } else if (kind == BinKind::sub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }
  Shape os = broadcast_shape(as, bs, name);
  auto sa = broadcast_strides(as, os);
  auto sb = broadcast_strides(bs, os);
  std::vector<double> out(numel(os));
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t oa, std::size_t ob) {
    out[i] = apply(pa[oa], pb[ob]);
  });
  NodePtr an = a.node(), bn = b.node();
  return make_op(os, std::move(out), {a, b}, [an, bn, os, sa, sb, kind](TensorNode& self) {
    const double* g = self.grad.data();
    bool need_a = an->requires_grad;
    bool need_b = bn->requires_grad;
    if (need_a) an->ensure_grad();
    if (need_b) bn->ensure_grad();
    const double* pa = an->value.data();
    const double* pb = bn->value.data();
    double* ga = need_a ? an->grad.data() : nullptr;
    double* gb = need_b ? bn->grad.data() : nullptr;
    for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t oa, std::size_t ob) {
      double gi = g[i];
      switch (kind) {
        case BinKind::add:
          if (need_a) ga[oa] += gi;
          if (need_b) gb[ob] += gi;
          break;
        case BinKind::sub:
          if (need_a) ga[oa] += gi;
          if (need_b) gb[ob] -= gi;
          break;
        case BinKind::mul:
          if (need_a) ga[oa] += gi * pb[ob];
          if (need_b) gb[ob] += gi * pa[oa];
          break;
      }
    });
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, detail::BinKind::add, "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, detail::BinKind::sub, "sub");
}
inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, detail::BinKind::mul, "hadamard");
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return hadamard(a, b); }

inline Tensor scale(const Tensor& x, double c) {
  std::size_t n = x.size();
  std::vector<double> out(n);
  const double* p = x.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = c * p[i];
  NodePtr xn = x.node();
  return make_op(x.shape(), std::move(out), {x}, [xn, c](TensorNode& self) {
    xn->ensure_grad();
    double* g = xn->grad.data();
    const double* go = self.grad.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += c * go[i];
  });
}

// ---------------------------------------------------------------------------
// Unary activations.

namespace detail {

template <class Fwd, class BwdFromOut>
inline Tensor unary_from_output(const Tensor& x, Fwd fwd, BwdFromOut bwd) {
  std::size_t n = x.size();
  std::vector<double> out(n);
  const double* p = x.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(p[i]);
  NodePtr xn = x.node();
  return make_op(x.shape(), std::move(out), {x}, [xn, bwd](TensorNode& self) {
    xn->ensure_grad();
    double* g = xn->grad.data();
    const double* go = self.grad.data();
    const double* y = self.value.data();
    const double* xv = xn->value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += go[i] * bwd(xv[i], y[i]);
  });
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& x) {
  auto fwd = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
  };
  return detail::unary_from_output(x, fwd, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_from_output(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.2) {
  return detail::unary_from_output(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------------------
// Shape surgery.

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  NodePtr xn = x.node();
  return make_op(std::move(shape), x.values(), {x}, [xn](TensorNode& self) {
    xn->ensure_grad();
    double* g = xn->grad.data();
    const double* go = self.grad.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += go[i];
  });
}

inline Tensor transpose(const Tensor& x, std::vector<std::size_t> perm) {
  const Shape& s = x.shape();
  std::size_t r = s.size();
  if (perm.size() != r) throw std::invalid_argument("transpose: permutation rank mismatch");
  std::vector<bool> used(r, false);
  for (std::size_t p : perm) {
    if (p >= r || used[p]) throw std::invalid_argument("transpose: invalid permutation");
    used[p] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  Shape os(r);
  std::vector<std::size_t> ostrides_in(r);  // input stride per output dim
  for (std::size_t i = 0; i < r; ++i) {
    os[i] = s[perm[i]];
    ostrides_in[i] = in_strides[perm[i]];
  }
  std::size_t total = x.size();
  std::vector<double> out(total);
  const double* p = x.values().data();
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < total; ++i) {
      out[i] = p[off];
      for (std::size_t d = r; d-- > 0;) {
        if (++idx[d] < os[d]) {
          off += ostrides_in[d];
          break;
        }
        idx[d] = 0;
        off -= ostrides_in[d] * (os[d] - 1);
      }
    }
  }
  NodePtr xn = x.node();
  return make_op(std::move(os), std::move(out), {x}, [xn, ostrides_in](TensorNode& self) {
    xn->ensure_grad();
    double* g = xn->grad.data();
    const double* go = self.grad.data();
    const Shape& os = self.shape;
    std::size_t r = os.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      g[off] += go[i];
      for (std::size_t d = r; d-- > 0;) {
        if (++idx[d] < os[d]) {
          off += ostrides_in[d];
          break;
        }
        idx[d] = 0;
        off -= ostrides_in[d] * (os[d] - 1);
      }
    }
  });
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  std::size_t r = s0.size();
  if (axis >= r) throw std::invalid_argument("concat: axis out of range");
  Shape os = s0;
  os[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != r) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < r; ++d)
      if (d != axis && s[d] != s0[d])
        throw std::invalid_argument("concat: shape mismatch (" + shape_str(s0) + " vs " +
                                    shape_str(s) + ")");
    os[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < r; ++d) inner *= s0[d];
  std::vector<double> out(numel(os));
  std::size_t out_row = os[axis] * inner;
  std::size_t col0 = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    offsets.push_back(col0);
    std::size_t block = x.shape()[axis] * inner;
    const double* p = x.values().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(p + o * block, p + (o + 1) * block, out.data() + o * out_row + col0);
    col0 += block;
  }
  std::vector<NodePtr> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return make_op(os, std::move(out), xs,
                 [nodes, offsets, outer, inner, out_row](TensorNode& self) {
                   const double* go = self.grad.data();
                   for (std::size_t k = 0; k < nodes.size(); ++k) {
                     const NodePtr& p = nodes[k];
                     if (!p->requires_grad) continue;
                     p->ensure_grad();
                     std::size_t block = p->value.size() / outer;
                     double* g = p->grad.data();
                     for (std::size_t o = 0; o < outer; ++o) {
                       const double* src = go + o * out_row + offsets[k];
                       double* dst = g + o * block;
                       for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

// Contiguous slice along one axis.
inline Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("narrow: axis out of range");
  if (start + len > s[axis]) throw std::invalid_argument("narrow: slice out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape os = s;
  os[axis] = len;
  std::vector<double> out(numel(os));
  const double* p = x.values().data();
  std::size_t in_row = s[axis] * inner, out_row = len * inner, shift = start * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(p + o * in_row + shift, p + o * in_row + shift + out_row,
              out.data() + o * out_row);
  NodePtr xn = x.node();
  return make_op(std::move(os), std::move(out), {x},
                 [xn, outer, in_row, out_row, shift](TensorNode& self) {
                   xn->ensure_grad();
                   double* g = xn->grad.data();
                   const double* go = self.grad.data();
                   for (std::size_t o = 0; o < outer; ++o) {
                     double* dst = g + o * in_row + shift;
                     const double* src = go + o * out_row;
                     for (std::size_t i = 0; i < out_row; ++i) dst[i] += src[i];
                   }
                 });
}

// Select one index along an axis; the axis is dropped.
inline Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  const Shape& s = x.shape();
  Tensor sliced = narrow(x, axis, index, 1);
  Shape os;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) os.push_back(s[d]);
  return reshape(sliced, os);
}

// ---------------------------------------------------------------------------
// Reductions.

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  NodePtr xn = x.node();
  return make_op({}, {acc}, {x}, [xn](TensorNode& self) {
    xn->ensure_grad();
    double g = self.grad[0];
    for (auto& v : xn->grad) v += g;
  });
}

inline Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("sum: axis out of range");
  std::size_t outer = 1, inner = 1, len = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape os;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(s[d]);
    }
  }
  std::vector<double> out(outer * inner, 0.0);
  const double* p = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t t = 0; t < len; ++t) {
      const double* row = p + (o * len + t) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  NodePtr xn = x.node();
  return make_op(std::move(os), std::move(out), {x},
                 [xn, outer, inner, len](TensorNode& self) {
                   xn->ensure_grad();
                   double* g = xn->grad.data();
                   const double* go = self.grad.data();
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t t = 0; t < len; ++t) {
                       double* dst = g + (o * len + t) * inner;
                       const double* src = go + o * inner;
                       for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                     }
                 });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

inline Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false) {
  std::size_t len = x.shape().at(axis);
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

// ---------------------------------------------------------------------------
// Matrix multiplication, batched over leading dimensions.

namespace detail {

// c (PxR) += op(a) . op(b) with logical dims P,Q,R; row-major raw buffers.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t P, std::size_t Q,
                     std::size_t R, bool ta, bool tb) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < P; ++i) {
      const double* arow = a + i * Q;
      double* crow = c + i * R;
      for (std::size_t k = 0; k < Q; ++k) {
        double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = b + k * R;
        for (std::size_t j = 0; j < R; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {  // b physically RxQ
    for (std::size_t i = 0; i < P; ++i) {
      const double* arow = a + i * Q;
      double* crow = c + i * R;
      for (std::size_t j = 0; j < R; ++j) {
        const double* brow = b + j * Q;
        double acc = 0.0;
        for (std::size_t k = 0; k < Q; ++k) acc += arow[k] * brow[k];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {  // a physically QxP
    for (std::size_t k = 0; k < Q; ++k) {
      const double* arow = a + k * P;
      const double* brow = b + k * R;
      for (std::size_t i = 0; i < P; ++i) {
        double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * R;
        for (std::size_t j = 0; j < R; ++j) crow[j] += av * brow[j];
      }
    }
  } else {  // a QxP, b RxQ
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < R; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < Q; ++k) acc += a[k * P + i] * b[j * Q + k];
        c[i * R + j] += acc;
      }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw std::invalid_argument("matmul: operands must have rank >= 2 (" + shape_str(as) +
                                " vs " + shape_str(bs) + ")");
  std::size_t P = as[as.size() - 2], Q = as[as.size() - 1];
  std::size_t Qb = bs[bs.size() - 2], R = bs[bs.size() - 1];
  if (Q != Qb)
    throw std::invalid_argument("matmul: inner dimensions mismatch (" + shape_str(as) + " vs " +
                                shape_str(bs) + ")");
  Shape abatch(as.begin(), as.end() - 2);
  Shape bbatch(bs.begin(), bs.end() - 2);
  if (!abatch.empty() && !bbatch.empty() && abatch != bbatch)
    throw std::invalid_argument("matmul: batch dimensions mismatch (" + shape_str(as) + " vs " +
                                shape_str(bs) + ")");
  Shape batch = abatch.empty() ? bbatch : abatch;
  std::size_t nb = numel(batch);
  bool abroad = abatch.empty() && !batch.empty();
  bool bbroad = bbatch.empty() && !batch.empty();
  Shape os = batch;
  os.push_back(P);
  os.push_back(R);
  std::vector<double> out(numel(os), 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < nb; ++i)
    detail::gemm_acc(pa + (abroad ? 0 : i * P * Q), pb + (bbroad ? 0 : i * Q * R),
                     out.data() + i * P * R, P, Q, R, false, false);
  NodePtr an = a.node(), bn = b.node();
  return make_op(std::move(os), std::move(out), {a, b},
                 [an, bn, P, Q, R, nb, abroad, bbroad](TensorNode& self) {
                   const double* go = self.grad.data();
                   const double* pa = an->value.data();
                   const double* pb = bn->value.data();
                   if (an->requires_grad) {
                     an->ensure_grad();
                     double* ga = an->grad.data();
                     for (std::size_t i = 0; i < nb; ++i)
                       detail::gemm_acc(go + i * P * R, pb + (bbroad ? 0 : i * Q * R),
                                        ga + (abroad ? 0 : i * P * Q), P, R, Q, false, true);
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     double* gb = bn->grad.data();
                     for (std::size_t i = 0; i < nb; ++i)
                       detail::gemm_acc(pa + (abroad ? 0 : i * P * Q), go + i * P * R,
                                        gb + (bbroad ? 0 : i * Q * R), Q, P, R, true, false);
                   }
                 });
}

// Contracts the last axis of x with a 2-D weight: (..., Q) . (Q, R) -> (..., R).
inline Tensor linear(const Tensor& x, const Tensor& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.empty() || ws.size() != 2)
    throw std::invalid_argument("linear: need (..., Q) input and (Q, R) weight, got " +
                                shape_str(xs) + " and " + shape_str(ws));
  std::size_t Q = xs.back(), R = ws[1];
  if (ws[0] != Q)
    throw std::invalid_argument("linear: width mismatch (" + shape_str(xs) + " vs " +
                                shape_str(ws) + ")");
  std::size_t L = x.size() / Q;
  Shape os = xs;
  os.back() = R;
  std::vector<double> out(L * R, 0.0);
  detail::gemm_acc(x.values().data(), w.values().data(), out.data(), L, Q, R, false, false);
  NodePtr xn = x.node(), wn = w.node();
  return make_op(std::move(os), std::move(out), {x, w}, [xn, wn, L, Q, R](TensorNode& self) {
    const double* go = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      detail::gemm_acc(go, wn->value.data(), xn->grad.data(), L, R, Q, false, true);
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      detail::gemm_acc(xn->value.data(), go, wn->grad.data(), Q, L, R, true, false);
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax along an axis with an optional 0/1 mask (broadcastable to x).
// Masked positions produce exactly 0 and receive no probability mass.

inline Tensor softmax(const Tensor& x, std::size_t axis, const Tensor& mask = Tensor()) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw std::invalid_argument("softmax: axis out of range");
  std::size_t outer = 1, inner = 1, len = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];

  std::vector<unsigned char> keep;  // materialized mask over x's full shape
  if (mask.defined()) {
    Shape ms = broadcast_shape(s, mask.shape(), "softmax mask");
    if (ms != s)
      throw std::invalid_argument("softmax: mask shape " + shape_str(mask.shape()) +
                                  " does not broadcast to " + shape_str(s));
    keep.resize(x.size());
    auto sx = broadcast_strides(s, s);
    auto sm = broadcast_strides(mask.shape(), s);
    const double* pm = mask.values().data();
    for_each_broadcast(s, sx, sm, [&](std::size_t i, std::size_t, std::size_t om) {
      keep[i] = pm[om] != 0.0 ? 1 : 0;
    });
  }

  std::vector<double> out(x.size());
  const double* p = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < len; ++t) {
        std::size_t k = (o * len + t) * inner + in;
        if (keep.empty() || keep[k]) mx = std::max(mx, p[k]);
      }
      if (mx == -std::numeric_limits<double>::infinity())
        throw std::runtime_error("softmax: a lane has every position masked out");
      double z = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        std::size_t k = (o * len + t) * inner + in;
        if (keep.empty() || keep[k]) {
          out[k] = std::exp(p[k] - mx);
          z += out[k];
        } else {
          out[k] = 0.0;
        }
      }
      for (std::size_t t = 0; t < len; ++t) out[(o * len + t) * inner + in] /= z;
    }
  NodePtr xn = x.node();
  return make_op(s, std::move(out), {x}, [xn, outer, inner, len](TensorNode& self) {
    xn->ensure_grad();
    double* g = xn->grad.data();
    const double* go = self.grad.data();
    const double* y = self.value.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          std::size_t k = (o * len + t) * inner + in;
          dot += go[k] * y[k];
        }
        for (std::size_t t = 0; t < len; ++t) {
          std::size_t k = (o * len + t) * inner + in;
          g[k] += y[k] * (go[k] - dot);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Same-length 1-D convolution over the second-to-last axis, channels last.
// x: (..., M, Cin), kernel: (K, Cin, Cout) with odd K; zero padding.

inline Tensor conv1d_same(const Tensor& x, const Tensor& kernel) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() < 2 || ks.size() != 3)
    throw std::invalid_argument("conv1d_same: need (..., M, Cin) input and (K, Cin, Cout) "
                                "kernel, got " + shape_str(xs) + " and " + shape_str(ks));
  std::size_t M = xs[xs.size() - 2], Cin = xs[xs.size() - 1];
  std::size_t K = ks[0], Cout = ks[2];
  if (K % 2 == 0)
    throw std::invalid_argument("conv1d_same: kernel size must be odd, got " +
                                std::to_string(K));
  if (ks[1] != Cin)
    throw std::invalid_argument("conv1d_same: channel mismatch (" + shape_str(xs) + " vs " +
                                shape_str(ks) + ")");
  std::size_t B = x.size() / (M * Cin);
  std::size_t half = K / 2;
  Shape os = xs;
  os.back() = Cout;
  std::vector<double> out(B * M * Cout, 0.0);
  const double* px = x.values().data();
  const double* pk = kernel.values().data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = px + b * M * Cin;
    double* ob = out.data() + b * M * Cout;
    for (std::size_t m = 0; m < M; ++m) {
      double* orow = ob + m * Cout;
      for (std::size_t k = 0; k < K; ++k) {
        std::ptrdiff_t t = static_cast<std::ptrdiff_t>(m + k) - static_cast<std::ptrdiff_t>(half);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(M)) continue;
        const double* xrow = xb + t * Cin;
        const double* krow = pk + k * Cin * Cout;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          double xv = xrow[ci];
          if (xv == 0.0) continue;
          const double* kk = krow + ci * Cout;
          for (std::size_t co = 0; co < Cout; ++co) orow[co] += xv * kk[co];
        }
      }
    }
  }
  NodePtr xn = x.node(), kn = kernel.node();
  return make_op(std::move(os), std::move(out), {x, kernel},
                 [xn, kn, B, M, Cin, Cout, K, half](TensorNode& self) {
                   const double* go = self.grad.data();
                   const double* px = xn->value.data();
                   const double* pk = kn->value.data();
                   bool need_x = xn->requires_grad, need_k = kn->requires_grad;
                   if (need_x) xn->ensure_grad();
                   if (need_k) kn->ensure_grad();
                   double* gx = need_x ? xn->grad.data() : nullptr;
                   double* gk = need_k ? kn->grad.data() : nullptr;
                   for (std::size_t b = 0; b < B; ++b) {
                     const double* xb = px + b * M * Cin;
                     const double* gb = go + b * M * Cout;
                     for (std::size_t m = 0; m < M; ++m) {
                       const double* grow = gb + m * Cout;
                       for (std::size_t k = 0; k < K; ++k) {
                         std::ptrdiff_t t = static_cast<std::ptrdiff_t>(m + k) -
                                            static_cast<std::ptrdiff_t>(half);
                         if (t < 0 || t >= static_cast<std::ptrdiff_t>(M)) continue;
                         const double* krow = pk + k * Cin * Cout;
                         const double* xrow = xb + t * Cin;
                         for (std::size_t ci = 0; ci < Cin; ++ci) {
                           const double* kk = krow + ci * Cout;
                           if (need_x) {
                             double acc = 0.0;
                             for (std::size_t co = 0; co < Cout; ++co)
                               acc += grow[co] * kk[co];
                             gx[b * M * Cin + t * Cin + ci] += acc;
                           }
                           if (need_k) {
                             double xv = xrow[ci];
                             if (xv != 0.0) {
                               double* gkk = gk + k * Cin * Cout + ci * Cout;
                               for (std::size_t co = 0; co < Cout; ++co)
                                 gkk[co] += xv * grow[co];
                             }
                           }
                         }
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Batch normalization over all leading axes, feature channels on the last
// axis. Training mode uses batch statistics and folds them into the running
// buffers (momentum 0.1 by default); eval mode reads the buffers only.

inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        Tensor running_mean, Tensor running_var, bool train,
                        double momentum = 0.1, double eps = 1e-5) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("batchnorm: input must have rank >= 1");
  std::size_t C = s.back();
  std::size_t rows = x.size() / C;
  auto check_param = [C](const Tensor& t, const char* name) {
    if (t.size() != C)
      throw std::invalid_argument(std::string("batchnorm: ") + name + " must have " +
                                  std::to_string(C) + " entries, got shape " +
                                  shape_str(t.shape()));
  };
  check_param(gamma, "gamma");
  check_param(beta, "beta");
  check_param(running_mean, "running_mean");
  check_param(running_var, "running_var");

  std::vector<double> mu(C, 0.0), var(C, 0.0);
  const double* p = x.values().data();
  if (train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) mu[c] += p[r * C + c];
    for (std::size_t c = 0; c < C; ++c) mu[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        double d = p[r * C + c] - mu[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(rows);
    auto& rm = running_mean.raw();
    auto& rv = running_var.raw();
    for (std::size_t c = 0; c < C; ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mu[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c];
    }
  } else {
    const auto& rm = running_mean.values();
    const auto& rv = running_var.values();
    mu.assign(rm.begin(), rm.end());
    var.assign(rv.begin(), rv.end());
  }

  std::vector<double> inv(C);
  for (std::size_t c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);
  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  const double* pg = gamma.values().data();
  const double* pbta = beta.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t k = r * C + c;
      xhat[k] = (p[k] - mu[c]) * inv[c];
      out[k] = pg[c] * xhat[k] + pbta[c];
    }

  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op(s, std::move(out), {x, gamma, beta},
                 [xn, gn, bn, rows, C, inv, xhat = std::move(xhat), train](TensorNode& self) {
                   const double* go = self.grad.data();
                   const double* pg = gn->value.data();
                   std::vector<double> sg(C, 0.0), sgx(C, 0.0);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t c = 0; c < C; ++c) {
                       std::size_t k = r * C + c;
                       sg[c] += go[k];
                       sgx[c] += go[k] * xhat[k];
                     }
                   if (gn->requires_grad) {
                     gn->ensure_grad();
                     for (std::size_t c = 0; c < C; ++c) gn->grad[c] += sgx[c];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t c = 0; c < C; ++c) bn->grad[c] += sg[c];
                   }
                   if (xn->requires_grad) {
                     xn->ensure_grad();
                     double* gx = xn->grad.data();
                     double n = static_cast<double>(rows);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < C; ++c) {
                         std::size_t k = r * C + c;
                         if (train) {
                           gx[k] += pg[c] * inv[c] *
                                    (go[k] - sg[c] / n - xhat[k] * sgx[c] / n);
                         } else {
                           gx[k] += pg[c] * inv[c] * go[k];
                         }
                       }
                   }
                 });
}

}  // namespace vgnet
