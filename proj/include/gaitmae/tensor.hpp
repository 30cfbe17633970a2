#pragma once

// Small reverse-mode autodiff engine over dense double tensors. Every op
// builds a node in a dynamic graph; backward() runs the tape in reverse
// topological order with a fixed reduction order, so gradients are exactly
// reproducible run to run. Recording is skipped (and the graph not retained)
// when gradients are disabled or no input requires them.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace gaitmae {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

inline bool& grad_mode() {
  thread_local bool mode = true;
  return mode;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false, std::string name = "") {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor: data size does not match shape " +
                                  shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false, std::string name = "") {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad,
                     std::move(name));
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({}, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const {
    const int nd = ndim();
    if (i < 0) i += nd;
    if (i < 0 || i >= nd) throw std::invalid_argument("tensor: dim index out of range");
    return n_->shape[static_cast<std::size_t>(i)];
  }
  std::size_t numel() const { return n_->value.size(); }
  bool requires_grad() const { return n_->requires_grad; }
  const std::string& name() const { return n_->name; }

  std::vector<double>& values() { return n_->value; }
  const std::vector<double>& values() const { return n_->value; }
  double* data() { return n_->value.data(); }
  const double* data() const { return n_->value.data(); }

  double item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() needs 1 element");
    return n_->value[0];
  }

  std::vector<double>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

namespace autodiff {

// Create the output node, wiring parents and the backward closure only when
// the tape is recording.
inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::vector<NodePtr> parents,
                          std::function<void(TensorNode&)> backward_fn) {
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p->requires_grad;
  const bool record = grad_mode() && any_grad;
  Tensor out = Tensor::from_data(std::move(shape), std::move(value), record);
  if (record) {
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace autodiff

// Run reverse-mode accumulation from a scalar loss. Parameter gradients
// accumulate across calls; call zero_grad between steps.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad())
    throw std::invalid_argument("backward: loss does not require grad");

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  std::vector<NodePtr> keep_alive;  // graph is alive via `loss`; raw walk is safe
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (!seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) n->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Broadcasting machinery (NumPy alignment rules, right-aligned).

namespace autodiff {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int nd = static_cast<int>(std::max(a.size(), b.size()));
  Shape out(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d) {
    const int ad = d < nd - static_cast<int>(a.size())
                       ? 1
                       : a[static_cast<std::size_t>(d - (nd - static_cast<int>(a.size())))];
    const int bd = d < nd - static_cast<int>(b.size())
                       ? 1
                       : b[static_cast<std::size_t>(d - (nd - static_cast<int>(b.size())))];
    if (ad != bd && ad != 1 && bd != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) +
                                  " and " + shape_str(b));
    out[static_cast<std::size_t>(d)] = std::max(ad, bd);
  }
  return out;
}

// Per-dimension element strides of `s` padded/broadcast to `out`; broadcast
// dimensions get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  const int nd = static_cast<int>(out.size());
  const int pad = nd - static_cast<int>(s.size());
  std::vector<std::size_t> strides(static_cast<std::size_t>(nd), 0);
  std::size_t acc = 1;
  for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
    const int dim = s[static_cast<std::size_t>(d)];
    strides[static_cast<std::size_t>(d + pad)] = (dim == 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(dim);
  }
  return strides;
}

// Iterate the broadcast index space, calling f(out_linear, a_linear, b_linear).
template <typename F>
inline void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                               const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_numel(out);
  const int nd = static_cast<int>(out.size());
  if (nd == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<int> counter(static_cast<std::size_t>(nd), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    f(i, ia, ib);
    for (int d = nd - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++counter[du];
      ia += sa[du];
      ib += sb[du];
      if (counter[du] < out[du]) break;
      counter[du] = 0;
      ia -= sa[du] * static_cast<std::size_t>(out[du]);
      ib -= sb[du] * static_cast<std::size_t>(out[du]);
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinaryKind kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t total = shape_numel(out_shape);
  std::vector<double> value(total);

  const bool same = a.shape() == b.shape();
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const double* pa = a.data();
  const double* pb = b.data();

  if (same) {
    switch (kind) {
      case BinaryKind::kAdd:
        for (std::size_t i = 0; i < total; ++i) value[i] = pa[i] + pb[i];
        break;
      case BinaryKind::kSub:
        for (std::size_t i = 0; i < total; ++i) value[i] = pa[i] - pb[i];
        break;
      case BinaryKind::kMul:
        for (std::size_t i = 0; i < total; ++i) value[i] = pa[i] * pb[i];
        break;
    }
  } else {
    switch (kind) {
      case BinaryKind::kAdd:
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia,
                                                  std::size_t ib) {
          value[i] = pa[ia] + pb[ib];
        });
        break;
      case BinaryKind::kSub:
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia,
                                                  std::size_t ib) {
          value[i] = pa[ia] - pb[ib];
        });
        break;
      case BinaryKind::kMul:
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia,
                                                  std::size_t ib) {
          value[i] = pa[ia] * pb[ib];
        });
        break;
    }
  }

  NodePtr na = a.node(), nb = b.node();
  return make_result(
      out_shape, std::move(value), {na, nb},
      [na, nb, out_shape, sa, sb, same, kind](TensorNode& out) {
        const std::size_t total = out.grad.size();
        const double* g = out.grad.data();
        double* ga = nullptr;
        double* gb = nullptr;
        if (na->requires_grad) {
          na->ensure_grad();
          ga = na->grad.data();
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          gb = nb->grad.data();
        }
        const double* va = na->value.data();
        const double* vb = nb->value.data();
        if (same) {
          for (std::size_t i = 0; i < total; ++i) {
            switch (kind) {
              case BinaryKind::kAdd:
                if (ga) ga[i] += g[i];
                if (gb) gb[i] += g[i];
                break;
              case BinaryKind::kSub:
                if (ga) ga[i] += g[i];
                if (gb) gb[i] -= g[i];
                break;
              case BinaryKind::kMul:
                if (ga) ga[i] += g[i] * vb[i];
                if (gb) gb[i] += g[i] * va[i];
                break;
            }
          }
        } else {
          for_each_broadcast(out_shape, sa, sb,
                             [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               switch (kind) {
                                 case BinaryKind::kAdd:
                                   if (ga) ga[ia] += g[i];
                                   if (gb) gb[ib] += g[i];
                                   break;
                                 case BinaryKind::kSub:
                                   if (ga) ga[ia] += g[i];
                                   if (gb) gb[ib] -= g[i];
                                   break;
                                 case BinaryKind::kMul:
                                   if (ga) ga[ia] += g[i] * vb[ib];
                                   if (gb) gb[ib] += g[i] * va[ia];
                                   break;
                               }
                             });
        }
      });
}

}  // namespace autodiff

inline Tensor add(const Tensor& a, const Tensor& b) {
  return autodiff::binary_op(a, b, autodiff::BinaryKind::kAdd);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return autodiff::binary_op(a, b, autodiff::BinaryKind::kSub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return autodiff::binary_op(a, b, autodiff::BinaryKind::kMul);
}
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops.

namespace autodiff {

// f(value) -> out value; dfdx(value, out_value) -> local derivative.
template <typename F, typename DF>
inline Tensor unary_op(const Tensor& a, F&& f, DF&& dfdx) {
  const std::size_t total = a.numel();
  std::vector<double> value(total);
  const double* pa = a.data();
  for (std::size_t i = 0; i < total; ++i) value[i] = f(pa[i]);

  NodePtr na = a.node();
  std::vector<double> out_copy = value;  // captured for the derivative
  return make_result(a.shape(), std::move(value), {na},
                     [na, out_copy, dfdx](TensorNode& out) {
                       if (!na->requires_grad) return;
                       na->ensure_grad();
                       double* ga = na->grad.data();
                       const double* g = out.grad.data();
                       const double* va = na->value.data();
                       for (std::size_t i = 0; i < out.grad.size(); ++i)
                         ga[i] += g[i] * dfdx(va[i], out_copy[i]);
                     });
}

}  // namespace autodiff

inline Tensor neg(const Tensor& a) {
  return autodiff::unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return autodiff::unary_op(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  return autodiff::unary_op(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

// Elementwise power with real exponent. Gradient p*x^(p-1); where that is
// singular (x == 0 with p < 1) the gradient is defined as 0.
inline Tensor pow_scalar(const Tensor& a, double p) {
  return autodiff::unary_op(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (x == 0.0 && p < 1.0) return 0.0;
        return p * std::pow(x, p - 1.0);
      });
}

// Square root with the gradient pinned to 0 at 0.
inline Tensor sqrt_t(const Tensor& a) {
  return autodiff::unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y == 0.0 ? 0.0 : 0.5 / y; });
}

inline Tensor tanh_t(const Tensor& a) {
  return autodiff::unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return autodiff::unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// Exact Gaussian-CDF GELU: x * Phi(x).
inline Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return autodiff::unary_op(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

inline Tensor exp_t(const Tensor& a) {
  return autodiff::unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// ---------------------------------------------------------------------------
// Shape ops.

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(a.shape()) + " -> " + shape_str(shape));
  NodePtr na = a.node();
  return autodiff::make_result(std::move(shape), a.values(), {na},
                               [na](TensorNode& out) {
                                 if (!na->requires_grad) return;
                                 na->ensure_grad();
                                 for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   na->grad[i] += out.grad[i];
                               });
}

// General axis permutation (materializes a contiguous copy).
inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int nd = a.ndim();
  if (static_cast<int>(perm.size()) != nd)
    throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> used(static_cast<std::size_t>(nd), false);
  for (int p : perm) {
    if (p < 0 || p >= nd || used[static_cast<std::size_t>(p)])
      throw std::invalid_argument("permute: invalid permutation");
    used[static_cast<std::size_t>(p)] = true;
  }

  Shape out_shape(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d)
    out_shape[static_cast<std::size_t>(d)] = a.dim(perm[static_cast<std::size_t>(d)]);

  std::vector<std::size_t> in_strides(static_cast<std::size_t>(nd), 1);
  for (int d = nd - 2; d >= 0; --d)
    in_strides[static_cast<std::size_t>(d)] =
        in_strides[static_cast<std::size_t>(d + 1)] *
        static_cast<std::size_t>(a.dim(d + 1));
  // Stride in the input for each output axis.
  std::vector<std::size_t> strides(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d)
    strides[static_cast<std::size_t>(d)] =
        in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];

  const std::size_t total = a.numel();
  std::vector<double> value(total);
  const double* pa = a.data();
  std::vector<int> counter(static_cast<std::size_t>(nd), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < total; ++i) {
    value[i] = pa[src];
    for (int d = nd - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++counter[du];
      src += strides[du];
      if (counter[du] < out_shape[du]) break;
      counter[du] = 0;
      src -= strides[du] * static_cast<std::size_t>(out_shape[du]);
    }
  }

  NodePtr na = a.node();
  return autodiff::make_result(
      out_shape, std::move(value), {na},
      [na, out_shape, strides, nd](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        std::vector<int> counter(static_cast<std::size_t>(nd), 0);
        std::size_t src = 0;
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          ga[src] += g[i];
          for (int d = nd - 1; d >= 0; --d) {
            auto du = static_cast<std::size_t>(d);
            ++counter[du];
            src += strides[du];
            if (counter[du] < out_shape[du]) break;
            counter[du] = 0;
            src -= strides[du] * static_cast<std::size_t>(out_shape[du]);
          }
        }
      });
}

inline Tensor transpose(const Tensor& a, int d0, int d1) {
  const int nd = a.ndim();
  if (d0 < 0) d0 += nd;
  if (d1 < 0) d1 += nd;
  std::vector<int> perm(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d) perm[static_cast<std::size_t>(d)] = d;
  std::swap(perm[static_cast<std::size_t>(d0)], perm[static_cast<std::size_t>(d1)]);
  return permute(a, perm);
}

// Contiguous slice along one axis: indices [start, start+len).
inline Tensor slice(const Tensor& a, int axis, int start, int len) {
  const int nd = a.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("slice: bad axis");
  const int dim = a.dim(axis);
  if (start < 0 || len < 0 || start + len > dim)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") outside dim " +
                                std::to_string(dim));

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(a.dim(d));

  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::vector<double> value(outer * static_cast<std::size_t>(len) * inner);
  const double* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (int k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i)
        value[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(k)) * inner +
              i] =
            pa[(o * static_cast<std::size_t>(dim) +
                static_cast<std::size_t>(start + k)) *
                   inner +
               i];

  NodePtr na = a.node();
  return autodiff::make_result(
      out_shape, std::move(value), {na},
      [na, outer, inner, len, dim, start](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t o = 0; o < outer; ++o)
          for (int k = 0; k < len; ++k)
            for (std::size_t i = 0; i < inner; ++i)
              ga[(o * static_cast<std::size_t>(dim) +
                  static_cast<std::size_t>(start + k)) *
                     inner +
                 i] +=
                  g[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(k)) *
                        inner +
                    i];
      });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
  Shape out_shape = parts[0].shape();
  int total_axis = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis && p.dim(d) != out_shape[static_cast<std::size_t>(d)])
        throw std::invalid_argument("concat: shape mismatch on non-concat axis");
    total_axis += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(d)]);
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(d)]);

  std::vector<double> value(shape_numel(out_shape));
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  int offset = 0;
  for (const auto& p : parts) {
    const int w = p.dim(axis);
    const double* pp = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (int k = 0; k < w; ++k)
        for (std::size_t i = 0; i < inner; ++i)
          value[(o * static_cast<std::size_t>(total_axis) +
                 static_cast<std::size_t>(offset + k)) *
                    inner +
                i] = pp[(o * static_cast<std::size_t>(w) + static_cast<std::size_t>(k)) *
                            inner +
                        i];
    offset += w;
    nodes.push_back(p.node());
    widths.push_back(w);
  }

  return autodiff::make_result(
      out_shape, std::move(value), nodes,
      [nodes, widths, outer, inner, total_axis](TensorNode& out) {
        const double* g = out.grad.data();
        int offset = 0;
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
          const int w = widths[pi];
          if (nodes[pi]->requires_grad) {
            nodes[pi]->ensure_grad();
            double* gp = nodes[pi]->grad.data();
            for (std::size_t o = 0; o < outer; ++o)
              for (int k = 0; k < w; ++k)
                for (std::size_t i = 0; i < inner; ++i)
                  gp[(o * static_cast<std::size_t>(w) + static_cast<std::size_t>(k)) *
                         inner +
                     i] += g[(o * static_cast<std::size_t>(total_axis) +
                              static_cast<std::size_t>(offset + k)) *
                                 inner +
                             i];
          }
          offset += w;
        }
      });
}

// Index-select along an axis; duplicate indices are allowed (backward
// scatter-adds).
inline Tensor gather(const Tensor& a, int axis, const std::vector<int>& indices) {
  const int nd = a.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("gather: bad axis");
  const int dim = a.dim(axis);
  for (int idx : indices)
    if (idx < 0 || idx >= dim) throw std::invalid_argument("gather: index out of range");

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(a.dim(d));

  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<int>(indices.size());
  std::vector<double> value(outer * indices.size() * inner);
  const double* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < indices.size(); ++k)
      for (std::size_t i = 0; i < inner; ++i)
        value[(o * indices.size() + k) * inner + i] =
            pa[(o * static_cast<std::size_t>(dim) +
                static_cast<std::size_t>(indices[k])) *
                   inner +
               i];

  NodePtr na = a.node();
  return autodiff::make_result(
      out_shape, std::move(value), {na},
      [na, indices, outer, inner, dim](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t k = 0; k < indices.size(); ++k)
            for (std::size_t i = 0; i < inner; ++i)
              ga[(o * static_cast<std::size_t>(dim) +
                  static_cast<std::size_t>(indices[k])) *
                     inner +
                 i] += g[(o * indices.size() + k) * inner + i];
      });
}

// ---------------------------------------------------------------------------
// Reductions.

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  const double* pa = a.data();
  for (std::size_t i = 0; i < a.numel(); ++i) s += pa[i];
  NodePtr na = a.node();
  return autodiff::make_result({}, {s}, {na}, [na](TensorNode& out) {
    if (!na->requires_grad) return;
    na->ensure_grad();
    const double g = out.grad[0];
    for (double& v : na->grad) v += g;
  });
}

inline Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  const double* pa = a.data();
  for (std::size_t i = 0; i < a.numel(); ++i) s += pa[i];
  NodePtr na = a.node();
  return autodiff::make_result({}, {s * inv}, {na}, [na, inv](TensorNode& out) {
    if (!na->requires_grad) return;
    na->ensure_grad();
    const double g = out.grad[0] * inv;
    for (double& v : na->grad) v += g;
  });
}

namespace autodiff {

inline void reduce_extents(const Tensor& a, int axis, std::size_t& outer, int& dim,
                           std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a.dim(d));
  dim = a.dim(axis);
  for (int d = axis + 1; d < a.ndim(); ++d) inner *= static_cast<std::size_t>(a.dim(d));
}

inline Shape reduced_shape(const Tensor& a, int axis, bool keepdims) {
  Shape s = a.shape();
  if (keepdims) {
    s[static_cast<std::size_t>(axis)] = 1;
  } else {
    s.erase(s.begin() + axis);
  }
  return s;
}

}  // namespace autodiff

inline Tensor sum_axis(const Tensor& a, int axis, bool keepdims = false) {
  if (axis < 0) axis += a.ndim();
  if (axis < 0 || axis >= a.ndim()) throw std::invalid_argument("sum_axis: bad axis");
  std::size_t outer, inner;
  int dim;
  autodiff::reduce_extents(a, axis, outer, dim, inner);
  std::vector<double> value(outer * inner, 0.0);
  const double* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (int k = 0; k < dim; ++k)
      for (std::size_t i = 0; i < inner; ++i)
        value[o * inner + i] +=
            pa[(o * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)) * inner + i];

  NodePtr na = a.node();
  return autodiff::make_result(
      autodiff::reduced_shape(a, axis, keepdims), std::move(value), {na},
      [na, outer, dim, inner](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t o = 0; o < outer; ++o)
          for (int k = 0; k < dim; ++k)
            for (std::size_t i = 0; i < inner; ++i)
              ga[(o * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)) *
                     inner +
                 i] += g[o * inner + i];
      });
}

inline Tensor mean_axis(const Tensor& a, int axis, bool keepdims = false) {
  if (axis < 0) axis += a.ndim();
  const double inv = 1.0 / static_cast<double>(a.dim(axis));
  return mul_scalar(sum_axis(a, axis, keepdims), inv);
}

// Max along an axis; gradient flows to the first attaining element.
inline Tensor max_axis(const Tensor& a, int axis, bool keepdims = false) {
  if (axis < 0) axis += a.ndim();
  if (axis < 0 || axis >= a.ndim()) throw std::invalid_argument("max_axis: bad axis");
  if (a.dim(axis) == 0) throw std::invalid_argument("max_axis: empty axis");
  std::size_t outer, inner;
  int dim;
  autodiff::reduce_extents(a, axis, outer, dim, inner);
  std::vector<double> value(outer * inner);
  std::vector<int> argmax(outer * inner, 0);
  const double* pa = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double best = pa[o * static_cast<std::size_t>(dim) * inner + i];
      int bk = 0;
      for (int k = 1; k < dim; ++k) {
        const double v =
            pa[(o * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)) * inner + i];
        if (v > best) {
          best = v;
          bk = k;
        }
      }
      value[o * inner + i] = best;
      argmax[o * inner + i] = bk;
    }

  NodePtr na = a.node();
  return autodiff::make_result(
      autodiff::reduced_shape(a, axis, keepdims), std::move(value), {na},
      [na, argmax, outer, dim, inner](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i)
            ga[(o * static_cast<std::size_t>(dim) +
                static_cast<std::size_t>(argmax[o * inner + i])) *
                   inner +
               i] += g[o * inner + i];
      });
}

// ---------------------------------------------------------------------------
// Matrix multiplication.

namespace autodiff {

// C[M,N] (+)= A[M,K] * B[K,N]
inline void mm_nn(const double* A, const double* B, double* C, int M, int K, int N,
                  bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < M * N; ++i) C[i] = 0.0;
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < K; ++k) {
      const double a = A[m * K + k];
      const double* b = B + static_cast<std::ptrdiff_t>(k) * N;
      double* c = C + static_cast<std::ptrdiff_t>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += a * b[n];
    }
}

// C[M,Q] (+)= A[M,P] * B[Q,P]^T
inline void mm_nt(const double* A, const double* B, double* C, int M, int P, int Q,
                  bool accumulate) {
  for (int m = 0; m < M; ++m)
    for (int q = 0; q < Q; ++q) {
      const double* a = A + static_cast<std::ptrdiff_t>(m) * P;
      const double* b = B + static_cast<std::ptrdiff_t>(q) * P;
      double s = 0.0;
      for (int p = 0; p < P; ++p) s += a[p] * b[p];
      if (accumulate)
        C[m * Q + q] += s;
      else
        C[m * Q + q] = s;
    }
}

// C[M,N] (+)= A[P,M]^T * B[P,N]
inline void mm_tn(const double* A, const double* B, double* C, int M, int P, int N,
                  bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < M * N; ++i) C[i] = 0.0;
  for (int p = 0; p < P; ++p)
    for (int m = 0; m < M; ++m) {
      const double a = A[p * M + m];
      const double* b = B + static_cast<std::ptrdiff_t>(p) * N;
      double* c = C + static_cast<std::ptrdiff_t>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += a * b[n];
    }
}

}  // namespace autodiff

// Matrix product. Supported forms:
//   [.., M, K] x [K, N]      (shared right operand)
//   [.., M, K] x [.., K, N]  (identical batch dims)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw std::invalid_argument("matmul: operands must have rank >= 2");
  const int M = a.dim(-2), K = a.dim(-1);
  const int Kb = b.dim(-2), N = b.dim(-1);
  if (K != Kb)
    throw std::invalid_argument("matmul: inner dims disagree " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const bool shared_b = b.ndim() == 2;
  if (!shared_b) {
    if (a.ndim() != b.ndim())
      throw std::invalid_argument("matmul: batched operands must share rank");
    for (int d = 0; d < a.ndim() - 2; ++d)
      if (a.dim(d) != b.dim(d))
        throw std::invalid_argument("matmul: batch dims disagree");
  }

  std::size_t batch = 1;
  for (int d = 0; d < a.ndim() - 2; ++d) batch *= static_cast<std::size_t>(a.dim(d));
  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 1] = N;

  std::vector<double> value(batch * static_cast<std::size_t>(M) * static_cast<std::size_t>(N));
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t bi = 0; bi < batch; ++bi)
    autodiff::mm_nn(pa + bi * static_cast<std::size_t>(M * K),
                    shared_b ? pb : pb + bi * static_cast<std::size_t>(K * N),
                    value.data() + bi * static_cast<std::size_t>(M * N), M, K, N, false);

  NodePtr na = a.node(), nb = b.node();
  return autodiff::make_result(
      std::move(out_shape), std::move(value), {na, nb},
      [na, nb, M, K, N, batch, shared_b](TensorNode& out) {
        const double* g = out.grad.data();
        const double* va = na->value.data();
        const double* vb = nb->value.data();
        if (na->requires_grad) {
          na->ensure_grad();
          double* ga = na->grad.data();
          for (std::size_t bi = 0; bi < batch; ++bi)
            autodiff::mm_nt(g + bi * static_cast<std::size_t>(M * N),
                            shared_b ? vb : vb + bi * static_cast<std::size_t>(K * N),
                            ga + bi * static_cast<std::size_t>(M * K), M, N, K, true);
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          double* gb = nb->grad.data();
          for (std::size_t bi = 0; bi < batch; ++bi)
            autodiff::mm_tn(va + bi * static_cast<std::size_t>(M * K),
                            g + bi * static_cast<std::size_t>(M * N),
                            shared_b ? gb : gb + bi * static_cast<std::size_t>(K * N), K,
                            M, N, true);
        }
      });
}

// ---------------------------------------------------------------------------
// Utilities.

inline bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace gaitmae
