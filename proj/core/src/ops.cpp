#include "audiomod/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "audiomod/errors.hpp"
#include "gemm.hpp"

namespace audiomod::nn {
namespace {

int normalize_axis(int axis, int ndim) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return axis;
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    strides[static_cast<size_t>(d)] =
        strides[static_cast<size_t>(d) + 1] * static_cast<std::size_t>(shape[static_cast<size_t>(d) + 1]);
  }
  return strides;
}

// Strides of `in` expressed over the (right-aligned) broadcast shape `out`.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto in_strides = contiguous_strides(in);
  std::vector<std::size_t> s(out.size(), 0);
  const size_t offset = out.size() - in.size();
  for (size_t d = 0; d < in.size(); ++d) {
    s[offset + d] = in[d] == 1 ? 0 : in_strides[d];
  }
  return s;
}

// Visits every output index of a broadcast binary op with the matching
// input offsets. The innermost dimension runs as a tight loop.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const int nd = static_cast<int>(out.size());
  const std::size_t total = shape_numel(out);
  if (nd == 0 || total == 0) return;
  const int inner = out.back();
  const std::size_t ia_step = sa.back();
  const std::size_t ib_step = sb.back();
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  std::size_t ia = 0, ib = 0, i = 0;
  while (i < total) {
    std::size_t a = ia, b = ib;
    for (int k = 0; k < inner; ++k, ++i, a += ia_step, b += ib_step) fn(i, a, b);
    // Advance the odometer over all but the innermost dimension.
    for (int d = nd - 2; d >= 0; --d) {
      const auto du = static_cast<size_t>(d);
      ++idx[du];
      ia += sa[du];
      ib += sb[du];
      if (idx[du] < out[du]) break;
      ia -= sa[du] * static_cast<size_t>(out[du]);
      ib -= sb[du] * static_cast<size_t>(out[du]);
      idx[du] = 0;
    }
  }
}

template <typename T>
bool needs_grad(const std::shared_ptr<detail::Node<T>>& n) {
  return n && n->requires_grad;
}

template <typename T>
Tensor<T> binary(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  std::vector<T> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  const bool same = a.shape() == b.shape();

  auto apply = [op](T x, T y) {
    switch (op) {
      case ElementwiseOp::kAdd: return x + y;
      case ElementwiseOp::kSub: return x - y;
      default: return x * y;
    }
  };

  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = apply(av[ia], bv[ib]); });
  }

  auto an = a.node();
  auto bn = b.node();
  const char* name = op == ElementwiseOp::kAdd ? "add" : op == ElementwiseOp::kSub ? "sub" : "mul";
  return make_result<T>(out_shape, std::move(out), {a, b}, name,
                        [an, bn, op, same, sa, sb, out_shape](detail::Node<T>& self) {
    const bool ga_on = needs_grad(an);
    const bool gb_on = needs_grad(bn);
    if (ga_on) an->ensure_grad();
    if (gb_on) bn->ensure_grad();
    const T sign_b = op == ElementwiseOp::kSub ? T(-1) : T(1);
    auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const T g = self.grad[i];
      if (op == ElementwiseOp::kMul) {
        if (ga_on) an->grad[ia] += g * bn->value[ib];
        if (gb_on) bn->grad[ib] += g * an->value[ia];
      } else {
        if (ga_on) an->grad[ia] += g;
        if (gb_on) bn->grad[ib] += sign_b * g;
      }
    };
    if (same) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) step(i, i, i);
    } else {
      for_each_broadcast(out_shape, sa, sb, step);
    }
  });
}

template <typename T>
Tensor<T> unary(ElementwiseOp op, const Tensor<T>& x) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  const char* name = "relu";
  switch (op) {
    case ElementwiseOp::kRelu:
      for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] < T(0) ? T(0) : xv[i];  // NaN passes through
      break;
    case ElementwiseOp::kSigmoid:
      name = "sigmoid";
      for (size_t i = 0; i < out.size(); ++i) {
        // Split on sign so exp never overflows.
        const T v = xv[i];
        if (v >= T(0)) {
          out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
          const T e = std::exp(v);
          out[i] = e / (T(1) + e);
        }
      }
      break;
    case ElementwiseOp::kTanh:
      name = "tanh";
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
    default:
      throw ContractError("not a unary elementwise op");
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, name, [xn, op](detail::Node<T>& self) {
    xn->ensure_grad();
    const auto& y = self.value;
    for (size_t i = 0; i < y.size(); ++i) {
      const T g = self.grad[i];
      switch (op) {
        case ElementwiseOp::kRelu: xn->grad[i] += y[i] > T(0) ? g : T(0); break;
        case ElementwiseOp::kSigmoid: xn->grad[i] += g * y[i] * (T(1) - y[i]); break;
        default: xn->grad[i] += g * (T(1) - y[i] * y[i]); break;
      }
    }
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    const int da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kSub:
    case ElementwiseOp::kMul:
      if (b == nullptr) throw ContractError("binary elementwise op needs two operands");
      return binary(op, a, *b);
    default:
      return unary(op, a);
  }
}

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(ElementwiseOp::kAdd, a, b); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(ElementwiseOp::kSub, a, b); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(ElementwiseOp::kMul, a, b); }
template <typename T> Tensor<T> relu(const Tensor<T>& x) { return unary(ElementwiseOp::kRelu, x); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) { return unary(ElementwiseOp::kSigmoid, x); }
template <typename T> Tensor<T> tanh(const Tensor<T>& x) { return unary(ElementwiseOp::kTanh, x); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, "scale", [xn, factor](detail::Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + value;
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, "add_scalar", [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto xn = x.node();
  return make_result<T>(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), {x},
                        "reshape", [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b) {
  const int nd = x.ndim();
  axis_a = normalize_axis(axis_a, nd);
  axis_b = normalize_axis(axis_b, nd);
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<size_t>(axis_a)], out_shape[static_cast<size_t>(axis_b)]);

  // Input strides reordered into output axis order.
  auto in_strides = contiguous_strides(x.shape());
  std::swap(in_strides[static_cast<size_t>(axis_a)], in_strides[static_cast<size_t>(axis_b)]);
  const std::vector<std::size_t> zero(out_shape.size(), 0);

  std::vector<std::size_t> src(x.numel());
  for_each_broadcast(out_shape, in_strides, zero,
                     [&](std::size_t i, std::size_t ia, std::size_t) { src[i] = ia; });
  const auto xv = x.data();
  std::vector<T> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[src[i]];

  auto xn = x.node();
  return make_result<T>(out_shape, std::move(out), {x}, "transpose",
                        [xn, src = std::move(src)](detail::Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < src.size(); ++i) xn->grad[src[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const int nd = parts[0].ndim();
  axis = normalize_axis(axis, nd);
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < nd; ++d) {
      if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)]) {
        throw ShapeError("concat shape mismatch: " + shape_str(p.shape()) + " vs " +
                         shape_str(out_shape));
      }
    }
    total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(out_shape[static_cast<size_t>(d)]);
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<size_t>(out_shape[static_cast<size_t>(d)]);

  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> blocks;  // per part: elements per outer step
  std::size_t offset = 0;
  const std::size_t row = static_cast<size_t>(total) * inner;
  for (const auto& p : parts) {
    const std::size_t blk = static_cast<size_t>(p.dim(axis)) * inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * blk), blk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    blocks.push_back(blk);
    offset += blk;
  }

  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result<T>(out_shape, std::move(out), parts, "concat",
                        [nodes, blocks, outer, row](detail::Node<T>& self) {
    std::size_t off = 0;
    for (size_t k = 0; k < nodes.size(); ++k) {
      if (needs_grad(nodes[k])) {
        nodes[k]->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < blocks[k]; ++j) {
            nodes[k]->grad[o * blocks[k] + j] += self.grad[o * row + off + j];
          }
        }
      }
      off += blocks[k];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int length) {
  const int nd = x.ndim();
  axis = normalize_axis(axis, nd);
  const int extent = x.dim(axis);
  if (start < 0 || length < 1 || start + length > extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of range for axis of size " + std::to_string(extent));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = length;
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(x.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<size_t>(x.dim(d));
  const std::size_t in_row = static_cast<size_t>(extent) * inner;
  const std::size_t out_row = static_cast<size_t>(length) * inner;
  const std::size_t off = static_cast<size_t>(start) * inner;

  std::vector<T> out(outer * out_row);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  auto xn = x.node();
  return make_result<T>(out_shape, std::move(out), {x}, "slice",
                        [xn, outer, in_row, out_row, off](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < out_row; ++j) xn->grad[o * in_row + off + j] += self.grad[o * out_row + j];
    }
  });
}

namespace {

// keep[i] for every element: false when the element sits in padding.
std::vector<char> valid_flags(const Shape& shape, const AxisMask& mask) {
  const int nd = static_cast<int>(shape.size());
  const int axis = normalize_axis(mask.axis, nd);
  if (axis == 0) throw ContractError("mask axis cannot be the batch axis");
  if (static_cast<int>(mask.lengths.size()) != shape[0]) {
    throw ShapeError("mask has " + std::to_string(mask.lengths.size()) + " lengths for batch of " +
                     std::to_string(shape[0]));
  }
  std::size_t mid = 1, inner = 1;
  for (int d = 1; d < axis; ++d) mid *= static_cast<size_t>(shape[static_cast<size_t>(d)]);
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<size_t>(shape[static_cast<size_t>(d)]);
  const int extent = shape[static_cast<size_t>(axis)];
  std::vector<char> keep(shape_numel(shape));
  std::size_t i = 0;
  for (int n = 0; n < shape[0]; ++n) {
    const int len = mask.lengths[static_cast<size_t>(n)];
    for (std::size_t m = 0; m < mid; ++m) {
      for (int p = 0; p < extent; ++p) {
        const char flag = p < len ? 1 : 0;
        for (std::size_t k = 0; k < inner; ++k) keep[i++] = flag;
      }
    }
  }
  return keep;
}

}  // namespace

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& x, const AxisMask& mask) {
  auto keep = valid_flags(x.shape(), mask);
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = keep[i] ? xv[i] : T(0);
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, "mask",
                        [xn, keep = std::move(keep)](detail::Node<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) xn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, const std::vector<int>& axes, ReduceKind kind,
                 const AxisMask* mask) {
  const int nd = x.ndim();
  Shape out_shape = x.shape();
  std::vector<bool> reduced(static_cast<size_t>(nd), false);
  for (int a : axes) {
    const int ax = normalize_axis(a, nd);
    reduced[static_cast<size_t>(ax)] = true;
    out_shape[static_cast<size_t>(ax)] = 1;
  }
  const auto out_strides = contiguous_strides(out_shape);
  std::vector<std::size_t> map_strides(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) {
    map_strides[static_cast<size_t>(d)] = reduced[static_cast<size_t>(d)] ? 0 : out_strides[static_cast<size_t>(d)];
  }

  const std::size_t n_in = x.numel();
  std::vector<std::size_t> target(n_in);
  const std::vector<std::size_t> zero(static_cast<size_t>(nd), 0);
  for_each_broadcast(x.shape(), map_strides, zero,
                     [&](std::size_t i, std::size_t o, std::size_t) { target[i] = o; });
  std::vector<char> keep;
  if (mask != nullptr) keep = valid_flags(x.shape(), *mask);

  const std::size_t n_out = shape_numel(out_shape);
  std::vector<T> out(n_out, T(0));
  std::vector<T> count(n_out, T(0));
  std::vector<std::ptrdiff_t> argmax;
  const auto xv = x.data();
  if (kind == ReduceKind::kMax) {
    argmax.assign(n_out, -1);
    for (std::size_t i = 0; i < n_in; ++i) {
      if (!keep.empty() && !keep[i]) continue;
      const std::size_t o = target[i];
      if (argmax[o] < 0 || xv[i] > out[o] || std::isnan(xv[i])) {  // NaN sticks
        out[o] = xv[i];
        argmax[o] = static_cast<std::ptrdiff_t>(i);
      }
    }
  } else {
    for (std::size_t i = 0; i < n_in; ++i) {
      if (!keep.empty() && !keep[i]) continue;
      out[target[i]] += xv[i];
      count[target[i]] += T(1);
    }
    if (kind == ReduceKind::kMean) {
      for (std::size_t o = 0; o < n_out; ++o) {
        if (count[o] > T(0)) out[o] /= count[o];
      }
    }
  }

  auto xn = x.node();
  const char* name = kind == ReduceKind::kMax ? "reduce_max" : kind == ReduceKind::kMean ? "reduce_mean" : "reduce_sum";
  return make_result<T>(out_shape, std::move(out), {x}, name,
                        [xn, kind, target = std::move(target), keep = std::move(keep),
                         count = std::move(count), argmax = std::move(argmax)](detail::Node<T>& self) {
    xn->ensure_grad();
    if (kind == ReduceKind::kMax) {
      for (size_t o = 0; o < argmax.size(); ++o) {
        if (argmax[o] >= 0) xn->grad[static_cast<size_t>(argmax[o])] += self.grad[o];
      }
      return;
    }
    for (size_t i = 0; i < target.size(); ++i) {
      if (!keep.empty() && !keep[i]) continue;
      const size_t o = target[i];
      xn->grad[i] += kind == ReduceKind::kMean ? self.grad[o] / count[o] : self.grad[o];
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  std::vector<int> axes(static_cast<size_t>(x.ndim()));
  std::iota(axes.begin(), axes.end(), 0);
  return reshape(reduce(x, axes, ReduceKind::kSum), Shape{1});
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  std::vector<int> axes(static_cast<size_t>(x.ndim()));
  std::iota(axes.begin(), axes.end(), 0);
  return reshape(reduce(x, axes, ReduceKind::kMean), Shape{1});
}

namespace {

// Softmax family over the last axis. `lengths` (optional) limits each row
// of an N x L input to its valid prefix.
template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& z, bool log_space, const std::vector<int>* lengths) {
  if (z.ndim() < 1) throw ShapeError("softmax of a rank-0 tensor");
  const int k = z.dim(-1);
  const std::size_t rows = z.numel() / static_cast<size_t>(k);
  if (lengths != nullptr && lengths->size() != rows) {
    throw ShapeError("masked softmax expects one length per row");
  }
  const auto zv = z.data();
  std::vector<T> out(zv.size(), T(0));
  std::vector<int> valid(rows, k);
  for (std::size_t r = 0; r < rows; ++r) {
    if (lengths != nullptr) {
      valid[r] = (*lengths)[r];
      if (valid[r] < 1 || valid[r] > k) throw ShapeError("masked softmax length out of range");
    }
    const T* in = zv.data() + r * static_cast<size_t>(k);
    T* o = out.data() + r * static_cast<size_t>(k);
    const int len = valid[r];
    T mx = in[0];
    for (int j = 1; j < len; ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (int j = 0; j < len; ++j) sum += std::exp(in[j] - mx);
    if (log_space) {
      const T log_sum = std::log(sum);
      for (int j = 0; j < len; ++j) o[j] = in[j] - mx - log_sum;
    } else {
      for (int j = 0; j < len; ++j) o[j] = std::exp(in[j] - mx) / sum;
    }
  }
  auto zn = z.node();
  return make_result<T>(z.shape(), std::move(out), {z}, log_space ? "log_softmax" : "softmax",
                        [zn, k, log_space, valid = std::move(valid)](detail::Node<T>& self) {
    zn->ensure_grad();
    for (size_t r = 0; r < valid.size(); ++r) {
      const T* y = self.value.data() + r * static_cast<size_t>(k);
      const T* g = self.grad.data() + r * static_cast<size_t>(k);
      T* gz = zn->grad.data() + r * static_cast<size_t>(k);
      const int len = valid[r];
      if (log_space) {
        T gsum = T(0);
        for (int j = 0; j < len; ++j) gsum += g[j];
        for (int j = 0; j < len; ++j) gz[j] += g[j] - std::exp(y[j]) * gsum;
      } else {
        T dot = T(0);
        for (int j = 0; j < len; ++j) dot += g[j] * y[j];
        for (int j = 0; j < len; ++j) gz[j] += y[j] * (g[j] - dot);
      }
    }
  });
}

}  // namespace

template <typename T> Tensor<T> softmax(const Tensor<T>& z) { return softmax_impl(z, false, nullptr); }
template <typename T> Tensor<T> log_softmax(const Tensor<T>& z) { return softmax_impl(z, true, nullptr); }

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& z, const std::vector<int>& lengths) {
  if (z.ndim() != 2) throw ShapeError("masked_softmax expects N x L, got " + shape_str(z.shape()));
  return softmax_impl(z, false, &lengths);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
  if (x.ndim() != 2 || w.ndim() != 2) {
    throw ShapeError("linear expects 2-D input and weight, got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight " + shape_str(w.shape()));
  }
  if (b != nullptr && (b->ndim() != 1 || b->dim(0) != out_dim)) {
    throw ShapeError("linear: bias shape " + shape_str(b->shape()));
  }
  std::vector<T> out(static_cast<size_t>(n) * out_dim);
  detail::gemm(n, out_dim, in, x.data().data(), false, w.data().data(), true, out.data(), false);
  if (b != nullptr) {
    const auto bv = b->data();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < out_dim; ++c) out[static_cast<size_t>(r) * out_dim + c] += bv[static_cast<size_t>(c)];
  }

  auto xn = x.node();
  auto wn = w.node();
  std::shared_ptr<detail::Node<T>> bn = b != nullptr ? b->node() : nullptr;
  std::vector<Tensor<T>> inputs{x, w};
  if (b != nullptr) inputs.push_back(*b);
  return make_result<T>({n, out_dim}, std::move(out), inputs, "linear",
                        [xn, wn, bn, n, in, out_dim](detail::Node<T>& self) {
    const T* g = self.grad.data();
    if (needs_grad(xn)) {
      xn->ensure_grad();
      detail::gemm(n, in, out_dim, g, false, wn->value.data(), false, xn->grad.data(), true);
    }
    if (needs_grad(wn)) {
      wn->ensure_grad();
      detail::gemm(out_dim, in, n, g, true, xn->value.data(), false, wn->grad.data(), true);
    }
    if (needs_grad(bn)) {
      bn->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < out_dim; ++c)
          bn->grad[static_cast<size_t>(c)] += g[static_cast<size_t>(r) * out_dim + c];
    }
  });
}

template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(fan_in, 1)));
  const std::size_t n = shape_numel(shape);
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

#define AUDIOMOD_INSTANTIATE(T)                                                                   \
  template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, const Tensor<T>*);              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                  \
  template Tensor<T> slice(const Tensor<T>&, int, int, int);                                      \
  template Tensor<T> apply_mask(const Tensor<T>&, const AxisMask&);                               \
  template Tensor<T> reduce(const Tensor<T>&, const std::vector<int>&, ReduceKind, const AxisMask*); \
  template Tensor<T> sum_all(const Tensor<T>&);                                                   \
  template Tensor<T> mean_all(const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&);                                                   \
  template Tensor<T> log_softmax(const Tensor<T>&);                                               \
  template Tensor<T> masked_softmax(const Tensor<T>&, const std::vector<int>&);                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);                \
  template Tensor<T> he_normal(Shape, int, std::uint64_t);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::nn
