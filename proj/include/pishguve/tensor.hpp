#ifndef PISHGUVE_TENSOR_HPP
#define PISHGUVE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "pishguve/errors.hpp"
#include "pishguve/rng.hpp"

namespace pv {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

enum class Mode { train, eval };
enum class PoolKind { avg, max };

/// Dense double-precision tensor with an optional reverse-mode tape.
///
/// A Tensor is a shared handle to a graph node; ops build new nodes that
/// reference their inputs, and backward() walks the recorded graph. Values are
/// immutable after construction except for gradient accumulation and explicit
/// leaf mutation through mutable_data() (used by optimizers and finite
/// differences, which rebuild the graph afterwards).
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily; empty means all-zero
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backprop;  // accumulates into parents
  };

  Tensor() : n_(std::make_shared<Node>()) { n_->shape = {0}; }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from_data(std::move(shape), {}, requires_grad, /*fill=*/true);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::vector<double> d(numel(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false, bool fill = false) {
    Tensor t;
    t.n_->shape = std::move(shape);
    if (fill) data.assign(numel(t.n_->shape), 0.0);
    if (data.size() != numel(t.n_->shape))
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(t.n_->shape));
    for (double v : data)
      if (!std::isfinite(v)) throw NumericError("tensor: non-finite value in construction");
    t.n_->value = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& data() const { return n_->value; }
  /// Leaf mutation only; invalidates any graph built on the old values.
  std::vector<double>& mutable_data() { return n_->value; }

  double operator[](std::size_t i) const { return n_->value[i]; }

  const std::vector<double>& grad() const {
    if (n_->grad.empty()) n_->grad.assign(n_->value.size(), 0.0);
    return n_->grad;
  }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

  std::shared_ptr<Node> node() const { return n_; }

  bool same_node(const Tensor& o) const { return n_ == o.n_; }

 private:
  std::shared_ptr<Node> n_;
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(const Tensor::Node&)>, const char*);
  friend void backward(const Tensor&);
};

inline void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
}

inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(const Tensor::Node&)> backprop, const char* op) {
  check_finite(value, op);
  Tensor t;
  t.n_->shape = std::move(shape);
  t.n_->value = std::move(value);
  bool rg = false;
  for (const Tensor& p : parents) {
    rg = rg || p.requires_grad();
    t.n_->parents.push_back(p.node());
  }
  t.n_->requires_grad = rg;
  if (rg) t.n_->backprop = std::move(backprop);
  return t;
}

inline void accumulate(Tensor::Node& n, std::size_t i, double g) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  n.grad[i] += g;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic. Shapes must match exactly, except a
// one-element tensor broadcasts against anything.

namespace detail {

inline bool is_scalar(const Tensor& t) { return t.size() == 1; }

template <typename FwdFn, typename BwdFn>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdFn fwd, BwdFn bwd, const char* op) {
  const bool sa = is_scalar(a), sb = is_scalar(b);
  if (!sa && !sb && a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const Tensor& big = sa && !sb ? b : a;
  std::size_t n = big.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a[sa ? 0 : i], b[sb ? 0 : i]);
  auto an = a.node(); auto bn = b.node();
  return make_op(big.shape(), std::move(out), {a, b},
                 [an, bn, sa, sb, bwd, n](const Tensor::Node& y) {
                   for (std::size_t i = 0; i < n; ++i) {
                     double av = an->value[sa ? 0 : i], bv = bn->value[sb ? 0 : i];
                     auto [da, db] = bwd(av, bv, y.grad[i]);
                     if (an->requires_grad) accumulate(*an, sa ? 0 : i, da);
                     if (bn->requires_grad) accumulate(*bn, sb ? 0 : i, db);
                   }
                 },
                 op);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, [](double x, double y) { return x + y; },
                           [](double, double, double g) { return std::pair{g, g}; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, [](double x, double y) { return x - y; },
                           [](double, double, double g) { return std::pair{g, -g}; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(a, b, [](double x, double y) { return x * y; },
                           [](double x, double y, double g) { return std::pair{g * y, g * x}; },
                           "mul");
}

// ---------------------------------------------------------------------------

/// y = x.W + B with x (m x k), W (k x d), B (d) broadcast over rows.
inline Tensor affine(const Tensor& x, const Tensor& W, const Tensor& B) {
  if (x.shape().size() != 2 || W.shape().size() != 2)
    throw ShapeError("affine: expected 2-d operands, got " + shape_str(x.shape()) + " and " +
                     shape_str(W.shape()));
  const std::size_t m = x.shape()[0], k = x.shape()[1];
  if (W.shape()[0] != k)
    throw ShapeError("affine: inner dimensions disagree, x " + shape_str(x.shape()) + " vs W " +
                     shape_str(W.shape()));
  const std::size_t d = W.shape()[1];
  if (B.size() != d)
    throw ShapeError("affine: bias " + shape_str(B.shape()) + " does not match output width " +
                     std::to_string(d));
  std::vector<double> y(m * d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = B[j];
      for (std::size_t t = 0; t < k; ++t) acc += x[i * k + t] * W[t * d + j];
      y[i * d + j] = acc;
    }
  auto xn = x.node(); auto wn = W.node(); auto bn = B.node();
  return make_op({m, d}, std::move(y), {x, W, B},
                 [xn, wn, bn, m, k, d](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < d; ++j) {
                       double g = out.grad[i * d + j];
                       if (bn->requires_grad) accumulate(*bn, j, g);
                       for (std::size_t t = 0; t < k; ++t) {
                         if (xn->requires_grad) accumulate(*xn, i * k + t, g * wn->value[t * d + j]);
                         if (wn->requires_grad) accumulate(*wn, t * d + j, g * xn->value[i * k + t]);
                       }
                     }
                 },
                 "affine");
}

/// Valid cross-correlation, stride 1, optional symmetric zero padding.
/// x (Cin x H x W), K (Cout x Cin x kh x kw), B (Cout).
inline Tensor conv2d(const Tensor& x, const Tensor& K, const Tensor& B, std::size_t pad_h = 0,
                     std::size_t pad_w = 0) {
  if (x.shape().size() != 3 || K.shape().size() != 4)
    throw ShapeError("conv2d: expected x (C,H,W) and K (Co,Ci,kh,kw), got " +
                     shape_str(x.shape()) + " and " + shape_str(K.shape()));
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = K.shape()[0], kh = K.shape()[2], kw = K.shape()[3];
  if (K.shape()[1] != ci)
    throw ShapeError("conv2d: kernel input channels " + shape_str(K.shape()) +
                     " do not match input " + shape_str(x.shape()));
  if (B.size() != co) throw ShapeError("conv2d: bias size does not match output channels");
  const std::size_t ph = h + 2 * pad_h, pw = w + 2 * pad_w;
  if (kh > ph || kw > pw)
    throw ShapeError("conv2d: kernel " + shape_str(K.shape()) + " larger than (padded) input " +
                     shape_str(x.shape()));
  const std::size_t oh = ph - kh + 1, ow = pw - kw + 1;
  std::vector<double> y(co * oh * ow);
  auto x_at = [&](std::size_t c, long r, long col) -> double {
    long rr = r - static_cast<long>(pad_h), cc = col - static_cast<long>(pad_w);
    if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) return 0.0;
    return x[(c * h + rr) * w + cc];
  };
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = B[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
              acc += x_at(i, r + u, c + v) * K[((o * ci + i) * kh + u) * kw + v];
        y[(o * oh + r) * ow + c] = acc;
      }
  auto xn = x.node(); auto kn = K.node(); auto bn = B.node();
  return make_op({co, oh, ow}, std::move(y), {x, K, B},
                 [xn, kn, bn, ci, h, w, co, kh, kw, oh, ow, pad_h, pad_w](const Tensor::Node& out) {
                   for (std::size_t o = 0; o < co; ++o)
                     for (std::size_t r = 0; r < oh; ++r)
                       for (std::size_t c = 0; c < ow; ++c) {
                         double g = out.grad[(o * oh + r) * ow + c];
                         if (bn->requires_grad) accumulate(*bn, o, g);
                         for (std::size_t i = 0; i < ci; ++i)
                           for (std::size_t u = 0; u < kh; ++u)
                             for (std::size_t v = 0; v < kw; ++v) {
                               long rr = static_cast<long>(r + u) - static_cast<long>(pad_h);
                               long cc = static_cast<long>(c + v) - static_cast<long>(pad_w);
                               if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) ||
                                   cc >= static_cast<long>(w))
                                 continue;
                               std::size_t xi = (i * h + rr) * w + cc;
                               std::size_t ki = ((o * ci + i) * kh + u) * kw + v;
                               if (xn->requires_grad) accumulate(*xn, xi, g * kn->value[ki]);
                               if (kn->requires_grad) accumulate(*kn, ki, g * xn->value[xi]);
                             }
                       }
                 },
                 "conv2d");
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu: slope must be in (0,1)");
  std::size_t n = x.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  auto xn = x.node();
  return make_op(x.shape(), std::move(y), {x},
                 [xn, slope, n](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < n; ++i)
                     accumulate(*xn, i, out.grad[i] * (xn->value[i] >= 0.0 ? 1.0 : slope));
                 },
                 "leaky_relu");
}

inline Tensor sigmoid(const Tensor& x) {
  std::size_t n = x.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  auto xn = x.node();
  auto yv = std::make_shared<std::vector<double>>(y);
  return make_op(x.shape(), std::move(y), {x},
                 [xn, yv, n](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < n; ++i) {
                     double s = (*yv)[i];
                     accumulate(*xn, i, out.grad[i] * s * (1.0 - s));
                   }
                 },
                 "sigmoid");
}

/// Reduction over the given axes; reduced axes are removed from the shape
/// (a full reduction yields a one-element tensor). Max routes its gradient to
/// the first maximal element in row-major order.
inline Tensor pool(const Tensor& x, PoolKind kind, std::vector<std::size_t> axes) {
  if (axes.empty()) throw ShapeError("pool: empty reduction axis set");
  const Shape& s = x.shape();
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (std::size_t a : axes)
    if (a >= s.size()) throw ShapeError("pool: axis " + std::to_string(a) + " out of range for " +
                                        shape_str(s));
  std::vector<bool> reduced(s.size(), false);
  for (std::size_t a : axes) reduced[a] = true;
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!reduced[i]) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape = {1};

  // Row-major strides of the input.
  std::vector<std::size_t> stride(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) stride[i - 1] = stride[i] * s[i];

  std::size_t red_count = 1;
  for (std::size_t a : axes) red_count *= s[a];
  std::size_t out_n = numel(out_shape);

  // Precompute input flat offsets: one base per output element, one relative
  // offset per reduced-index combination (row-major, so "first" wins max ties).
  std::vector<std::size_t> kept_axes, red_axes;
  for (std::size_t i = 0; i < s.size(); ++i) (reduced[i] ? red_axes : kept_axes).push_back(i);
  auto offsets_for = [&](const std::vector<std::size_t>& ax) {
    std::size_t count = 1;
    for (std::size_t a : ax) count *= s[a];
    std::vector<std::size_t> offs(count);
    for (std::size_t flat = 0; flat < count; ++flat) {
      std::size_t off = 0, rest = flat;
      for (std::size_t i = ax.size(); i-- > 0;) {
        std::size_t a = ax[i];
        off += (rest % s[a]) * stride[a];
        rest /= s[a];
      }
      offs[flat] = off;
    }
    return offs;
  };
  auto base_off = std::make_shared<std::vector<std::size_t>>(offsets_for(kept_axes));
  auto red_off = std::make_shared<std::vector<std::size_t>>(offsets_for(red_axes));

  std::vector<double> y(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (kind == PoolKind::max) argmax->resize(out_n);
  for (std::size_t oi = 0; oi < out_n; ++oi) {
    std::size_t base = (*base_off)[oi];
    if (kind == PoolKind::avg) {
      double acc = 0.0;
      for (std::size_t ri = 0; ri < red_count; ++ri) acc += x[base + (*red_off)[ri]];
      y[oi] = acc / static_cast<double>(red_count);
    } else {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_i = 0;
      for (std::size_t ri = 0; ri < red_count; ++ri) {
        std::size_t idx = base + (*red_off)[ri];
        if (x[idx] > best) { best = x[idx]; best_i = idx; }
      }
      y[oi] = best;
      (*argmax)[oi] = best_i;
    }
  }
  auto xn = x.node();
  return make_op(out_shape, std::move(y), {x},
                 [xn, kind, argmax, out_n, red_count, base_off, red_off](const Tensor::Node& out) {
                   for (std::size_t oi = 0; oi < out_n; ++oi) {
                     if (kind == PoolKind::max) {
                       accumulate(*xn, (*argmax)[oi], out.grad[oi]);
                     } else {
                       double g = out.grad[oi] / static_cast<double>(red_count);
                       std::size_t base = (*base_off)[oi];
                       for (std::size_t ri = 0; ri < red_count; ++ri)
                         accumulate(*xn, base + (*red_off)[ri], g);
                     }
                   }
                 },
                 "pool");
}

/// Inverted dropout: train mode zeroes each element with probability p and
/// scales survivors by 1/(1-p); eval mode is the exact identity.
inline Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must be in [0,1)");
  if (mode == Mode::eval || p == 0.0) {
    // Identity pass-through still records a node so graphs stay uniform.
    std::size_t n = x.size();
    auto xn = x.node();
    return make_op(x.shape(), x.data(), {x},
                   [xn, n](const Tensor::Node& out) {
                     for (std::size_t i = 0; i < n; ++i) accumulate(*xn, i, out.grad[i]);
                   },
                   "dropout");
  }
  std::size_t n = x.size();
  auto mask = std::make_shared<std::vector<double>>(n);
  double scale = 1.0 / (1.0 - p);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : scale;
    y[i] = x[i] * (*mask)[i];
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(y), {x},
                 [xn, mask, n](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < n; ++i) accumulate(*xn, i, out.grad[i] * (*mask)[i]);
                 },
                 "dropout");
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != ref[i])
        throw ShapeError("concat: extent mismatch " + shape_str(s) + " vs " + shape_str(ref) +
                         " off axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  // outer = product of dims before axis, inner = product after.
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::size_t total_axis = out_shape[axis];
  std::vector<double> y(numel(out_shape));
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::size_t pa = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a < pa; ++a)
        for (std::size_t i = 0; i < inner; ++i)
          y[(o * total_axis + off + a) * inner + i] = p[(o * pa + a) * inner + i];
    off += pa;
  }
  std::vector<std::size_t> axis_sizes;
  std::vector<std::shared_ptr<Tensor::Node>> nodes;
  for (const Tensor& p : parts) {
    axis_sizes.push_back(p.shape()[axis]);
    nodes.push_back(p.node());
  }
  return make_op(out_shape, std::move(y), parts,
                 [nodes, axis_sizes, outer, inner, total_axis](const Tensor::Node& out) {
                   std::size_t off = 0;
                   for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                     std::size_t pa = axis_sizes[pi];
                     auto& pn = *nodes[pi];
                     if (pn.requires_grad)
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t a = 0; a < pa; ++a)
                           for (std::size_t i = 0; i < inner; ++i)
                             accumulate(pn, (o * pa + a) * inner + i,
                                        out.grad[(o * total_axis + off + a) * inner + i]);
                     off += pa;
                   }
                 },
                 "concat");
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto xn = x.node();
  std::size_t n = x.size();
  return make_op(std::move(shape), x.data(), {x},
                 [xn, n](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < n; ++i) accumulate(*xn, i, out.grad[i]);
                 },
                 "reshape");
}

/// Row i of a tensor along axis 0; result drops the leading axis.
inline Tensor slice_row(const Tensor& x, std::size_t i) {
  const Shape& s = x.shape();
  if (s.empty() || i >= s[0]) throw ShapeError("slice_row: index out of range");
  Shape out_shape(s.begin() + 1, s.end());
  if (out_shape.empty()) out_shape = {1};
  std::size_t inner = numel(out_shape);
  std::vector<double> y(x.data().begin() + i * inner, x.data().begin() + (i + 1) * inner);
  auto xn = x.node();
  return make_op(out_shape, std::move(y), {x},
                 [xn, i, inner](const Tensor::Node& out) {
                   for (std::size_t k = 0; k < inner; ++k)
                     accumulate(*xn, i * inner + k, out.grad[k]);
                 },
                 "slice_row");
}

/// f (C,H,W) scaled per channel by s (C values).
inline Tensor channel_scale(const Tensor& f, const Tensor& s) {
  if (f.shape().size() != 3 || s.size() != f.shape()[0])
    throw ShapeError("channel_scale: need f (C,H,W) and s of C values, got " +
                     shape_str(f.shape()) + " and " + shape_str(s.shape()));
  std::size_t c = f.shape()[0], hw = f.shape()[1] * f.shape()[2];
  std::vector<double> y(f.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) y[ch * hw + i] = f[ch * hw + i] * s[ch];
  auto fn = f.node(); auto sn = s.node();
  return make_op(f.shape(), std::move(y), {f, s},
                 [fn, sn, c, hw](const Tensor::Node& out) {
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t i = 0; i < hw; ++i) {
                       double g = out.grad[ch * hw + i];
                       if (fn->requires_grad) accumulate(*fn, ch * hw + i, g * sn->value[ch]);
                       if (sn->requires_grad) accumulate(*sn, ch, g * fn->value[ch * hw + i]);
                     }
                 },
                 "channel_scale");
}

/// f (C,H,W) scaled elementwise by a single spatial map m (H*W values).
inline Tensor spatial_scale(const Tensor& f, const Tensor& m) {
  if (f.shape().size() != 3 || m.size() != f.shape()[1] * f.shape()[2])
    throw ShapeError("spatial_scale: need f (C,H,W) and m of H*W values, got " +
                     shape_str(f.shape()) + " and " + shape_str(m.shape()));
  std::size_t c = f.shape()[0], hw = f.shape()[1] * f.shape()[2];
  std::vector<double> y(f.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) y[ch * hw + i] = f[ch * hw + i] * m[i];
  auto fn = f.node(); auto mn = m.node();
  return make_op(f.shape(), std::move(y), {f, m},
                 [fn, mn, c, hw](const Tensor::Node& out) {
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t i = 0; i < hw; ++i) {
                       double g = out.grad[ch * hw + i];
                       if (fn->requires_grad) accumulate(*fn, ch * hw + i, g * mn->value[i]);
                       if (mn->requires_grad) accumulate(*mn, i, g * fn->value[ch * hw + i]);
                     }
                 },
                 "spatial_scale");
}

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  auto xn = x.node();
  std::size_t n = x.size();
  return make_op({1}, {acc}, {x},
                 [xn, n](const Tensor::Node& out) {
                   for (std::size_t i = 0; i < n; ++i) accumulate(*xn, i, out.grad[0]);
                 },
                 "sum");
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  return mul(sum(x), Tensor::scalar(1.0 / static_cast<double>(x.size())));
}

/// Mean squared error between two same-shape tensors.
inline Tensor mse(const Tensor& pred, const Tensor& truth) {
  Tensor d = sub(pred, truth);
  return mean(mul(d, d));
}

// ---------------------------------------------------------------------------

/// Populate grad fields of every requires_grad tensor reachable from loss.
/// Repeated calls without zero_grad accumulate.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  // Topological order via iterative DFS over parents.
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  struct Frame { Tensor::Node* n; std::size_t next; };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Tensor::Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  // Interior (op) node grads are scratch space for this pass; only leaf grads
  // persist and accumulate across calls.
  for (Tensor::Node* n : order)
    if (n->backprop) n->grad.assign(n->value.size(), 0.0);
  auto& ln = *loss.node();
  if (ln.grad.empty()) ln.grad.assign(1, 0.0);
  ln.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor::Node* n = *it;
    if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
    if (n->backprop) n->backprop(*n);
  }
}

/// Max relative error between analytic gradients and central finite
/// differences, over all elements of all params. f must be deterministic
/// (two evaluations are compared bit-for-bit first).
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  Tensor y1 = f();
  Tensor y2 = f();
  if (y1.size() != 1) throw ContractError("grad_check: f must return a scalar");
  if (y1.data() != y2.data())
    throw ContractError("grad_check: f is not deterministic (train-mode dropout?)");
  for (Tensor& p : params) p.zero_grad();
  backward(y1);
  std::vector<std::vector<double>> analytic;
  for (Tensor& p : params) analytic.push_back(p.grad());
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      double v = data[i];
      double h = eps * std::max(1.0, std::abs(v));
      data[i] = v + h;
      double yp = f()[0];
      data[i] = v - h;
      double ym = f()[0];
      data[i] = v;
      double numeric = (yp - ym) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

/// Debug dump: one row per leading-axis slice, comma separated.
inline void dump_csv(const Tensor& t, std::ostream& os) {
  std::size_t rows = t.shape().empty() ? 1 : t.shape()[0];
  std::size_t cols = t.size() / std::max<std::size_t>(rows, 1);
  os.precision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) os << (c ? "," : "") << t[r * cols + c];
    os << "\n";
  }
}

}  // namespace pv

#endif
