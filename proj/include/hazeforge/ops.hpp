#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "hazeforge/tensor.hpp"

namespace hazeforge {

namespace detail {

inline bool track(const Graph& g, std::initializer_list<const Tensor*> inputs) {
  if (!g.recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": operand shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

inline void check_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected a [C,H,W] tensor, got " + shape_str(t.shape()));
  }
}

// Valid output-column range [x0, x1) for one kernel column offset: the set of
// output x with 0 <= x*stride - pad + kx < w.
inline void conv_col_range(int w, int ow, int stride, int pad, int kx, int& x0, int& x1) {
  int lo = pad - kx;  // need x*stride >= lo
  x0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  int hi = w - 1 + pad - kx;  // need x*stride <= hi
  x1 = hi < 0 ? 0 : std::min(ow, hi / stride + 1);
  if (x1 < x0) x1 = x0;
}

// out[o,y,x] = bias[o] + sum_{c,ky,kx} in[c, y*s-p+ky, x*s-p+kx] * ker[o,c,ky,kx]
inline void conv2d_forward(const double* in, const double* ker, const double* bias, double* out,
                           int cin, int h, int w, int cout, int k, int s, int p, int oh, int ow) {
  for (int o = 0; o < cout; ++o) {
    double* outp = out + static_cast<std::size_t>(o) * oh * ow;
    const double bv = bias ? bias[o] : 0.0;
    std::fill(outp, outp + static_cast<std::size_t>(oh) * ow, bv);
    for (int c = 0; c < cin; ++c) {
      const double* inp = in + static_cast<std::size_t>(c) * h * w;
      const double* kp = ker + (static_cast<std::size_t>(o) * cin + c) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = kp[ky * k + kx];
          if (wv == 0.0) continue;  // lets block-diagonal fixed kernels skip dead taps
          int x0, x1;
          conv_col_range(w, ow, s, p, kx, x0, x1);
          if (x0 >= x1) continue;
          for (int y = 0; y < oh; ++y) {
            const int yy = y * s - p + ky;
            if (yy < 0 || yy >= h) continue;
            const double* irow = inp + static_cast<std::size_t>(yy) * w + (x0 * s - p + kx);
            double* orow = outp + static_cast<std::size_t>(y) * ow;
            if (s == 1) {
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x - x0];
            } else {
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[static_cast<std::size_t>(x - x0) * s];
            }
          }
        }
      }
    }
  }
}

inline void conv2d_backward_input(const double* gout, const double* ker, double* gin,
                                  int cin, int h, int w, int cout, int k, int s, int p, int oh, int ow) {
  for (int o = 0; o < cout; ++o) {
    const double* gp = gout + static_cast<std::size_t>(o) * oh * ow;
    for (int c = 0; c < cin; ++c) {
      double* gip = gin + static_cast<std::size_t>(c) * h * w;
      const double* kp = ker + (static_cast<std::size_t>(o) * cin + c) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = kp[ky * k + kx];
          if (wv == 0.0) continue;
          int x0, x1;
          conv_col_range(w, ow, s, p, kx, x0, x1);
          if (x0 >= x1) continue;
          for (int y = 0; y < oh; ++y) {
            const int yy = y * s - p + ky;
            if (yy < 0 || yy >= h) continue;
            double* girow = gip + static_cast<std::size_t>(yy) * w + (x0 * s - p + kx);
            const double* grow = gp + static_cast<std::size_t>(y) * ow;
            if (s == 1) {
              for (int x = x0; x < x1; ++x) girow[x - x0] += wv * grow[x];
            } else {
              for (int x = x0; x < x1; ++x) girow[static_cast<std::size_t>(x - x0) * s] += wv * grow[x];
            }
          }
        }
      }
    }
  }
}

inline void conv2d_backward_kernel(const double* gout, const double* in, double* gker,
                                   int cin, int h, int w, int cout, int k, int s, int p, int oh, int ow) {
  for (int o = 0; o < cout; ++o) {
    const double* gp = gout + static_cast<std::size_t>(o) * oh * ow;
    for (int c = 0; c < cin; ++c) {
      const double* inp = in + static_cast<std::size_t>(c) * h * w;
      double* gkp = gker + (static_cast<std::size_t>(o) * cin + c) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          int x0, x1;
          conv_col_range(w, ow, s, p, kx, x0, x1);
          if (x0 >= x1) continue;
          double acc = 0.0;
          for (int y = 0; y < oh; ++y) {
            const int yy = y * s - p + ky;
            if (yy < 0 || yy >= h) continue;
            const double* irow = inp + static_cast<std::size_t>(yy) * w + (x0 * s - p + kx);
            const double* grow = gp + static_cast<std::size_t>(y) * ow;
            if (s == 1) {
              for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x - x0];
            } else {
              for (int x = x0; x < x1; ++x) acc += grow[x] * irow[static_cast<std::size_t>(x - x0) * s];
            }
          }
          gkp[ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace detail

// 2-D cross-correlation (no kernel flip) with zero padding.
// input [C_in,H,W], kernel [C_out,C_in,k,k] (k odd), bias [C_out].
// Output size must divide exactly: H' = (H + 2*pad - k)/stride + 1.
inline Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     int stride = 1, int padding = 0) {
  detail::check_chw(input, "conv2d");
  if (kernel.rank() != 4) {
    throw DimensionError("conv2d: kernel must be [C_out,C_in,k,k], got " + shape_str(kernel.shape()));
  }
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(2) != kernel.dim(3)) {
    throw DimensionError("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv2d: bias must be [C_out]=[" + std::to_string(cout) + "], got " +
                         shape_str(bias.shape()));
  }
  if (k % 2 == 0) throw PreconditionError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride < 1) throw PreconditionError("conv2d: stride must be >= 1");
  if (padding < 0) throw PreconditionError("conv2d: padding must be >= 0");
  const int hnum = h + 2 * padding - k;
  const int wnum = w + 2 * padding - k;
  if (hnum < 0 || wnum < 0 || hnum % stride != 0 || wnum % stride != 0) {
    throw DimensionError("conv2d: output size is not exact for input " + shape_str(input.shape()) +
                         ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                         ", padding=" + std::to_string(padding));
  }
  const int oh = hnum / stride + 1;
  const int ow = wnum / stride + 1;

  Tensor out = Tensor::zeros({cout, oh, ow});
  detail::conv2d_forward(input.data().data(), kernel.data().data(), bias.data().data(),
                         out.data().data(), cin, h, w, cout, k, stride, padding, oh, ow);

  if (detail::track(g, {&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    auto in_i = input.impl_ptr();
    auto ker_i = kernel.impl_ptr();
    auto b_i = bias.impl_ptr();
    auto out_i = out.impl_ptr();
    const bool need_in = input.requires_grad();
    const bool need_ker = kernel.requires_grad();
    const bool need_bias = bias.requires_grad();
    g.record([=]() {
      out_i->ensure_grad();
      const double* gout = out_i->grad.data();
      if (need_in) {
        in_i->ensure_grad();
        detail::conv2d_backward_input(gout, ker_i->data.data(), in_i->grad.data(),
                                      cin, h, w, cout, k, stride, padding, oh, ow);
      }
      if (need_ker) {
        ker_i->ensure_grad();
        detail::conv2d_backward_kernel(gout, in_i->data.data(), ker_i->grad.data(),
                                       cin, h, w, cout, k, stride, padding, oh, ow);
      }
      if (need_bias) {
        b_i->ensure_grad();
        for (int o = 0; o < cout; ++o) {
          const double* gp = gout + static_cast<std::size_t>(o) * oh * ow;
          double acc = 0.0;
          for (int i = 0; i < oh * ow; ++i) acc += gp[i];
          b_i->grad[static_cast<std::size_t>(o)] += acc;
        }
      }
    });
  }
  return out;
}

// Elementwise max(0, x). Subgradient at 0 is 0.
inline Tensor relu(Graph& g, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        if (xi->data[i] > 0.0) xi->grad[i] += yi->grad[i];
      }
    });
  }
  return y;
}

// Elementwise logistic 1/(1+exp(-x)).
inline Tensor sigmoid(Graph& g, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = 1.0 / (1.0 + std::exp(-xd[i]));
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        const double s = yi->data[i];
        xi->grad[i] += yi->grad[i] * s * (1.0 - s);
      }
    });
  }
  return y;
}

namespace detail {

// Shared body for the elementwise binary ops.
template <typename Fwd, typename Bwd>
Tensor binary_op(Graph& g, const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  Tensor y = Tensor::zeros(a.shape());
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = fwd(ad[i], bd[i]);
  if (track(g, {&a, &b})) {
    y.set_requires_grad(true);
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto yi = y.impl_ptr();
    const bool need_a = a.requires_grad();
    const bool need_b = b.requires_grad();
    g.record([=]() {
      yi->ensure_grad();
      if (need_a) ai->ensure_grad();
      if (need_b) bi->ensure_grad();
      for (std::size_t i = 0; i < yi->data.size(); ++i) {
        bwd(yi->grad[i], ai.get(), bi.get(), i, need_a, need_b);
      }
    });
  }
  return y;
}

}  // namespace detail

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      g, a, b, "add", [](double x, double y) { return x + y; },
      [](double gy, TensorImpl* ai, TensorImpl* bi, std::size_t i, bool na, bool nb) {
        if (na) ai->grad[i] += gy;
        if (nb) bi->grad[i] += gy;
      });
}

inline Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      g, a, b, "sub", [](double x, double y) { return x - y; },
      [](double gy, TensorImpl* ai, TensorImpl* bi, std::size_t i, bool na, bool nb) {
        if (na) ai->grad[i] += gy;
        if (nb) bi->grad[i] -= gy;
      });
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      g, a, b, "mul", [](double x, double y) { return x * y; },
      [](double gy, TensorImpl* ai, TensorImpl* bi, std::size_t i, bool na, bool nb) {
        if (na) ai->grad[i] += gy * bi->data[i];
        if (nb) bi->grad[i] += gy * ai->data[i];
      });
}

// Elementwise a/b. The caller is responsible for keeping b away from zero.
inline Tensor div(Graph& g, const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      g, a, b, "div", [](double x, double y) { return x / y; },
      [](double gy, TensorImpl* ai, TensorImpl* bi, std::size_t i, bool na, bool nb) {
        const double inv = 1.0 / bi->data[i];
        if (na) ai->grad[i] += gy * inv;
        if (nb) bi->grad[i] -= gy * ai->data[i] * inv * inv;
      });
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(Graph& g, const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor y = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = fwd(xd[i]);
  if (track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        xi->grad[i] += bwd(yi->grad[i], xi->data[i], yi->data[i]);
      }
    });
  }
  return y;
}

}  // namespace detail

inline Tensor add_scalar(Graph& g, const Tensor& x, double s) {
  return detail::unary_op(
      g, x, [s](double v) { return v + s; },
      [](double gy, double, double) { return gy; });
}

inline Tensor mul_scalar(Graph& g, const Tensor& x, double s) {
  return detail::unary_op(
      g, x, [s](double v) { return v * s; },
      [s](double gy, double, double) { return gy * s; });
}

// Elementwise |x|. Subgradient at 0 is 0.
inline Tensor abs(Graph& g, const Tensor& x) {
  return detail::unary_op(
      g, x, [](double v) { return std::fabs(v); },
      [](double gy, double xv, double) { return xv > 0.0 ? gy : (xv < 0.0 ? -gy : 0.0); });
}

// Elementwise square root; requires x >= 0. Subgradient at 0 is 0.
inline Tensor sqrt(Graph& g, const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw PreconditionError("sqrt: negative input");
  }
  return detail::unary_op(
      g, x, [](double v) { return std::sqrt(v); },
      [](double gy, double, double yv) { return yv > 0.0 ? gy * 0.5 / yv : 0.0; });
}

inline Tensor square(Graph& g, const Tensor& x) {
  return detail::unary_op(
      g, x, [](double v) { return v * v; },
      [](double gy, double xv, double) { return gy * 2.0 * xv; });
}

// Elementwise max(x, lo). Gradient passes where x > lo, is 0 where clamped.
inline Tensor clamp_min(Graph& g, const Tensor& x, double lo) {
  return detail::unary_op(
      g, x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double gy, double xv, double) { return xv > lo ? gy : 0.0; });
}

// Mean over all elements -> scalar tensor.
inline Tensor mean(Graph& g, const Tensor& x) {
  const auto& xd = x.data();
  double acc = 0.0;
  for (double v : xd) acc += v;
  const double inv_n = 1.0 / static_cast<double>(xd.size());
  Tensor y = Tensor::scalar(acc * inv_n);
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      const double gy = yi->grad[0] * inv_n;
      for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += gy;
    });
  }
  return y;
}

// Sum over all elements -> scalar tensor.
inline Tensor sum(Graph& g, const Tensor& x) {
  const auto& xd = x.data();
  double acc = 0.0;
  for (double v : xd) acc += v;
  Tensor y = Tensor::scalar(acc);
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      const double gy = yi->grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += gy;
    });
  }
  return y;
}

// Reduces [C,H,W] over the channel axis -> [1,H,W].
inline Tensor sum_channels(Graph& g, const Tensor& x) {
  detail::check_chw(x, "sum_channels");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y = Tensor::zeros({1, h, w});
  const auto& xd = x.data();
  auto& yd = y.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* xp = xd.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) yd[i] += xp[i];
  }
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        double* gp = xi->grad.data() + ci * plane;
        for (std::size_t i = 0; i < plane; ++i) gp[i] += yi->grad[i];
      }
    });
  }
  return y;
}

// Concatenates [C_i,H,W] tensors along the channel axis, in input order.
inline Tensor concat_channels(Graph& g, const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels: empty input list");
  detail::check_chw(inputs[0], "concat_channels");
  const int h = inputs[0].dim(1), w = inputs[0].dim(2);
  int ctotal = 0;
  for (const Tensor& t : inputs) {
    detail::check_chw(t, "concat_channels");
    if (t.dim(1) != h || t.dim(2) != w) {
      throw DimensionError("concat_channels: spatial mismatch, " + shape_str(t.shape()) + " vs [*," +
                           std::to_string(h) + "," + std::to_string(w) + "]");
    }
    ctotal += t.dim(0);
  }
  Tensor y = Tensor::zeros({ctotal, h, w});
  auto& yd = y.data();
  std::size_t off = 0;
  for (const Tensor& t : inputs) {
    const auto& td = t.data();
    std::copy(td.begin(), td.end(), yd.begin() + static_cast<std::ptrdiff_t>(off));
    off += td.size();
  }
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (g.recording() && any) {
    y.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(inputs.size());
    for (const Tensor& t : inputs) impls.push_back(t.impl_ptr());
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      std::size_t pos = 0;
      for (const auto& xi : impls) {
        if (xi->requires_grad) {
          xi->ensure_grad();
          for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += yi->grad[pos + i];
        }
        pos += xi->data.size();
      }
    });
  }
  return y;
}

// View-copy of channels [start, start+count) of a [C,H,W] tensor.
inline Tensor slice_channels(Graph& g, const Tensor& x, int start, int count) {
  detail::check_chw(x, "slice_channels");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (start < 0 || count < 1 || start + count > c) {
    throw DimensionError("slice_channels: range [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of bounds for C=" + std::to_string(c));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y = Tensor::zeros({count, h, w});
  std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(start * plane),
            x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * plane), y.data().begin());
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    const std::size_t off = start * plane;
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->data.size(); ++i) xi->grad[off + i] += yi->grad[i];
    });
  }
  return y;
}

// 2x2 non-overlapping window mean over [C,H,W] with even H, W.
inline Tensor avg_pool2(Graph& g, const Tensor& x) {
  detail::check_chw(x, "avg_pool2");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("avg_pool2: spatial dims must be even, got " + shape_str(x.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  Tensor y = Tensor::zeros({c, oh, ow});
  const auto& xd = x.data();
  auto& yd = y.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* xp = xd.data() + static_cast<std::size_t>(ci) * h * w;
    double* yp = yd.data() + static_cast<std::size_t>(ci) * oh * ow;
    for (int y2 = 0; y2 < oh; ++y2) {
      for (int x2 = 0; x2 < ow; ++x2) {
        const double* r0 = xp + static_cast<std::size_t>(2 * y2) * w + 2 * x2;
        const double* r1 = r0 + w;
        yp[static_cast<std::size_t>(y2) * ow + x2] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  if (detail::track(g, {&x})) {
    y.set_requires_grad(true);
    auto xi = x.impl_ptr();
    auto yi = y.impl_ptr();
    g.record([=]() {
      yi->ensure_grad();
      xi->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        double* gx = xi->grad.data() + static_cast<std::size_t>(ci) * h * w;
        const double* gy = yi->grad.data() + static_cast<std::size_t>(ci) * oh * ow;
        for (int y2 = 0; y2 < oh; ++y2) {
          for (int x2 = 0; x2 < ow; ++x2) {
            const double gv = 0.25 * gy[static_cast<std::size_t>(y2) * ow + x2];
            double* r0 = gx + static_cast<std::size_t>(2 * y2) * w + 2 * x2;
            double* r1 = r0 + w;
            r0[0] += gv;
            r0[1] += gv;
            r1[0] += gv;
            r1[1] += gv;
          }
        }
      }
    });
  }
  return y;
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace hazeforge
