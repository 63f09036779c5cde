#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "seqdiff/tensor/graph.hpp"
#include "seqdiff/tensor/rng.hpp"
#include "seqdiff/tensor/tensor.hpp"

namespace seqdiff::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
T* grad_ptr(Tensor<T>& t) {
  return (t.defined() && t.requires_grad()) ? t.grad_buffer().data() : nullptr;
}

template <typename T>
const T* out_grad(const Tensor<T>& t) {
  return t.has_grad() ? t.grad().data() : nullptr;
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
}

template <typename T>
Tensor<T> finish(Graph<T>& g, Tensor<T> out, const char* op, bool tracked) {
  ensure_finite(out, op);
  out.set_requires_grad(tracked);
  (void)g;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool tracked = g.tracks(a, b);
  auto y = detail::finish(g, Tensor<T>(a.shape(), std::move(out)), "add", tracked);
  if (tracked) {
    g.record("add", {y}, [a, b, y]() mutable {
      const T* gy = detail::out_grad(y);
      if (T* ga = detail::grad_ptr(a)) for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i];
      if (T* gb = detail::grad_ptr(b)) for (std::size_t i = 0; i < y.size(); ++i) gb[i] += gy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool tracked = g.tracks(a, b);
  auto y = detail::finish(g, Tensor<T>(a.shape(), std::move(out)), "sub", tracked);
  if (tracked) {
    g.record("sub", {y}, [a, b, y]() mutable {
      const T* gy = detail::out_grad(y);
      if (T* ga = detail::grad_ptr(a)) for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i];
      if (T* gb = detail::grad_ptr(b)) for (std::size_t i = 0; i < y.size(); ++i) gb[i] -= gy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool tracked = g.tracks(a, b);
  auto y = detail::finish(g, Tensor<T>(a.shape(), std::move(out)), "mul", tracked);
  if (tracked) {
    g.record("mul", {y}, [a, b, y]() mutable {
      const T* gy = detail::out_grad(y);
      if (T* ga = detail::grad_ptr(a)) for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i] * b[i];
      if (T* gb = detail::grad_ptr(b)) for (std::size_t i = 0; i < y.size(); ++i) gb[i] += gy[i] * a[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, Tensor<T> a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  const bool tracked = g.tracks(a);
  auto y = detail::finish(g, Tensor<T>(a.shape(), std::move(out)), "scale", tracked);
  if (tracked) {
    g.record("scale", {y}, [a, y, s]() mutable {
      const T* gy = detail::out_grad(y);
      T* ga = detail::grad_ptr(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i] * s;
    });
  }
  return y;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(Graph<T>& g, Tensor<T> a, const char* op, Fwd fwd, Bwd dydx_from_y) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i]);
  const bool tracked = g.tracks(a);
  auto y = finish(g, Tensor<T>(a.shape(), std::move(out)), op, tracked);
  if (tracked) {
    g.record(op, {y}, [a, y, dydx_from_y]() mutable {
      const T* gy = out_grad(y);
      T* ga = grad_ptr(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i] * dydx_from_y(a[i], y[i]);
    });
  }
  return y;
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

}  // namespace detail

template <typename T>
Tensor<T> relu(Graph<T>& g, Tensor<T> a) {
  return detail::unary(
      g, std::move(a), "relu", [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, Tensor<T> a) {
  return detail::unary(
      g, std::move(a), "sigmoid", [](T x) { return detail::stable_sigmoid(x); },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(Graph<T>& g, Tensor<T> a) {
  return detail::unary(
      g, std::move(a), "tanh", [](T x) { return std::tanh(x); },
      [](T, T y) { return T{1} - y * y; });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(Graph<T>& g, Tensor<T> a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  const bool tracked = g.tracks(a);
  auto y = Tensor<T>(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()), tracked);
  if (tracked) {
    g.record("reshape", {y}, [a, y]() mutable {
      const T* gy = detail::out_grad(y);
      T* ga = detail::grad_ptr(a);
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gy[i];
    });
  }
  return y;
}

/// [d0, d1, ...] -> [d0, d1*...].
template <typename T>
Tensor<T> flatten(Graph<T>& g, Tensor<T> a) {
  if (a.rank() < 1) throw ShapeError("flatten: rank-0 tensor");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = rows == 0 ? 0 : a.size() / rows;
  return reshape(g, std::move(a), Shape{rows, cols});
}

/// Concatenate along `axis`; all other dimensions must agree.
template <typename T>
Tensor<T> concat(Graph<T>& g, std::vector<Tensor<T>> xs, std::size_t axis = 0) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = xs[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  for (const auto& x : xs) {
    if (x.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && x.dim(d) != ref[d]) {
        throw ShapeError("concat: shape mismatch " + to_string(x.shape()) + " vs " + to_string(ref));
      }
    }
    total_axis += x.dim(axis);
  }
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t chunk = x.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.ptr() + o * chunk, chunk, out.data() + o * total_axis * inner + offset);
    }
    offset += chunk;
  }
  const bool tracked = g.tracks_any(xs);
  auto y = Tensor<T>(std::move(out_shape), std::move(out), tracked);
  if (tracked) {
    g.record("concat", {y}, [xs, y, outer, inner, total_axis]() mutable {
      const T* gy = detail::out_grad(y);
      std::size_t offset = 0;
      for (auto& x : xs) {
        const std::size_t chunk = outer ? x.size() / outer : 0;
        if (T* gx = detail::grad_ptr(x)) {
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = gy + o * total_axis * inner + offset;
            for (std::size_t i = 0; i < chunk; ++i) gx[o * chunk + i] += src[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return y;
}

/// Gathers rows (entries along dimension 0). Indices may repeat.
template <typename T>
Tensor<T> select_rows(Graph<T>& g, Tensor<T> x, std::vector<std::size_t> indices) {
  if (x.rank() < 1) throw ShapeError("select_rows: rank-0 tensor");
  const std::size_t rows = x.dim(0);
  const std::size_t stride = rows == 0 ? 0 : x.size() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  std::vector<T> out(indices.size() * stride);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) throw ShapeError("select_rows: index out of range");
    std::copy_n(x.ptr() + indices[r] * stride, stride, out.data() + r * stride);
  }
  const bool tracked = g.tracks(x);
  auto y = Tensor<T>(std::move(out_shape), std::move(out), tracked);
  if (tracked) {
    g.record("select_rows", {y}, [x, y, indices = std::move(indices), stride]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::size_t i = 0; i < stride; ++i) gx[indices[r] * stride + i] += gy[r * stride + i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

/// Mean over one axis; the axis is removed from the shape.
template <typename T>
Tensor<T> mean(Graph<T>& g, Tensor<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("mean: axis out of range");
  if (s[axis] == 0) throw ShapeError("mean: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(outer * inner, T{0});
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const T* src = x.ptr() + (o * n + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += src[i];
    }
  }
  const T inv = T{1} / static_cast<T>(n);
  for (auto& v : out) v *= inv;
  const bool tracked = g.tracks(x);
  auto y = detail::finish(g, Tensor<T>(std::move(out_shape), std::move(out)), "mean", tracked);
  if (tracked) {
    g.record("mean", {y}, [x, y, outer, inner, n, inv]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += gy[o * inner + i] * inv;
        }
      }
    });
  }
  return y;
}

/// Like mean(), but each output sums its inputs in ascending order, so the
/// result is bit-identical under any permutation along `axis`.
template <typename T>
Tensor<T> order_invariant_mean(Graph<T>& g, Tensor<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("order_invariant_mean: axis out of range");
  if (s[axis] == 0) throw ShapeError("order_invariant_mean: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(outer * inner, T{0});
  std::vector<T> column(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      for (std::size_t k = 0; k < n; ++k) column[k] = x.ptr()[(o * n + k) * inner + i];
      std::sort(column.begin(), column.end());
      T acc{0};
      for (T v : column) acc += v;
      out[o * inner + i] = acc / static_cast<T>(n);
    }
  }
  const T inv = T{1} / static_cast<T>(n);
  const bool tracked = g.tracks(x);
  auto y = detail::finish(g, Tensor<T>(std::move(out_shape), std::move(out)), "order_invariant_mean", tracked);
  if (tracked) {
    g.record("order_invariant_mean", {y}, [x, y, outer, inner, n, inv]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += gy[o * inner + i] * inv;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean_all(Graph<T>& g, Tensor<T> x) {
  const std::size_t n = x.size();
  auto flat = reshape(g, std::move(x), Shape{n});
  return mean(g, std::move(flat), 0);
}

// ---------------------------------------------------------------------------
// Dense layers

/// y = x W^T + b for x [B, I], W [O, I], b [O] (bias optional).
template <typename T>
Tensor<T> linear(Graph<T>& g, Tensor<T> x, Tensor<T> w, Tensor<T> b = {}) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight " + to_string(w.shape()));
  }
  if (b.defined() && b.shape() != Shape{out_f}) throw ShapeError("linear: bias shape mismatch");
  std::vector<T> out(batch * out_f);
  {
    detail::ConstMapMat<T> X(x.ptr(), batch, in), W(w.ptr(), out_f, in);
    detail::MapMat<T> Y(out.data(), batch, out_f);
    Y.noalias() = X * W.transpose();
    if (b.defined()) {
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out_f; ++c) out[r * out_f + c] += b[c];
    }
  }
  const bool tracked = g.tracks(x, w, b);
  auto y = detail::finish(g, Tensor<T>(Shape{batch, out_f}, std::move(out)), "linear", tracked);
  if (tracked) {
    g.record("linear", {y}, [x, w, b, y, batch, in, out_f]() mutable {
      detail::ConstMapMat<T> GY(detail::out_grad(y), batch, out_f);
      if (T* gx = detail::grad_ptr(x)) {
        detail::MapMat<T> GX(gx, batch, in);
        GX.noalias() += GY * detail::ConstMapMat<T>(w.ptr(), out_f, in);
      }
      if (T* gw = detail::grad_ptr(w)) {
        detail::MapMat<T> GW(gw, out_f, in);
        GW.noalias() += GY.transpose() * detail::ConstMapMat<T>(x.ptr(), batch, in);
      }
      if (T* gb = detail::grad_ptr(b)) {
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < out_f; ++c) gb[c] += GY(r, c);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
};

template <typename T>
void im2col(const T* img, const ConvGeometry& geo, T* cols) {
  const std::size_t ncols = geo.col_cols();
  for (std::size_t ch = 0; ch < geo.c; ++ch) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        T* row = cols + ((ch * geo.kh + ki) * geo.kw + kj) * ncols;
        for (std::size_t oy = 0; oy < geo.oh; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ki) - static_cast<long>(geo.pad);
          T* dst = row + oy * geo.ow;
          if (iy < 0 || iy >= static_cast<long>(geo.h)) {
            std::fill_n(dst, geo.ow, T{0});
            continue;
          }
          const T* src = img + (ch * geo.h + static_cast<std::size_t>(iy)) * geo.w;
          for (std::size_t ox = 0; ox < geo.ow; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + kj) - static_cast<long>(geo.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(geo.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& geo, T* img) {
  const std::size_t ncols = geo.col_cols();
  for (std::size_t ch = 0; ch < geo.c; ++ch) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        const T* row = cols + ((ch * geo.kh + ki) * geo.kw + kj) * ncols;
        for (std::size_t oy = 0; oy < geo.oh; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ki) - static_cast<long>(geo.pad);
          if (iy < 0 || iy >= static_cast<long>(geo.h)) continue;
          T* dst = img + (ch * geo.h + static_cast<std::size_t>(iy)) * geo.w;
          const T* src = row + oy * geo.ow;
          for (std::size_t ox = 0; ox < geo.ow; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + kj) - static_cast<long>(geo.pad);
            if (ix >= 0 && ix < static_cast<long>(geo.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation. input [N,C,H,W], weight [F,C,kh,kw], bias [F] or undefined.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, Tensor<T> x, Tensor<T> w, Tensor<T> b, std::size_t stride,
                 std::size_t pad) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  detail::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
                           stride, pad, 0, 0};
  if (w.dim(1) != geo.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(geo.c) + " vs weight " +
                     to_string(w.shape()));
  }
  if (b.defined() && b.shape() != Shape{geo.f}) throw ShapeError("conv2d: bias shape mismatch");
  const long span_h = static_cast<long>(geo.h + 2 * pad) - static_cast<long>(geo.kh);
  const long span_w = static_cast<long>(geo.w + 2 * pad) - static_cast<long>(geo.kw);
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d: non-positive output size");
  geo.oh = static_cast<std::size_t>(span_h) / stride + 1;
  geo.ow = static_cast<std::size_t>(span_w) / stride + 1;

  const std::size_t in_img = geo.c * geo.h * geo.w;
  const std::size_t out_img = geo.f * geo.oh * geo.ow;
  std::vector<T> out(geo.n * out_img);
  std::vector<T> cols(geo.col_rows() * geo.col_cols());
  detail::ConstMapMat<T> W(w.ptr(), geo.f, geo.col_rows());
  for (std::size_t i = 0; i < geo.n; ++i) {
    detail::im2col(x.ptr() + i * in_img, geo, cols.data());
    detail::MapMat<T> Y(out.data() + i * out_img, geo.f, geo.col_cols());
    Y.noalias() = W * detail::ConstMapMat<T>(cols.data(), geo.col_rows(), geo.col_cols());
    if (b.defined()) {
      for (std::size_t f = 0; f < geo.f; ++f) Y.row(static_cast<Eigen::Index>(f)).array() += b[f];
    }
  }
  const bool tracked = g.tracks(x, w, b);
  auto y = detail::finish(g, Tensor<T>(Shape{geo.n, geo.f, geo.oh, geo.ow}, std::move(out)),
                          "conv2d", tracked);
  if (tracked) {
    g.record("conv2d", {y}, [x, w, b, y, geo, in_img, out_img]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      T* gw = detail::grad_ptr(w);
      T* gb = detail::grad_ptr(b);
      std::vector<T> cols(geo.col_rows() * geo.col_cols());
      detail::ConstMapMat<T> W(w.ptr(), geo.f, geo.col_rows());
      for (std::size_t i = 0; i < geo.n; ++i) {
        detail::ConstMapMat<T> GY(gy + i * out_img, geo.f, geo.col_cols());
        if (gw) {
          detail::im2col(x.ptr() + i * in_img, geo, cols.data());
          detail::MapMat<T> GW(gw, geo.f, geo.col_rows());
          GW.noalias() +=
              GY * detail::ConstMapMat<T>(cols.data(), geo.col_rows(), geo.col_cols()).transpose();
        }
        if (gx) {
          detail::MapMat<T> C(cols.data(), geo.col_rows(), geo.col_cols());
          C.noalias() = W.transpose() * GY;
          detail::col2im_add(cols.data(), geo, gx + i * in_img);
        }
        if (gb) {
          for (std::size_t f = 0; f < geo.f; ++f) gb[f] += GY.row(static_cast<Eigen::Index>(f)).sum();
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Normalization

/// Running statistics for batchnorm; not trainable.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
};

/// Per-channel normalization of [N,C] or [N,C,H,W].
///
/// Train mode normalizes with the batch mean and population variance, and
/// folds the batch into the running stats (unbiased variance, momentum 0.1).
/// Eval mode normalizes with the running stats.
template <typename T>
Tensor<T> batchnorm(Graph<T>& g, Tensor<T> x, Tensor<T> gamma, Tensor<T> beta,
                    BatchNormState<T>& state, bool train) {
  if (x.rank() != 2 && x.rank() != 4) throw ShapeError("batchnorm: expected [N,C] or [N,C,H,W]");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t hw = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || state.running_mean.size() != c) {
    throw ShapeError("batchnorm: channel count mismatch, input has " + std::to_string(c));
  }
  const std::size_t m = n * hw;
  if (m == 0) throw ShapeError("batchnorm: empty input");
  std::vector<T> mu(c), invstd(c);
  if (train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, ss = 0;
      T lo = x[ch * hw], hi = lo;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.ptr() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          s += p[k];
          lo = std::min(lo, p[k]);
          hi = std::max(hi, p[k]);
        }
      }
      // A constant channel normalizes to exactly zero.
      const double mean_v = lo == hi ? static_cast<double>(lo) : s / static_cast<double>(m);
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.ptr() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          const double d = p[k] - mean_v;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mu[ch] = static_cast<T>(mean_v);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      state.running_mean[ch] =
          (T{1} - state.momentum) * state.running_mean[ch] + state.momentum * static_cast<T>(mean_v);
      state.running_var[ch] =
          (T{1} - state.momentum) * state.running_var[ch] + state.momentum * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      invstd[ch] = T{1} / std::sqrt(state.running_var[ch] + state.eps);
    }
  }
  std::vector<T> xhat(x.size()), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const T xh = (x[base + k] - mu[ch]) * invstd[ch];
        xhat[base + k] = xh;
        out[base + k] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  const bool tracked = g.tracks(x, gamma, beta);
  auto y = detail::finish(g, Tensor<T>(x.shape(), std::move(out)), "batchnorm", tracked);
  if (tracked) {
    g.record("batchnorm", {y}, [x, gamma, beta, y, xhat = std::move(xhat), invstd = std::move(invstd),
                                n, c, hw, m, train]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      T* gg = detail::grad_ptr(gamma);
      T* gbeta = detail::grad_ptr(beta);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + ch) * hw;
          for (std::size_t k = 0; k < hw; ++k) {
            sum_dy += gy[base + k];
            sum_dy_xhat += gy[base + k] * xhat[base + k];
          }
        }
        if (gg) gg[ch] += static_cast<T>(sum_dy_xhat);
        if (gbeta) gbeta[ch] += static_cast<T>(sum_dy);
        if (!gx) continue;
        const T scale_ch = gamma[ch] * invstd[ch];
        if (train) {
          const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(m));
          const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(m));
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              gx[base + k] += scale_ch * (gy[base + k] - mean_dy - xhat[base + k] * mean_dy_xhat);
            }
          }
        } else {
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t k = 0; k < hw; ++k) gx[base + k] += scale_ch * gy[base + k];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling and dropout

/// Max pooling over [N,C,H,W]; padded cells never win.
template <typename T>
Tensor<T> maxpool2d(Graph<T>& g, Tensor<T> x, std::size_t kernel = 2, std::size_t stride = 2,
                    std::size_t pad = 0) {
  require_rank(x.shape(), 4, "maxpool2d input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel == 0 || stride == 0 || pad >= kernel) throw ShapeError("maxpool2d: bad geometry");
  if (h + 2 * pad < kernel || w + 2 * pad < kernel) throw ShapeError("maxpool2d: input too small");
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kernel) / stride + 1;
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.ptr() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (src[idx] > best) {
              best = src[idx];
              best_i = idx;
            }
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = plane * h * w + best_i;
      }
    }
  }
  const bool tracked = g.tracks(x);
  auto y = detail::finish(g, Tensor<T>(Shape{n, c, oh, ow}, std::move(out)), "maxpool2d", tracked);
  if (tracked) {
    g.record("maxpool2d", {y}, [x, y, arg = std::move(arg)]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += gy[o];
    });
  }
  return y;
}

/// [N,C,H,W] -> [N,C].
template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, Tensor<T> x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const Shape s{x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  auto flat = reshape(g, std::move(x), s);
  return mean(g, std::move(flat), 2);
}

/// Inverted dropout: kept units are scaled by 1/(1-p) during training;
/// identity otherwise.
template <typename T>
Tensor<T> dropout(Graph<T>& g, Tensor<T> x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size()), out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : T{0};
    out[i] = x[i] * mask[i];
  }
  const bool tracked = g.tracks(x);
  auto y = detail::finish(g, Tensor<T>(x.shape(), std::move(out)), "dropout", tracked);
  if (tracked) {
    g.record("dropout", {y}, [x, y, mask = std::move(mask)]() mutable {
      const T* gy = detail::out_grad(y);
      T* gx = detail::grad_ptr(x);
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Recurrent cell

template <typename T>
struct LstmWeights {
  Tensor<T> w_ih;  // [4H, I], gate blocks ordered i, f, g, o
  Tensor<T> w_hh;  // [4H, H]
  Tensor<T> bias;  // [4H]
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

template <typename T>
LstmState<T> lstm_cell(Graph<T>& g, Tensor<T> x, Tensor<T> h, Tensor<T> c, const LstmWeights<T>& wts) {
  require_rank(x.shape(), 2, "lstm_cell x");
  require_rank(h.shape(), 2, "lstm_cell h");
  const std::size_t batch = x.dim(0), in = x.dim(1), hid = h.dim(1);
  if (h.dim(0) != batch || c.shape() != h.shape()) throw ShapeError("lstm_cell: state shape mismatch");
  if (wts.w_ih.shape() != Shape{4 * hid, in} || wts.w_hh.shape() != Shape{4 * hid, hid} ||
      wts.bias.shape() != Shape{4 * hid}) {
    throw ShapeError("lstm_cell: weight shapes do not match input " + std::to_string(in) +
                     " / hidden " + std::to_string(hid));
  }
  const std::size_t g4 = 4 * hid;
  std::vector<T> gates(batch * g4);
  {
    detail::MapMat<T> G(gates.data(), batch, g4);
    G.noalias() = detail::ConstMapMat<T>(x.ptr(), batch, in) *
                  detail::ConstMapMat<T>(wts.w_ih.ptr(), g4, in).transpose();
    G.noalias() += detail::ConstMapMat<T>(h.ptr(), batch, hid) *
                   detail::ConstMapMat<T>(wts.w_hh.ptr(), g4, hid).transpose();
  }
  std::vector<T> h_new(batch * hid), c_new(batch * hid), tanh_c(batch * hid);
  for (std::size_t b = 0; b < batch; ++b) {
    T* row = gates.data() + b * g4;
    for (std::size_t k = 0; k < g4; ++k) row[k] += wts.bias[k];
    for (std::size_t j = 0; j < hid; ++j) {
      row[j] = detail::stable_sigmoid(row[j]);                      // i
      row[hid + j] = detail::stable_sigmoid(row[hid + j]);          // f
      row[2 * hid + j] = std::tanh(row[2 * hid + j]);               // g
      row[3 * hid + j] = detail::stable_sigmoid(row[3 * hid + j]);  // o
      const std::size_t s = b * hid + j;
      c_new[s] = row[hid + j] * c[s] + row[j] * row[2 * hid + j];
      tanh_c[s] = std::tanh(c_new[s]);
      h_new[s] = row[3 * hid + j] * tanh_c[s];
    }
  }
  const bool tracked = g.recording() &&
                       (x.requires_grad() || h.requires_grad() || c.requires_grad() ||
                        wts.w_ih.requires_grad() || wts.w_hh.requires_grad() || wts.bias.requires_grad());
  auto hy = detail::finish(g, Tensor<T>(Shape{batch, hid}, std::move(h_new)), "lstm_cell", tracked);
  auto cy = detail::finish(g, Tensor<T>(Shape{batch, hid}, std::move(c_new)), "lstm_cell", tracked);
  if (tracked) {
    g.record("lstm_cell", {hy, cy},
             [x, h, c, wts, hy, cy, gates = std::move(gates), tanh_c = std::move(tanh_c), batch, in,
              hid, g4]() mutable {
               const T* ghy = detail::out_grad(hy);
               const T* gcy = detail::out_grad(cy);
               std::vector<T> dpre(batch * g4);
               T* gc = detail::grad_ptr(c);
               for (std::size_t b = 0; b < batch; ++b) {
                 const T* row = gates.data() + b * g4;
                 T* drow = dpre.data() + b * g4;
                 for (std::size_t j = 0; j < hid; ++j) {
                   const std::size_t s = b * hid + j;
                   const T ig = row[j], fg = row[hid + j], gg = row[2 * hid + j], og = row[3 * hid + j];
                   const T dh = ghy ? ghy[s] : T{0};
                   T dc = gcy ? gcy[s] : T{0};
                   dc += dh * og * (T{1} - tanh_c[s] * tanh_c[s]);
                   drow[j] = dc * gg * ig * (T{1} - ig);
                   drow[hid + j] = dc * c[s] * fg * (T{1} - fg);
                   drow[2 * hid + j] = dc * ig * (T{1} - gg * gg);
                   drow[3 * hid + j] = dh * tanh_c[s] * og * (T{1} - og);
                   if (gc) gc[s] += dc * fg;
                 }
               }
               detail::ConstMapMat<T> D(dpre.data(), batch, g4);
               if (T* gx = detail::grad_ptr(x)) {
                 detail::MapMat<T>(gx, batch, in).noalias() +=
                     D * detail::ConstMapMat<T>(wts.w_ih.ptr(), g4, in);
               }
               if (T* gh = detail::grad_ptr(h)) {
                 detail::MapMat<T>(gh, batch, hid).noalias() +=
                     D * detail::ConstMapMat<T>(wts.w_hh.ptr(), g4, hid);
               }
               auto w_ih = wts.w_ih, w_hh = wts.w_hh, bias = wts.bias;
               if (T* gw = detail::grad_ptr(w_ih)) {
                 detail::MapMat<T>(gw, g4, in).noalias() +=
                     D.transpose() * detail::ConstMapMat<T>(x.ptr(), batch, in);
               }
               if (T* gw = detail::grad_ptr(w_hh)) {
                 detail::MapMat<T>(gw, g4, hid).noalias() +=
                     D.transpose() * detail::ConstMapMat<T>(h.ptr(), batch, hid);
               }
               if (T* gb = detail::grad_ptr(bias)) {
                 for (std::size_t b = 0; b < batch; ++b)
                   for (std::size_t k = 0; k < g4; ++k) gb[k] += D(b, k);
               }
             });
  }
  return {hy, cy};
}

// ---------------------------------------------------------------------------
// Loss

/// Mean binary cross-entropy over logits, in the log-sum-exp form
/// max(z,0) - z*y + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> bce_with_logits(Graph<T>& g, Tensor<T> logits, const std::vector<int>& targets) {
  if (logits.size() != targets.size()) throw ShapeError("bce_with_logits: logits/targets length mismatch");
  if (targets.empty()) throw ShapeError("bce_with_logits: empty batch");
  for (int t : targets) {
    if (t != 0 && t != 1) throw std::invalid_argument("bce_with_logits: target must be 0 or 1");
  }
  const std::size_t n = targets.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const bool tracked = g.tracks(logits);
  auto y = detail::finish(g, Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))),
                          "bce_with_logits", tracked);
  if (tracked) {
    g.record("bce_with_logits", {y}, [logits, y, targets, n]() mutable {
      const T gy = detail::out_grad(y)[0];
      T* gz = detail::grad_ptr(logits);
      for (std::size_t i = 0; i < n; ++i) {
        gz[i] += gy * (detail::stable_sigmoid(logits[i]) - static_cast<T>(targets[i])) / static_cast<T>(n);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> bce_with_logits(Graph<T>& g, Tensor<T> logit, int target) {
  if (logit.size() != 1) throw ShapeError("bce_with_logits: expected a scalar logit");
  return bce_with_logits(g, std::move(logit), std::vector<int>{target});
}

}  // namespace seqdiff::ops
