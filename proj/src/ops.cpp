#include "ampn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace ampn {

// ---------------------------------------------------------------------------
// LinearMap1D

namespace {

struct MapBuilder {
  LinearMap1D m;
  MapBuilder(int in, int out) {
    m.in_size = in;
    m.out_size = out;
    m.offset.reserve(out + 1);
    m.offset.push_back(0);
  }
  void tap(int i, double w) {
    // merge repeated indices so the operator stays compact
    for (int k = m.offset.back(); k < static_cast<int>(m.index.size()); ++k) {
      if (m.index[k] == i) {
        m.weight[k] += w;
        return;
      }
    }
    m.index.push_back(i);
    m.weight.push_back(w);
  }
  void next() { m.offset.push_back(static_cast<int>(m.index.size())); }
};

}  // namespace

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m >= n ? period - m : m;
}

LinearMap1D LinearMap1D::identity(int n) {
  MapBuilder b(n, n);
  for (int j = 0; j < n; ++j) {
    b.tap(j, 1.0);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::bilinear(int in_size, int out_size) {
  MapBuilder b(in_size, out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int j = 0; j < out_size; ++j) {
    double src = std::max(0.0, (j + 0.5) * scale - 0.5);
    int i0 = std::min(static_cast<int>(src), in_size - 1);
    int i1 = std::min(i0 + 1, in_size - 1);
    double t = src - i0;
    b.tap(i0, 1.0 - t);
    if (t > 0.0) b.tap(i1, t);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::nearest_up(int in_size, int factor) {
  MapBuilder b(in_size, in_size * factor);
  for (int j = 0; j < in_size * factor; ++j) {
    b.tap(j / factor, 1.0);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::box_down(int in_size, int factor) {
  if (in_size % factor != 0) throw ShapeError("box_down: size not divisible by factor");
  MapBuilder b(in_size, in_size / factor);
  for (int j = 0; j < in_size / factor; ++j) {
    for (int k = 0; k < factor; ++k) b.tap(j * factor + k, 1.0 / factor);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::filter_reflect(int size, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size()) / 2;
  MapBuilder b(size, size);
  for (int j = 0; j < size; ++j) {
    for (int k = -r; k <= r; ++k) b.tap(reflect_index(j + k, size), kernel[k + r]);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::filter_valid(int size, const std::vector<double>& kernel) {
  const int klen = static_cast<int>(kernel.size());
  if (size < klen) throw ShapeError("filter_valid: input smaller than kernel");
  MapBuilder b(size, size - klen + 1);
  for (int j = 0; j + klen <= size; ++j) {
    for (int k = 0; k < klen; ++k) b.tap(j + k, kernel[k]);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::reduce(int in_size, const std::vector<double>& kernel) {
  if (in_size % 2 != 0) throw ShapeError("reduce: odd size");
  const int r = static_cast<int>(kernel.size()) / 2;
  MapBuilder b(in_size, in_size / 2);
  for (int j = 0; j < in_size / 2; ++j) {
    for (int k = -r; k <= r; ++k) b.tap(reflect_index(2 * j + k, in_size), kernel[k + r]);
    b.next();
  }
  return b.m;
}

LinearMap1D LinearMap1D::expand(int in_size, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size()) / 2;
  const int out = 2 * in_size;
  MapBuilder b(in_size, out);
  for (int j = 0; j < out; ++j) {
    for (int k = -r; k <= r; ++k) {
      int u = reflect_index(j + k, out);
      if (u % 2 == 0) b.tap(u / 2, 2.0 * kernel[k + r]);
    }
    b.next();
  }
  return b.m;
}

// ---------------------------------------------------------------------------
// separable application

namespace {

// Applies m along contiguous rows: in [rows, in_size] -> out [rows, out_size].
template <typename Scalar>
void apply_rows(const Scalar* in, Scalar* out, Eigen::Index rows, const LinearMap1D& m) {
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar* src = in + r * m.in_size;
    Scalar* dst = out + r * m.out_size;
    for (int j = 0; j < m.out_size; ++j) {
      Scalar acc = 0;
      for (int k = m.offset[j]; k < m.offset[j + 1]; ++k) acc += Scalar(m.weight[k]) * src[m.index[k]];
      dst[j] = acc;
    }
  }
}

template <typename Scalar>
void apply_rows_adjoint(const Scalar* g, Scalar* out, Eigen::Index rows, const LinearMap1D& m) {
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar* src = g + r * m.out_size;
    Scalar* dst = out + r * m.in_size;
    std::fill(dst, dst + m.in_size, Scalar(0));
    for (int j = 0; j < m.out_size; ++j) {
      for (int k = m.offset[j]; k < m.offset[j + 1]; ++k) dst[m.index[k]] += Scalar(m.weight[k]) * src[j];
    }
  }
}

// Applies m along columns of each [h, w] plane: in [planes, in_size, w] -> out [planes, out_size, w].
template <typename Scalar>
void apply_cols(const Scalar* in, Scalar* out, Eigen::Index planes, int w, const LinearMap1D& m) {
  using Row = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using RowOut = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  for (Eigen::Index p = 0; p < planes; ++p) {
    const Scalar* src = in + p * m.in_size * w;
    Scalar* dst = out + p * m.out_size * w;
    for (int j = 0; j < m.out_size; ++j) {
      RowOut o(dst + static_cast<Eigen::Index>(j) * w, w);
      o.setZero();
      for (int k = m.offset[j]; k < m.offset[j + 1]; ++k) {
        o += Scalar(m.weight[k]) * Row(src + static_cast<Eigen::Index>(m.index[k]) * w, w);
      }
    }
  }
}

template <typename Scalar>
void apply_cols_adjoint(const Scalar* g, Scalar* out, Eigen::Index planes, int w,
                        const LinearMap1D& m) {
  using Row = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using RowOut = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  for (Eigen::Index p = 0; p < planes; ++p) {
    const Scalar* src = g + p * m.out_size * w;
    Scalar* dst = out + p * m.in_size * w;
    std::fill(dst, dst + static_cast<Eigen::Index>(m.in_size) * w, Scalar(0));
    for (int j = 0; j < m.out_size; ++j) {
      Row gi(src + static_cast<Eigen::Index>(j) * w, w);
      for (int k = m.offset[j]; k < m.offset[j + 1]; ++k) {
        RowOut(dst + static_cast<Eigen::Index>(m.index[k]) * w, w) += Scalar(m.weight[k]) * gi;
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> apply_separable(const Tensor<Scalar>& x, const LinearMap1D& along_h,
                               const LinearMap1D& along_w) {
  const Shape s = x.shape();
  if (s.h != along_h.in_size || s.w != along_w.in_size) {
    throw ShapeError("apply_separable: operator does not match input " + s.str());
  }
  const Eigen::Index planes = static_cast<Eigen::Index>(s.n) * s.c;
  Tensor<Scalar> tmp(Shape{s.n, s.c, s.h, along_w.out_size});
  apply_rows(x.data(), tmp.data(), planes * s.h, along_w);
  Tensor<Scalar> out(Shape{s.n, s.c, along_h.out_size, along_w.out_size});
  apply_cols(tmp.data(), out.data(), planes, along_w.out_size, along_h);
  return out;
}

template <typename Scalar>
Tensor<Scalar> apply_separable_adjoint(const Tensor<Scalar>& g, const LinearMap1D& along_h,
                                       const LinearMap1D& along_w) {
  const Shape s = g.shape();
  const Eigen::Index planes = static_cast<Eigen::Index>(s.n) * s.c;
  Tensor<Scalar> tmp(Shape{s.n, s.c, along_h.in_size, along_w.out_size});
  apply_cols_adjoint(g.data(), tmp.data(), planes, along_w.out_size, along_h);
  Tensor<Scalar> out(Shape{s.n, s.c, along_h.in_size, along_w.in_size});
  apply_rows_adjoint(tmp.data(), out.data(), planes * along_h.in_size, along_w);
  return out;
}

// ---------------------------------------------------------------------------
// broadcasting elementwise

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  int* o[4] = {&out.n, &out.c, &out.h, &out.w};
  for (int d = 0; d < 4; ++d) {
    int da = a.dim(d), db = b.dim(d);
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: incompatible shapes " + a.str() + " and " + b.str());
    }
    *o[d] = std::max(da, db);
  }
  return out;
}

std::array<Eigen::Index, 4> broadcast_strides(const Shape& s) {
  std::array<Eigen::Index, 4> st{static_cast<Eigen::Index>(s.c) * s.h * s.w,
                                 static_cast<Eigen::Index>(s.h) * s.w, s.w, 1};
  for (int d = 0; d < 4; ++d) {
    if (s.dim(d) == 1) st[d] = 0;
  }
  return st;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
  const auto sa = broadcast_strides(a);
  const auto sb = broadcast_strides(b);
  Eigen::Index o = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int y = 0; y < out.h; ++y) {
        Eigen::Index ia = n * sa[0] + c * sa[1] + y * sa[2];
        Eigen::Index ib = n * sb[0] + c * sb[1] + y * sb[2];
        for (int x = 0; x < out.w; ++x, ++o) fn(o, ia + x * sa[3], ib + x * sb[3]);
      }
}

// Reduces an output-shaped gradient down to `target` shape by summing broadcast dims.
template <typename Scalar>
void accumulate_reduced(Tensor<Scalar>& dst, const Tensor<Scalar>& g) {
  if (dst.shape() == g.shape()) {
    dst.array() += g.array();
    return;
  }
  const auto sd = broadcast_strides(dst.shape());
  const Shape& s = g.shape();
  Eigen::Index o = 0;
  Scalar* d = dst.data();
  const Scalar* gp = g.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y) {
        Eigen::Index id = n * sd[0] + c * sd[1] + y * sd[2];
        for (int x = 0; x < s.w; ++x, ++o) d[id + x * sd[3]] += gp[o];
      }
}

template <typename Scalar, typename Fwd>
Tensor<Scalar> broadcast_apply(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Fwd&& f) {
  if (a.shape() == b.shape()) {
    Tensor<Scalar> out(a.shape());
    out.array() = f(a.array(), b.array());
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out(os);
  Scalar* o = out.data();
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  for_each_broadcast(os, a.shape(), b.shape(), [&](Eigen::Index i, Eigen::Index ia, Eigen::Index ib) {
    o[i] = f(pa[ia], pb[ib]);
  });
  return out;
}

// Expands `x` to shape `s` (broadcast copy).
template <typename Scalar>
Tensor<Scalar> expand_to(const Tensor<Scalar>& x, const Shape& s) {
  if (x.shape() == s) return x;
  Tensor<Scalar> out(s);
  Scalar* o = out.data();
  const Scalar* p = x.data();
  for_each_broadcast(s, x.shape(), s, [&](Eigen::Index i, Eigen::Index ix, Eigen::Index) { o[i] = p[ix]; });
  return out;
}

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = broadcast_apply(a.value(), b.value(), [](auto x, auto y) { return x + y; });
  NodePtr<Scalar> na = a.node(), nb = b.node();
  return make_result<Scalar>(std::move(out), "add", {na, nb}, [na, nb](Node<Scalar>& self) {
    if (na->requires_grad) accumulate_reduced(na->grad_buffer(), self.grad);
    if (nb->requires_grad) accumulate_reduced(nb->grad_buffer(), self.grad);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = broadcast_apply(a.value(), b.value(), [](auto x, auto y) { return x - y; });
  NodePtr<Scalar> na = a.node(), nb = b.node();
  return make_result<Scalar>(std::move(out), "sub", {na, nb}, [na, nb](Node<Scalar>& self) {
    if (na->requires_grad) accumulate_reduced(na->grad_buffer(), self.grad);
    if (nb->requires_grad) {
      Tensor<Scalar> neg(self.grad.shape(), typename Tensor<Scalar>::Array(-self.grad.array()));
      accumulate_reduced(nb->grad_buffer(), neg);
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = broadcast_apply(a.value(), b.value(), [](auto x, auto y) { return x * y; });
  NodePtr<Scalar> na = a.node(), nb = b.node();
  return make_result<Scalar>(std::move(out), "mul", {na, nb}, [na, nb](Node<Scalar>& self) {
    const Shape& s = self.grad.shape();
    if (na->requires_grad) {
      Tensor<Scalar> g(s);
      g.array() = self.grad.array() * expand_to(nb->value, s).array();
      accumulate_reduced(na->grad_buffer(), g);
    }
    if (nb->requires_grad) {
      Tensor<Scalar> g(s);
      g.array() = self.grad.array() * expand_to(na->value, s).array();
      accumulate_reduced(nb->grad_buffer(), g);
    }
  });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto out = broadcast_apply(a.value(), b.value(), [](auto x, auto y) { return x / y; });
  NodePtr<Scalar> na = a.node(), nb = b.node();
  return make_result<Scalar>(std::move(out), "div", {na, nb}, [na, nb](Node<Scalar>& self) {
    const Shape& s = self.grad.shape();
    Tensor<Scalar> bx = expand_to(nb->value, s);
    if (na->requires_grad) {
      Tensor<Scalar> g(s);
      g.array() = self.grad.array() / bx.array();
      accumulate_reduced(na->grad_buffer(), g);
    }
    if (nb->requires_grad) {
      Tensor<Scalar> g(s);
      g.array() = -self.grad.array() * self.value.array() / bx.array();
      accumulate_reduced(nb->grad_buffer(), g);
    }
  });
}

// ---------------------------------------------------------------------------
// unary

namespace {

// Unary op with derivative computed from the input value.
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, std::string_view name, F f, DF df) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().unaryExpr(f);
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), name, {nx}, [nx, df](Node<Scalar>& self) {
    nx->grad_buffer().array() += self.grad.array() * nx->value.array().unaryExpr(df);
  });
}

}  // namespace

template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, Scalar scale, Scalar shift) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array() * scale + shift;
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "affine", {nx}, [nx, scale](Node<Scalar>& self) {
    nx->grad_buffer().array() += self.grad.array() * scale;
  });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  return unary(x, "square", [](Scalar v) { return v * v; }, [](Scalar v) { return 2 * v; });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  return unary(
      x, "abs", [](Scalar v) { return std::abs(v); },
      [](Scalar v) { return v > 0 ? Scalar(1) : v < 0 ? Scalar(-1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = Scalar(1) / (Scalar(1) + (-x.value().array()).exp());
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "sigmoid", {nx}, [nx](Node<Scalar>& self) {
    const auto& y = self.value.array();
    nx->grad_buffer().array() += self.grad.array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return unary(
      x, "relu", [](Scalar v) { return v > 0 ? v : Scalar(0); },
      [](Scalar v) { return v > 0 ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> relu6(const Var<Scalar>& x) {
  return unary(
      x, "relu6", [](Scalar v) { return std::clamp(v, Scalar(0), Scalar(6)); },
      [](Scalar v) { return (v > 0 && v < 6) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> hardswish(const Var<Scalar>& x) {
  return unary(
      x, "hardswish",
      [](Scalar v) { return v * std::clamp(v + Scalar(3), Scalar(0), Scalar(6)) / Scalar(6); },
      [](Scalar v) {
        if (v <= -3) return Scalar(0);
        if (v >= 3) return Scalar(1);
        return (2 * v + 3) / Scalar(6);
      });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  return unary(
      x, "leaky_relu", [slope](Scalar v) { return v > 0 ? v : slope * v; },
      [slope](Scalar v) { return v > 0 ? Scalar(1) : slope; });
}

template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi) {
  return unary(
      x, "clamp", [lo, hi](Scalar v) { return std::clamp(v, lo, hi); },
      [lo, hi](Scalar v) { return (v >= lo && v <= hi) ? Scalar(1) : Scalar(0); });
}

std::vector<double> kink_points(std::string_view op) {
  if (op == "abs" || op == "relu" || op == "leaky_relu") return {0.0};
  if (op == "relu6") return {0.0, 6.0};
  if (op == "hardswish") return {-3.0, 3.0};
  return {};
}

// ---------------------------------------------------------------------------
// convolution

namespace {

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

template <typename Scalar>
void im2col(const Scalar* img, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            Scalar* cols) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols + (static_cast<Eigen::Index>((ch * k + ky) * k + kx)) * oh * ow;
        const Scalar* plane = img + static_cast<Eigen::Index>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* r = row + static_cast<Eigen::Index>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(r, r + ow, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<Eigen::Index>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            r[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar(0);
          }
        }
      }
}

template <typename Scalar>
void col2im(const Scalar* cols, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            Scalar* img) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = cols + (static_cast<Eigen::Index>((ch * k + ky) * k + kx)) * oh * ow;
        Scalar* plane = img + static_cast<Eigen::Index>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const Scalar* r = row + static_cast<Eigen::Index>(oy) * ow;
          Scalar* dst = plane + static_cast<Eigen::Index>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += r[ox];
          }
        }
      }
}

// Valid output-x range for a given kernel tap: ox in [lo, hi).
inline void tap_range(int kx, int stride, int pad, int w, int ow, int& lo, int& hi) {
  // need 0 <= ox*stride - pad + kx < w
  auto floor_div = [](int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  lo = std::max(0, -floor_div(kx - pad, stride));
  hi = std::min(ow, floor_div(w - 1 + pad - kx, stride) + 1);
}

template <typename Scalar>
void depthwise_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& wt, Tensor<Scalar>& out,
                       int k, int stride, int pad) {
  const Shape s = x.shape();
  const int oh = out.h(), ow = out.w();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const Scalar* in = x.plane(n, c);
      Scalar* o = out.plane(n, c);
      const Scalar* kw = wt.plane(c, 0);
      for (int oy = 0; oy < oh; ++oy) {
        Scalar* orow = o + static_cast<Eigen::Index>(oy) * ow;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          const Scalar* irow = in + static_cast<Eigen::Index>(iy) * s.w;
          for (int kx = 0; kx < k; ++kx) {
            const Scalar wv = kw[ky * k + kx];
            int lo, hi;
            tap_range(kx, stride, pad, s.w, ow, lo, hi);
            const int base = -pad + kx;
            if (stride == 1) {
              for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox + base];
            } else {
              for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox * stride + base];
            }
          }
        }
      }
    }
}

template <typename Scalar>
void depthwise_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& wt, const Tensor<Scalar>& g,
                        Tensor<Scalar>* dx, Tensor<Scalar>* dw, int k, int stride, int pad) {
  const Shape s = x.shape();
  const int oh = g.h(), ow = g.w();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const Scalar* in = x.plane(n, c);
      const Scalar* gp = g.plane(n, c);
      const Scalar* kw = wt.plane(c, 0);
      Scalar* dxp = dx ? dx->plane(n, c) : nullptr;
      Scalar* dwp = dw ? dw->plane(c, 0) : nullptr;
      for (int oy = 0; oy < oh; ++oy) {
        const Scalar* grow = gp + static_cast<Eigen::Index>(oy) * ow;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          const Scalar* irow = in + static_cast<Eigen::Index>(iy) * s.w;
          Scalar* dxrow = dxp ? dxp + static_cast<Eigen::Index>(iy) * s.w : nullptr;
          for (int kx = 0; kx < k; ++kx) {
            int lo, hi;
            tap_range(kx, stride, pad, s.w, ow, lo, hi);
            const int base = -pad + kx;
            const Scalar wv = kw[ky * k + kx];
            Scalar acc = 0;
            for (int ox = lo; ox < hi; ++ox) {
              const int ix = ox * stride + base;
              acc += grow[ox] * irow[ix];
              if (dxrow) dxrow[ix] += wv * grow[ox];
            }
            if (dwp) dwp[ky * k + kx] += acc;
          }
        }
      }
    }
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Conv2dOptions opt) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int k = ws.h;
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel");
  const bool depthwise = opt.groups > 1;
  if (depthwise) {
    if (opt.groups != xs.c || ws.n != xs.c || ws.c != 1) {
      throw ShapeError("conv2d: only depthwise grouping is supported");
    }
  } else if (ws.c != xs.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                     std::to_string(xs.c));
  }
  const int oh = conv_out(xs.h, k, opt.stride, opt.padding);
  const int ow = conv_out(xs.w, k, opt.stride, opt.padding);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int cout = ws.n;
  Tensor<Scalar> out(Shape{xs.n, cout, oh, ow});

  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;
  const int kk = xs.c * k * k;
  const bool pointwise = (k == 1 && opt.stride == 1 && opt.padding == 0);

  if (depthwise) {
    depthwise_forward(x.value(), weight.value(), out, k, opt.stride, opt.padding);
  } else {
    CMap wm(weight.value().data(), cout, kk);
    Mat cols;
    if (!pointwise) cols.resize(kk, static_cast<Eigen::Index>(oh) * ow);
    for (int n = 0; n < xs.n; ++n) {
      Map o(out.plane(n, 0), cout, static_cast<Eigen::Index>(oh) * ow);
      if (pointwise) {
        o.noalias() = wm * x.value().item_matrix(n);
      } else {
        im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, k, opt.stride, opt.padding, oh, ow,
               cols.data());
        o.noalias() = wm * cols;
      }
    }
  }
  if (bias.defined()) {
    if (bias.value().size() != cout) throw ShapeError("conv2d: bias size mismatch");
    const Scalar* b = bias.value().data();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < cout; ++c) {
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(out.plane(n, c),
                                                            static_cast<Eigen::Index>(oh) * ow) += b[c];
      }
  }

  NodePtr<Scalar> nx = x.node(), nw = weight.node(), nb = bias.node();
  std::vector<NodePtr<Scalar>> parents{nx, nw};
  if (nb) parents.push_back(nb);
  return make_result<Scalar>(
      std::move(out), depthwise ? "conv2d_dw" : "conv2d", std::move(parents),
      [nx, nw, nb, opt, k, oh, ow, kk, cout, depthwise, pointwise](Node<Scalar>& self) {
        const Shape xs = nx->value.shape();
        const Tensor<Scalar>& g = self.grad;
        const Eigen::Index hw = static_cast<Eigen::Index>(oh) * ow;
        if (nb && nb->requires_grad) {
          Scalar* db = nb->grad_buffer().data();
          for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < cout; ++c) {
              db[c] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.plane(n, c), hw).sum();
            }
        }
        if (depthwise) {
          depthwise_backward(nx->value, nw->value, g, nx->requires_grad ? &nx->grad_buffer() : nullptr,
                             nw->requires_grad ? &nw->grad_buffer() : nullptr, k, opt.stride,
                             opt.padding);
          return;
        }
        CMap wm(nw->value.data(), cout, kk);
        Mat cols;
        if (!pointwise) cols.resize(kk, hw);
        Mat dcols;
        for (int n = 0; n < xs.n; ++n) {
          CMap gm(g.plane(n, 0), cout, hw);
          if (!pointwise) {
            im2col(nx->value.plane(n, 0), xs.c, xs.h, xs.w, k, opt.stride, opt.padding, oh, ow,
                   cols.data());
          }
          if (nw->requires_grad) {
            Map dw(nw->grad_buffer().data(), cout, kk);
            if (pointwise) {
              dw.noalias() += gm * nx->value.item_matrix(n).transpose();
            } else {
              dw.noalias() += gm * cols.transpose();
            }
          }
          if (nx->requires_grad) {
            if (pointwise) {
              Map dx(nx->grad_buffer().plane(n, 0), xs.c, hw);
              dx.noalias() += wm.transpose() * gm;
            } else {
              dcols.noalias() = wm.transpose() * gm;
              col2im(dcols.data(), xs.c, xs.h, xs.w, k, opt.stride, opt.padding, oh, ow,
                     nx->grad_buffer().plane(n, 0));
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input");
  Shape s = xs.front().shape();
  int total = 0;
  for (const auto& v : xs) {
    const Shape& vs = v.shape();
    if (vs.n != s.n || vs.h != s.h || vs.w != s.w) {
      throw ShapeError("concat_channels: spatial/batch mismatch " + vs.str() + " vs " + s.str());
    }
    total += vs.c;
  }
  Shape os{s.n, total, s.h, s.w};
  Tensor<Scalar> out(os);
  const Eigen::Index plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& v : xs) {
      const Eigen::Index cnt = v.shape().c * plane;
      std::copy(v.value().plane(n, 0), v.value().plane(n, 0) + cnt, out.plane(n, c0));
      c0 += v.shape().c;
    }
  }
  std::vector<NodePtr<Scalar>> parents;
  for (const auto& v : xs) parents.push_back(v.node());
  auto ps = parents;
  return make_result<Scalar>(std::move(out), "concat", std::move(parents), [ps, plane](Node<Scalar>& self) {
    for (int n = 0; n < self.value.n(); ++n) {
      int c0 = 0;
      for (const auto& p : ps) {
        const int c = p->value.c();
        if (p->requires_grad) {
          const Eigen::Index cnt = c * plane;
          Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(p->grad_buffer().plane(n, 0), cnt) +=
              Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(self.grad.plane(n, c0), cnt);
        }
        c0 += c;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> mean_over_width(const Var<Scalar>& x) {
  const Shape s = x.shape();
  return resample(x, LinearMap1D::identity(s.h), LinearMap1D::box_down(s.w, s.w));
}

template <typename Scalar>
Var<Scalar> mean_over_height(const Var<Scalar>& x) {
  const Shape s = x.shape();
  return resample(x, LinearMap1D::box_down(s.h, s.h), LinearMap1D::identity(s.w));
}

template <typename Scalar>
Var<Scalar> resample(const Var<Scalar>& x, const LinearMap1D& along_h, const LinearMap1D& along_w) {
  Tensor<Scalar> out = apply_separable(x.value(), along_h, along_w);
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "resample", {nx}, [nx, along_h, along_w](Node<Scalar>& self) {
    nx->grad_buffer().array() += apply_separable_adjoint(self.grad, along_h, along_w).array();
  });
}

template <typename Scalar>
Var<Scalar> resize_bilinear(const Var<Scalar>& x, int h, int w) {
  const Shape s = x.shape();
  if (s.h == h && s.w == w) return x;
  return resample(x, LinearMap1D::bilinear(s.h, h), LinearMap1D::bilinear(s.w, w));
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x) {
  const Shape s = x.shape();
  return resample(x, LinearMap1D::nearest_up(s.h, 2), LinearMap1D::nearest_up(s.w, 2));
}

template <typename Scalar>
Var<Scalar> channel_normalize(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  const Eigen::Index plane = s.plane();
  Tensor<Scalar> norm(Shape{s.n, 1, s.h, s.w});
  Tensor<Scalar> out(s);
  for (int n = 0; n < s.n; ++n) {
    auto nm = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(norm.plane(n, 0), plane);
    nm.setZero();
    for (int c = 0; c < s.c; ++c) {
      nm += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.value().plane(n, c), plane).square();
    }
    nm = nm.sqrt();
    for (int c = 0; c < s.c; ++c) {
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(out.plane(n, c), plane) =
          Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.value().plane(n, c), plane) /
          (nm + eps);
    }
  }
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(
      std::move(out), "channel_normalize", {nx}, [nx, norm, eps, plane](Node<Scalar>& self) {
        // y = x / (r + eps), r = |x|; dy/dx_j = e_j/(r+eps) - x x_j / (r (r+eps)^2)
        using ArrMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
        using CArrMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
        const Shape s = nx->value.shape();
        Eigen::Array<Scalar, Eigen::Dynamic, 1> dotgx(plane);
        for (int n = 0; n < s.n; ++n) {
          CArrMap r(norm.plane(n, 0), plane);
          dotgx.setZero();
          for (int c = 0; c < s.c; ++c) dotgx += CArrMap(self.grad.plane(n, c), plane) * CArrMap(nx->value.plane(n, c), plane);
          Eigen::Array<Scalar, Eigen::Dynamic, 1> inv = (r + eps).inverse();
          Eigen::Array<Scalar, Eigen::Dynamic, 1> coef =
              (r > Scalar(0)).select(dotgx * inv.square() / r, Scalar(0));
          for (int c = 0; c < s.c; ++c) {
            ArrMap(nx->grad_buffer().plane(n, c), plane) +=
                CArrMap(self.grad.plane(n, c), plane) * inv - coef * CArrMap(nx->value.plane(n, c), plane);
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, x.value().array().sum());
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "sum", {nx}, [nx](Node<Scalar>& self) {
    nx->grad_buffer().array() += self.grad.array()[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.value().size());
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, x.value().array().sum() * inv);
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "mean", {nx}, [nx, inv](Node<Scalar>& self) {
    nx->grad_buffer().array() += self.grad.array()[0] * inv;
  });
}

template <typename Scalar>
Var<Scalar> dot(const Var<Scalar>& x, const Tensor<Scalar>& w) {
  require_same_shape(x.shape(), w.shape(), "dot");
  Tensor<Scalar> out(Shape{1, 1, 1, 1}, (x.value().array() * w.array()).sum());
  NodePtr<Scalar> nx = x.node();
  return make_result<Scalar>(std::move(out), "dot", {nx}, [nx, w](Node<Scalar>& self) {
    nx->grad_buffer().array() += self.grad.array()[0] * w.array();
  });
}

template <typename Scalar>
Var<Scalar> convex_blend(const Var<Scalar>& mask, const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "convex_blend");
  const Shape s = a.shape();
  const Shape ms = mask.shape();
  if (ms.n != s.n || ms.c != 1 || ms.h != s.h || ms.w != s.w) {
    throw ShapeError("convex_blend: mask " + ms.str() + " does not match " + s.str());
  }
  const Eigen::Index plane = s.plane();
  Tensor<Scalar> out(s);
  for (int n = 0; n < s.n; ++n) {
    const Scalar* m = mask.value().plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const Scalar* pa = a.value().plane(n, c);
      const Scalar* pb = b.value().plane(n, c);
      Scalar* o = out.plane(n, c);
      for (Eigen::Index i = 0; i < plane; ++i) {
        const double mi = m[i];
        o[i] = static_cast<Scalar>(mi * static_cast<double>(pa[i]) + (1.0 - mi) * static_cast<double>(pb[i]));
      }
    }
  }
  NodePtr<Scalar> nm = mask.node(), na = a.node(), nb = b.node();
  return make_result<Scalar>(std::move(out), "convex_blend", {nm, na, nb}, [nm, na, nb, plane](Node<Scalar>& self) {
    const Shape s = self.value.shape();
    for (int n = 0; n < s.n; ++n) {
      const Scalar* m = nm->value.plane(n, 0);
      Scalar* dm = nm->requires_grad ? nm->grad_buffer().plane(n, 0) : nullptr;
      for (int c = 0; c < s.c; ++c) {
        const Scalar* g = self.grad.plane(n, c);
        const Scalar* pa = na->value.plane(n, c);
        const Scalar* pb = nb->value.plane(n, c);
        Scalar* da = na->requires_grad ? na->grad_buffer().plane(n, c) : nullptr;
        Scalar* db = nb->requires_grad ? nb->grad_buffer().plane(n, c) : nullptr;
        for (Eigen::Index i = 0; i < plane; ++i) {
          if (da) da[i] += g[i] * m[i];
          if (db) db[i] += g[i] * (Scalar(1) - m[i]);
          if (dm) dm[i] += g[i] * (pa[i] - pb[i]);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

#define AMPN_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> apply_separable<T>(const Tensor<T>&, const LinearMap1D&, const LinearMap1D&); \
  template Tensor<T> apply_separable_adjoint<T>(const Tensor<T>&, const LinearMap1D&,             \
                                                const LinearMap1D&);                              \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> affine<T>(const Var<T>&, T, T);                                                \
  template Var<T> square<T>(const Var<T>&);                                                      \
  template Var<T> abs<T>(const Var<T>&);                                                         \
  template Var<T> sigmoid<T>(const Var<T>&);                                                     \
  template Var<T> relu<T>(const Var<T>&);                                                        \
  template Var<T> relu6<T>(const Var<T>&);                                                       \
  template Var<T> hardswish<T>(const Var<T>&);                                                   \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                               \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                                 \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dOptions);         \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                \
  template Var<T> mean_over_width<T>(const Var<T>&);                                             \
  template Var<T> mean_over_height<T>(const Var<T>&);                                            \
  template Var<T> resample<T>(const Var<T>&, const LinearMap1D&, const LinearMap1D&);            \
  template Var<T> resize_bilinear<T>(const Var<T>&, int, int);                                   \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                          \
  template Var<T> channel_normalize<T>(const Var<T>&, T);                                        \
  template Var<T> sum<T>(const Var<T>&);                                                         \
  template Var<T> mean<T>(const Var<T>&);                                                        \
  template Var<T> dot<T>(const Var<T>&, const Tensor<T>&);                                       \
  template Var<T> convex_blend<T>(const Var<T>&, const Var<T>&, const Var<T>&);

AMPN_INSTANTIATE_OPS(float)
AMPN_INSTANTIATE_OPS(double)

}  // namespace ampn
