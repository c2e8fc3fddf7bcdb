#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampn {

/// Thrown when tensor or image dimensions violate an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Batch-major 4-D shape: [n, c, h, w].
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr Eigen::Index size() const {
    return static_cast<Eigen::Index>(n) * c * h * w;
  }
  constexpr Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
  constexpr int dim(int d) const {
    return d == 0 ? n : d == 1 ? c : d == 2 ? h : w;
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
           "," + std::to_string(w) + "]";
  }
};

/// Dense NCHW tensor stored contiguously in an Eigen array.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data size does not match shape");
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor constant(Shape s, Scalar v) { return Tensor(s, v); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Eigen::Index index(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  Scalar& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// Pointer to the [h, w] plane of (n, c).
  Scalar* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const Scalar* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  /// One batch item viewed as a [c, h*w] row-major matrix.
  MatrixMap item_matrix(int n) { return MatrixMap(plane(n, 0), shape_.c, shape_.plane()); }
  ConstMatrixMap item_matrix(int n) const {
    return ConstMatrixMap(plane(n, 0), shape_.c, shape_.plane());
  }

  /// Copy of batch item `n` as a [1, c, h, w] tensor.
  Tensor item(int n) const {
    Shape s{1, shape_.c, shape_.h, shape_.w};
    Tensor out(s);
    out.data_ = data_.segment(static_cast<Eigen::Index>(n) * s.size(), s.size());
    return out;
  }

  Tensor reshaped(Shape s) const {
    if (s.size() != shape_.size()) throw ShapeError("reshape changes element count");
    return Tensor(s, data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  void set_zero() { data_.setZero(); }
  void fill(Scalar v) { data_.setConstant(v); }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_{};
  Array data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

/// Stacks single-item tensors of equal [c,h,w] into one batch.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& items) {
  if (items.empty()) throw ShapeError("stack of empty list");
  Shape s = items.front().shape();
  Shape out_shape{0, s.c, s.h, s.w};
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) throw ShapeError("stack: item shapes differ");
    out_shape.n += t.n();
  }
  Tensor<Scalar> out(out_shape);
  Eigen::Index off = 0;
  for (const auto& t : items) {
    out.array().segment(off, t.size()) = t.array();
    off += t.size();
  }
  return out;
}

}  // namespace ampn
