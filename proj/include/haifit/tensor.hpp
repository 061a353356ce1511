#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <ostream>
#include <string>

#include "haifit/error.hpp"

namespace haifit {

using Index = Eigen::Index;

/// NCHW extent of a dense 4-D array.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index numel() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  constexpr Index per_sample() const { return c * h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

/// Dense row-major NCHW array. Storage is a single Eigen column vector so
/// elementwise work goes through Eigen's array expressions.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Vector::Zero(shape.numel())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Vector::Constant(shape.numel(), fill)) {}
  Tensor(Shape shape, Vector data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw Error(ErrorKind::Shape, "tensor data size does not match shape " + to_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor constant(Shape shape, Scalar v) { return Tensor(shape, v); }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Index offset(Index b, Index ch, Index y, Index x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  Scalar& at(Index b, Index ch, Index y, Index x) { return data_[offset(b, ch, y, x)]; }
  Scalar at(Index b, Index ch, Index y, Index x) const { return data_[offset(b, ch, y, x)]; }

  /// Sample `b` viewed as a (channels x h*w) matrix.
  MatrixMap<Scalar> sample_matrix(Index b) {
    return MatrixMap<Scalar>(data() + b * shape_.per_sample(), shape_.c, shape_.plane());
  }
  ConstMatrixMap<Scalar> sample_matrix(Index b) const {
    return ConstMatrixMap<Scalar>(data() + b * shape_.per_sample(), shape_.c, shape_.plane());
  }

  /// Whole tensor viewed as (n x c*h*w).
  MatrixMap<Scalar> batch_matrix() { return MatrixMap<Scalar>(data(), shape_.n, shape_.per_sample()); }
  ConstMatrixMap<Scalar> batch_matrix() const {
    return ConstMatrixMap<Scalar>(data(), shape_.n, shape_.per_sample());
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != shape_.numel()) {
      throw Error(ErrorKind::Shape, "cannot reshape " + to_string(shape_) + " to " + to_string(s));
    }
    return Tensor(s, data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  Shape shape_{};
  Vector data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* where) {
  if (!(a == b)) {
    throw Error(ErrorKind::Shape, std::string(where) + ": " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace haifit
