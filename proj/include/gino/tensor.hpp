#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gino {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised when operand extents disagree with an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates a precondition that is not about extents.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for user-facing parameter validation failures.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value that must stay finite turns into NaN or Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major n-d array. Grid tensors use the channel-first layout [c, s1, s2, s3].
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)), data_(values.size()) {
    std::copy(values.begin(), values.end(), data_.data());
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data length does not match shape " + shape_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return Tensor(Shape{}, {value}); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    return shape_.at(static_cast<std::size_t>(axis));
  }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  /// Row-major matrix view with `cols` equal to the product of trailing extents.
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// View collapsing all leading axes into rows and keeping the last axis as columns.
  MatrixMap rows_view() { return matrix(size() / last_extent(), last_extent()); }
  ConstMatrixMap rows_view() const { return matrix(size() / last_extent(), last_extent()); }
  /// View keeping the first axis as rows (channels) and collapsing the rest.
  MatrixMap channel_view() { return matrix(dim(0), size() / dim(0)); }
  ConstMatrixMap channel_view() const { return matrix(dim(0), size() / dim(0)); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  void set_zero() { data_.setZero(); }

 private:
  Index last_extent() const { return shape_.empty() ? 1 : shape_.back(); }

  void check_view(Index rows, Index cols) const {
    if (rows * cols != size())
      throw DimensionError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " of tensor " + shape_string(shape_));
  }

  Shape shape_;
  Vector data_;
};

/// Split real/imaginary storage with identical layouts.
template <typename Scalar>
struct ComplexTensor {
  Tensor<Scalar> real;
  Tensor<Scalar> imag;

  ComplexTensor() = default;
  explicit ComplexTensor(const Shape& shape) : real(shape), imag(shape) {}
  ComplexTensor(Tensor<Scalar> re, Tensor<Scalar> im) : real(std::move(re)), imag(std::move(im)) {
    if (real.shape() != imag.shape()) throw DimensionError("complex tensor parts differ in shape");
  }

  const Shape& shape() const { return real.shape(); }
  Index size() const { return real.size(); }
  std::complex<Scalar> at(Index i) const { return {real[i], imag[i]}; }
  void set(Index i, std::complex<Scalar> z) {
    real[i] = z.real();
    imag[i] = z.imag();
  }
};

}  // namespace gino
