#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ravit/errors.hpp"

namespace ravit {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = RowMatrix<double>;
using Vector = RowVector<double>;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

/// Dense row-major array with an explicit shape.
///
/// Rank-1 and rank-2 tensors can be viewed as Eigen row-major matrices
/// (a rank-1 tensor of length n views as 1 x n); higher ranks are addressed
/// through operator() or the flat data() span.
template <typename Scalar>
class BasicTensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
    }
  }

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.matrix() = m;
    return t;
  }

  template <typename Derived>
  static BasicTensor from_vector(const Eigen::MatrixBase<Derived>& v) {
    BasicTensor t({static_cast<std::size_t>(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) t.data_[static_cast<std::size_t>(i)] = v(i);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }
  template <typename... Idx>
  const Scalar& operator()(Idx... idx) const {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }

  MatrixMap matrix() {
    auto [r, c] = matrix_dims();
    return MatrixMap(data_.data(), r, c);
  }
  ConstMatrixMap matrix() const {
    auto [r, c] = matrix_dims();
    return ConstMatrixMap(data_.data(), r, c);
  }

  bool all_finite() const { return matrix_view().allFinite(); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  std::pair<Eigen::Index, Eigen::Index> matrix_dims() const {
    if (shape_.size() == 1) return {1, static_cast<Eigen::Index>(shape_[0])};
    if (shape_.size() == 2) return {static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
    throw DimensionError("matrix view requires rank 1 or 2, got shape " + shape_string(shape_));
  }

  Eigen::Map<const RowMatrix<Scalar>> matrix_view() const {
    return {data_.data(), 1, static_cast<Eigen::Index>(data_.size())};
  }

  template <typename... Idx>
  std::size_t offset(Idx... idx) const {
    constexpr std::size_t n = sizeof...(Idx);
    if (n != shape_.size()) throw IndexError("index rank does not match tensor rank");
    const std::size_t index[] = {idx...};
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (index[i] >= shape_[i]) throw IndexError("tensor index out of range");
      off = off * shape_[i] + index[i];
    }
    return off;
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<double>;

}  // namespace ravit
