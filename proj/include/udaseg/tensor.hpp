#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace udaseg {

// Dense row-major N-d array. The innermost axis is contiguous; network
// activations use the layout [N, C, Z, Y, X].
template <typename Scalar>
class Tensor {
 public:
  using Index = int64_t;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(std::vector<Index> shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<Index>& shape() const { return shape_; }
  Index dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  Index numel() const { return static_cast<Index>(data_.size()); }
  template <typename Other>
  bool same_shape(const Tensor<Other>& o) const {
    return shape_ == o.shape();
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[static_cast<size_t>(i)]; }
  const Scalar& operator[](Index i) const { return data_[static_cast<size_t>(i)]; }

  ArrayMap array() { return ArrayMap(data_.data(), numel()); }
  ConstArrayMap array() const { return ConstArrayMap(data_.data(), numel()); }

  // 2-d view; the product of rows*cols must equal numel().
  MatrixMap matrix(Index rows, Index cols) {
    assert(rows * cols == numel());
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    assert(rows * cols == numel());
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(Scalar(0)); }

  // Metadata-only reshape.
  Tensor reshaped(std::vector<Index> shape) const {
    Tensor t = *this;
    assert(checked_numel(shape) == numel());
    t.shape_ = std::move(shape);
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    for (Index i = 0; i < numel(); ++i) out[i] = static_cast<Other>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  static Index checked_numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
      assert(d >= 0);
      n *= d;
    }
    return n;
  }

  std::vector<Index> shape_;
  std::vector<Scalar> data_;
};

}  // namespace udaseg
