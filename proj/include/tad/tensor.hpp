#pragma once

#include "tad/core.hpp"

#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace tad {

/// Dense n-d array over Eigen storage. Flat layout is column-major over the
/// declared dims (first dimension varies fastest), so for a rank-3 weight
/// (out, in, k) each k-slice is a contiguous (out x in) column-major matrix.
template <class Scalar>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
    data_ = VectorX<Scalar>::Zero(count(dims_));
  }
  Tensor(std::initializer_list<int> dims) : Tensor(std::vector<int>(dims)) {}

  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[i]; }
  const std::vector<int>& dims() const { return dims_; }
  Eigen::Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  VectorX<Scalar>& flat() { return data_; }
  const VectorX<Scalar>& flat() const { return data_; }

  void set_zero() { data_.setZero(); }

  Scalar& operator()(int i) { return data_[i]; }
  Scalar operator()(int i) const { return data_[i]; }
  Scalar& operator()(int i, int j) { return data_[i + dims_[0] * j]; }
  Scalar operator()(int i, int j) const { return data_[i + dims_[0] * j]; }
  Scalar& operator()(int i, int j, int k) {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }
  Scalar operator()(int i, int j, int k) const {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }
  Scalar& operator()(int i, int j, int k, int l) {
    return data_[i + dims_[0] * (j + dims_[1] * (k + dims_[2] * l))];
  }
  Scalar operator()(int i, int j, int k, int l) const {
    return data_[i + dims_[0] * (j + dims_[1] * (k + dims_[2] * l))];
  }

  /// View as a (rows x cols) column-major matrix; rows*cols must equal size().
  Eigen::Map<MatrixX<Scalar>> mat(int rows, int cols) {
    if (static_cast<Eigen::Index>(rows) * cols != data_.size())
      throw ShapeError("tensor mat view size mismatch");
    return Eigen::Map<MatrixX<Scalar>>(data_.data(), rows, cols);
  }
  Eigen::Map<const MatrixX<Scalar>> mat(int rows, int cols) const {
    if (static_cast<Eigen::Index>(rows) * cols != data_.size())
      throw ShapeError("tensor mat view size mismatch");
    return Eigen::Map<const MatrixX<Scalar>>(data_.data(), rows, cols);
  }

  /// Contiguous (dim0 x dim1) slice of a rank-3 tensor at outer index k.
  Eigen::Map<MatrixX<Scalar>> slice(int k) {
    return Eigen::Map<MatrixX<Scalar>>(
        data_.data() + static_cast<Eigen::Index>(dims_[0]) * dims_[1] * k,
        dims_[0], dims_[1]);
  }
  Eigen::Map<const MatrixX<Scalar>> slice(int k) const {
    return Eigen::Map<const MatrixX<Scalar>>(
        data_.data() + static_cast<Eigen::Index>(dims_[0]) * dims_[1] * k,
        dims_[0], dims_[1]);
  }

  static Eigen::Index count(const std::vector<int>& dims) {
    Eigen::Index n = 1;
    for (int d : dims) {
      if (d <= 0) throw ShapeError("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> dims_;
  VectorX<Scalar> data_;
};

/// Learnable tensor: value plus an accumulated gradient of the same shape.
/// Frozen parameters receive no gradient and are skipped by the optimizer.
template <class Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, std::vector<int> dims)
      : name(std::move(n)), value(dims), grad(std::move(dims)) {}

  void zero_grad() { grad.set_zero(); }
};

}  // namespace tad
