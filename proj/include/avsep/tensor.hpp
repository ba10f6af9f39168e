// include/avsep/tensor.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef AVSEP_TENSOR_HPP_
#define AVSEP_TENSOR_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "avsep/error.hpp"

namespace avsep {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major double tensor. Value semantics; all layers and DSP grids
// in the toolkit are stored this way.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<long> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor from_vector(std::vector<long> shape, std::vector<double> values) {
    if (checked_numel(shape) != static_cast<long>(values.size()))
      throw ShapeError("from_vector: element count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  long numel() const { return static_cast<long>(data_.size()); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<long>& shape() const { return shape_; }
  long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<long> idx) { return data_[flat_index(idx)]; }
  double at(std::initializer_list<long> idx) const { return data_[flat_index(idx)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  // Reinterpret the buffer with a new shape of equal element count.
  Tensor reshaped(std::vector<long> shape) const {
    if (checked_numel(shape) != numel())
      throw ShapeError("reshaped: element count mismatch");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void set_shape(std::vector<long> shape) {
    if (checked_numel(shape) != numel())
      throw ShapeError("set_shape: element count mismatch");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // 2-D Eigen views over the contiguous buffer.
  MapRM mat(long rows, long cols) {
    if (rows * cols != numel()) throw ShapeError("mat: rows*cols != numel");
    return MapRM(data(), rows, cols);
  }
  ConstMapRM mat(long rows, long cols) const {
    if (rows * cols != numel()) throw ShapeError("mat: rows*cols != numel");
    return ConstMapRM(data(), rows, cols);
  }
  MapVec vec() { return MapVec(data(), numel()); }
  ConstMapVec vec() const { return ConstMapVec(data(), numel()); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  static long checked_numel(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= d;
    }
    return n;
  }

  std::size_t flat_index(std::initializer_list<long> idx) const {
    if (static_cast<int>(idx.size()) != ndim())
      throw ShapeError("index rank mismatch");
    long flat = 0;
    int i = 0;
    for (long v : idx) {
      flat = flat * shape_[static_cast<std::size_t>(i)] + v;
      ++i;
    }
    return static_cast<std::size_t>(flat);
  }

  std::vector<long> shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

// y += alpha * x
inline void axpy(double alpha, const Tensor& x, Tensor& y) {
  check_same_shape(x, y, "axpy");
  y.vec() += alpha * x.vec();
}

}  // namespace avsep

#endif  // AVSEP_TENSOR_HPP_
