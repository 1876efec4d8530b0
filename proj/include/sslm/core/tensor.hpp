// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sslm/core/rng.hpp"

namespace sslm {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Dense row-major tensor. Parameters, gradients and optimizer state all use it.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    if (s.empty()) return 0;
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  // Product of all trailing dimensions.
  std::size_t cols() const { return shape.empty() ? 0 : data.size() / shape.front(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  MatrixMap<T> mat() {
    return MatrixMap<T>(data.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
  }
  ConstMatrixMap<T> mat() const {
    return ConstMatrixMap<T>(data.data(), static_cast<Eigen::Index>(rows()),
                             static_cast<Eigen::Index>(cols()));
  }
  VectorMap<T> vec() { return VectorMap<T>(data.data(), static_cast<Eigen::Index>(numel())); }
  ConstVectorMap<T> vec() const {
    return ConstVectorMap<T>(data.data(), static_cast<Eigen::Index>(numel()));
  }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  Tensor zeros_like() const { return Tensor(shape, T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

template <typename T>
void fill_truncated_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<T>(rng.truncated_normal(stddev));
}

}  // namespace sslm
