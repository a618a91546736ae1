/*
 * Copyright 2026 The ct3d Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ct3d/error.hpp"

namespace ct3d {

using Shape = std::vector<std::size_t>;
using Extent3 = std::array<std::size_t, 3>;

std::size_t numel(const Shape& dims);
std::string to_string(const Shape& dims);

/// Dense row-major tensor. Extents are always positive and the buffer length
/// equals their product. Scalars are represented with dims {1}.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : dims_{1}, data_(1, T(0)) {}
  explicit BasicTensor(Shape dims, T fill = T(0));
  BasicTensor(Shape dims, std::vector<T> data);

  static BasicTensor zeros(Shape dims) { return BasicTensor(std::move(dims)); }
  static BasicTensor full(Shape dims, T v) { return BasicTensor(std::move(dims), v); }
  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, v); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Row-major element access for rank 3 and rank 4 tensors.
  T& at(std::size_t x, std::size_t y, std::size_t z) {
    return data_[(x * dims_[1] + y) * dims_[2] + z];
  }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[(x * dims_[1] + y) * dims_[2] + z];
  }
  T& at(std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return data_[((c * dims_[1] + x) * dims_[2] + y) * dims_[3] + z];
  }
  const T& at(std::size_t c, std::size_t x, std::size_t y, std::size_t z) const {
    return data_[((c * dims_[1] + x) * dims_[2] + y) * dims_[3] + z];
  }

  /// Same buffer, new extents. Throws ShapeError when the element count differs.
  BasicTensor reshaped(Shape dims) const&;
  BasicTensor reshaped(Shape dims) &&;

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const;

  /// Bitwise equality of extents and values.
  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Shape dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Throws ShapeError with `what` when the extents differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

template <typename T>
double l2_norm(const BasicTensor<T>& t);

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace ct3d
