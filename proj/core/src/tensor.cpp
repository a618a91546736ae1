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

#include "ct3d/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ct3d {

std::size_t numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string to_string(const Shape& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ')';
  return os.str();
}

namespace {

void check_extents(const Shape& dims) {
  if (dims.empty()) throw ShapeError("tensor needs at least one axis");
  for (auto d : dims) {
    if (d == 0) throw ShapeError("zero extent in " + to_string(dims));
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, T fill) : dims_(std::move(dims)) {
  check_extents(dims_);
  data_.assign(numel(dims_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_extents(dims_);
  if (data_.size() != numel(dims_)) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) +
                     " elements does not match extents " + to_string(dims_));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape dims) const& {
  return BasicTensor(std::move(dims), data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape dims) && {
  return BasicTensor(std::move(dims), std::move(data_));
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": " + to_string(a) + " vs " +
                     to_string(b));
  }
}

template <typename T>
double l2_norm(const BasicTensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.dims(), b.dims(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double l2_norm(const BasicTensor<float>&);
template double l2_norm(const BasicTensor<double>&);
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace ct3d
