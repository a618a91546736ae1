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

#include <span>
#include <vector>

#include "ct3d/tensor.hpp"

// Natural cubic-spline resampling on an endpoint-aligned grid: a signal of
// length n has knots at 0..n-1 and m output samples sit at j * (n - 1) / (m - 1),
// so the first and last samples always coincide with the first and last input
// values. A single output sample is taken at the midpoint (n - 1) / 2.

namespace ct3d {

/// Interpolating natural cubic spline through (i, y[i]), i = 0..n-1.
class NaturalSpline {
 public:
  explicit NaturalSpline(std::span<const double> samples);

  double operator()(double t) const;

  /// Second derivatives at the knots; zero at both ends.
  const std::vector<double>& second_derivatives() const { return m_; }

  /// Largest residual of the tridiagonal system the second derivatives solve.
  double residual() const;

 private:
  std::vector<double> y_;
  std::vector<double> m_;
};

/// Throws ParameterError when target_len is zero or the signal is empty. A
/// length-1 signal is extended as a constant.
std::vector<double> spline_resample_1d(std::span<const double> signal,
                                       std::size_t target_len);

/// Separable resampling of an (X, Y, Z) volume: Z first, then Y, then X.
template <typename T>
BasicTensor<T> spline_resample_volume(const BasicTensor<T>& volume, const Extent3& target);

}  // namespace ct3d
