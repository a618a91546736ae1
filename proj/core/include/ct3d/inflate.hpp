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

#include <cstddef>
#include <string>
#include <string_view>

#include "ct3d/tensor.hpp"

// Turning pretrained 2D kernels (I, O, H, W) into 3D kernels (I, O, H, W, D).
//
// Every scheme builds an unnormalized tensor from K and a per-(w, d) profile
// and then rescales the whole tensor by one factor so that its L2 norm equals
// the norm of K:
//
//   full:  profile = 1
//   1G:    profile = g(d; D/2, D/8)
//   2G:    profile = g(d; D/2, D/8) + g(w; W/2, W/8)
//
// with g the unnormalized Gaussian exp(-(x - mu)^2 / (2 sigma^2)) and d, w
// zero-based. The profile is evaluated in double precision.

namespace ct3d {

enum class InflationMode { full, one_gaussian, two_gaussian };

std::string_view to_string(InflationMode mode);
/// Accepts "full", "1g" and "2g". Throws ParameterError otherwise.
InflationMode parse_inflation_mode(std::string_view text);

struct InflationSpec {
  InflationMode mode = InflationMode::full;
  std::size_t depth = 1;
};

/// exp(-(x - mu)^2 / (2 sigma^2)); throws ParameterError for sigma <= 0.
double gaussian_weight(double x, double mu, double sigma);

struct Gamma {
  double value = 1.0;
  /// Set when the unnormalized tensor has zero norm; value is then 1.
  bool zero_kernel = false;
};

/// ||reference|| / ||pre_norm||.
template <typename T>
Gamma compute_gamma(const BasicTensor<T>& pre_norm, const BasicTensor<T>& reference);

template <typename T>
BasicTensor<T> inflate(const BasicTensor<T>& kernel2d, const InflationSpec& spec);

template <typename T>
BasicTensor<T> inflate_full(const BasicTensor<T>& kernel2d, std::size_t depth) {
  return inflate(kernel2d, {InflationMode::full, depth});
}
template <typename T>
BasicTensor<T> inflate_1g(const BasicTensor<T>& kernel2d, std::size_t depth) {
  return inflate(kernel2d, {InflationMode::one_gaussian, depth});
}
template <typename T>
BasicTensor<T> inflate_2g(const BasicTensor<T>& kernel2d, std::size_t depth) {
  return inflate(kernel2d, {InflationMode::two_gaussian, depth});
}

}  // namespace ct3d
