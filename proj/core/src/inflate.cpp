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

#include "ct3d/inflate.hpp"

#include <cmath>
#include <vector>

namespace ct3d {

std::string_view to_string(InflationMode mode) {
  switch (mode) {
    case InflationMode::full:
      return "full";
    case InflationMode::one_gaussian:
      return "1g";
    case InflationMode::two_gaussian:
      return "2g";
  }
  return "?";
}

InflationMode parse_inflation_mode(std::string_view text) {
  if (text == "full") return InflationMode::full;
  if (text == "1g" || text == "1G") return InflationMode::one_gaussian;
  if (text == "2g" || text == "2G") return InflationMode::two_gaussian;
  throw ParameterError("unknown inflation mode '" + std::string(text) +
                       "' (expected full, 1g or 2g)");
}

double gaussian_weight(double x, double mu, double sigma) {
  if (!(sigma > 0)) throw ParameterError("gaussian sigma must be positive");
  const double u = (x - mu) / sigma;
  return std::exp(-0.5 * u * u);
}

template <typename T>
Gamma compute_gamma(const BasicTensor<T>& pre_norm, const BasicTensor<T>& reference) {
  const double pre = l2_norm(pre_norm);
  if (pre == 0.0) return {1.0, true};
  return {l2_norm(reference) / pre, false};
}

template <typename T>
BasicTensor<T> inflate(const BasicTensor<T>& kernel2d, const InflationSpec& spec) {
  if (kernel2d.rank() != 4) {
    throw ShapeError("inflate expects an (I, O, H, W) kernel, got " +
                     to_string(kernel2d.dims()));
  }
  if (spec.depth == 0) throw ParameterError("inflation depth must be at least 1");
  const auto& d = kernel2d.dims();
  const std::size_t width = d[3], depth = spec.depth;

  // profile[w * D + d]
  std::vector<double> profile(width * depth, 1.0);
  const double dd = static_cast<double>(depth), ww = static_cast<double>(width);
  for (std::size_t w = 0; w < width; ++w) {
    for (std::size_t k = 0; k < depth; ++k) {
      double p = 1.0;
      switch (spec.mode) {
        case InflationMode::full:
          break;
        case InflationMode::one_gaussian:
          p = gaussian_weight(static_cast<double>(k), dd / 2, dd / 8);
          break;
        case InflationMode::two_gaussian:
          p = gaussian_weight(static_cast<double>(k), dd / 2, dd / 8) +
              gaussian_weight(static_cast<double>(w), ww / 2, ww / 8);
          break;
      }
      profile[w * depth + k] = p;
    }
  }

  const std::size_t rows = d[0] * d[1] * d[2];
  BasicTensor<double> pre({d[0], d[1], d[2], d[3], depth});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t w = 0; w < width; ++w) {
      const double k = kernel2d[r * width + w];
      for (std::size_t z = 0; z < depth; ++z) {
        pre[(r * width + w) * depth + z] = k * profile[w * depth + z];
      }
    }
  }
  const Gamma gamma = compute_gamma(pre, kernel2d.template cast<double>());

  BasicTensor<T> out(pre.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t w = 0; w < width; ++w) {
      const double k = kernel2d[r * width + w];
      for (std::size_t z = 0; z < depth; ++z) {
        out[(r * width + w) * depth + z] =
            static_cast<T>(k * (profile[w * depth + z] * gamma.value));
      }
    }
  }
  return out;
}

template Gamma compute_gamma(const BasicTensor<float>&, const BasicTensor<float>&);
template Gamma compute_gamma(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> inflate(const BasicTensor<float>&, const InflationSpec&);
template BasicTensor<double> inflate(const BasicTensor<double>&, const InflationSpec&);

}  // namespace ct3d
