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

#include "ct3d/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "ct3d/error.hpp"

namespace ct3d {

SyntheticCase make_shape_volume(std::size_t size, std::size_t label, Rng& rng,
                                const ShapeParams& params) {
  if (size < 8) throw ParameterError("synthetic volumes need a side of at least 8");
  if (label > 1) throw ParameterError("synthetic label must be 0 or 1");
  const double s = static_cast<double>(size);
  const double r = s * rng.uniform(params.radius_min, params.radius_max);
  const double half = label == 1 ? params.cube_half_side * r : r;
  const double margin = half + 1.0;
  double c[3];
  for (auto& v : c) v = rng.uniform(std::min(margin, s / 2), std::max(s - 1 - margin, s / 2));

  SyntheticCase out{Tensor({size, size, size}, static_cast<float>(params.background)),
                    Tensor({size, size, size}), label};
  for (std::size_t x = 0; x < size; ++x) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t z = 0; z < size; ++z) {
        const double d[3] = {x - c[0], y - c[1], z - c[2]};
        const bool inside =
            label == 0 ? d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r * r
                       : std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])}) <= half;
        if (inside) {
          out.volume.at(x, y, z) = static_cast<float>(params.foreground);
          out.mask.at(x, y, z) = 1.0f;
        }
      }
    }
  }
  return out;
}

std::vector<SyntheticCase> make_shape_dataset(std::size_t count, std::size_t size,
                                              std::uint64_t seed, const ShapeParams& params) {
  std::vector<SyntheticCase> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(StreamKey{seed, i, 0x73796e});
    out.push_back(make_shape_volume(size, i % 2, rng, params));
  }
  return out;
}

}  // namespace ct3d
