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

#include <cstdint>
#include <vector>

#include "ct3d/random.hpp"
#include "ct3d/tensor.hpp"

// Two-class toy volumes: a bright ball (label 0) or an axis-aligned cube
// (label 1) on a dark background, at a random position and size.

namespace ct3d {

struct SyntheticCase {
  Tensor volume;  // (S, S, S), intensities in [0, 1]
  Tensor mask;    // object indicator
  std::size_t label = 0;
};

struct ShapeParams {
  double radius_min = 0.18;  // fractions of the side length
  double radius_max = 0.28;
  double background = 0.1;
  double foreground = 0.9;
  // In units of the drawn radius. Above one the cube is also the larger
  // object; the toy model does not separate equal-sized shapes under full
  // augmentation within a short run.
  double cube_half_side = 1.6;
};

SyntheticCase make_shape_volume(std::size_t size, std::size_t label, Rng& rng,
                                const ShapeParams& params = {});
/// Labels alternate 0, 1, 0, ...; case i draws from its own seeded stream.
std::vector<SyntheticCase> make_shape_dataset(std::size_t count, std::size_t size,
                                              std::uint64_t seed,
                                              const ShapeParams& params = {});

}  // namespace ct3d
