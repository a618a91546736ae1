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

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ct3d/random.hpp"
#include "ct3d/tensor.hpp"

// Stochastic augmentation of single-channel (X, Y, Z) volumes. The
// transversal axis is Z; in-plane rotation happens in the X-Y plane.
//
// Intensities are expected in the normalized lung window (see
// normalize_intensity) so that the noise standard deviations are meaningful.

namespace ct3d {

struct AugmentPlan {
  double flip_prob = 0.5;  // per axis
  double noise_prob = 0.5;
  double noise_sigma_min = 0.6;
  double noise_sigma_max = 0.8;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;
  double rotate_prob = 1.0;
  double rotate_max_deg = 30.0;  // angle drawn from (-max, max)
  double elastic_prob = 0.5;
  double elastic_alpha_min = 1.0;
  double elastic_alpha_max = 7.0;
  double elastic_sigma = 35.0;  // voxels; kernel radius ceil(3 sigma)
  double orient_prob = 0.25;
  double crop_prob = 0.5;
  std::size_t pre_size = 256;
  std::size_t crop_size = 224;
  std::uint64_t seed = 0;

  /// Throws ParameterError on probabilities outside [0, 1], non-positive
  /// ranges or crop_size > pre_size.
  void validate() const;

  /// Every probability set to zero: the pipeline returns the base volume.
  static AugmentPlan identity(std::size_t pre_size, std::size_t crop_size);
};

/// Hounsfield units clipped to [lo, hi] and mapped affinely onto [0, 1].
Tensor normalize_intensity(const Tensor& hu, double lo = -1000.0, double hi = 400.0);

/// Half-sample symmetric reflection of i into [0, n), valid for any i.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

/// Normalized taps of a Gaussian truncated at ceil(3 sigma).
std::vector<double> gaussian_kernel_1d(double sigma);

Tensor flip(const Tensor& volume, const std::array<bool, 3>& axes);
Tensor random_flip(const Tensor& volume, Rng& rng, double prob = 0.5);

Tensor add_noise_with_sigma(const Tensor& volume, double sigma, Rng& rng);
/// Adds i.i.d. N(0, s^2) noise with s drawn uniformly from [sigma_min, sigma_max].
Tensor add_noise(const Tensor& volume, Rng& rng, double sigma_min = 0.6,
                 double sigma_max = 0.8);

/// Separable Gaussian filter with reflect padding, applied along X, Y and Z.
Tensor gaussian_blur(const Tensor& volume, double sigma);

/// In-plane rotation about the volume centre. Samples whose source falls
/// outside the slice are filled with `fill` (the volume minimum when unset).
Tensor rotate_transversal(const Tensor& volume, double degrees,
                          std::optional<float> fill = std::nullopt);

/// Displacement components in voxels, each shaped like the volume.
struct DeformField {
  Tensor dx, dy, dz;
};

/// Uniform(-1, 1) noise per voxel and component, smoothed with gaussian_blur.
DeformField make_deform_field(const Extent3& extents, double sigma, Rng& rng);
/// Trilinear sampling at p + alpha * field(p), edge-clamped.
Tensor apply_deformation(const Tensor& volume, const DeformField& field, double alpha);
/// alpha ~ U(alpha_min, alpha_max).
Tensor elastic_deform(const Tensor& volume, Rng& rng, double sigma = 35.0,
                      double alpha_min = 1.0, double alpha_max = 7.0);

/// Exact rotation by k * 90 degrees about `axis`, by transposition and
/// reversal.
Tensor rot90(const Tensor& volume, int axis, int turns);
/// Rotations about X, then Y, then Z. Throws ShapeError for a non-cubic
/// volume when any turn is non-zero.
Tensor orient90(const Tensor& volume, const std::array<int, 3>& turns);
/// With probability `prob`, draws a turn count in {0..3} per axis.
Tensor random_orient90(const Tensor& volume, Rng& rng, double prob = 0.25);

Tensor crop(const Tensor& volume, const Extent3& offset, std::size_t size);
/// Uniform offsets in {0..pre-crop}^3 of a pre^3 volume.
Tensor random_crop(const Tensor& volume, Rng& rng, std::size_t pre_size,
                   std::size_t crop_size);

/// What the pipeline did on one draw.
struct AugmentTrace {
  bool cropped = false;
  Extent3 crop_offset{0, 0, 0};
  std::array<bool, 3> flipped{false, false, false};
  bool oriented = false;
  std::array<int, 3> turns{0, 0, 0};
  bool rotated = false;
  double angle_deg = 0.0;
  bool elastic = false;
  double alpha = 0.0;
  bool blurred = false;
  double blur_sigma = 0.0;
  bool noised = false;
  double noise_sigma = 0.0;
};

struct AugmentedSample {
  Tensor volume;
  std::optional<Tensor> mask;
  AugmentTrace trace;
};

/// One stochastic draw: crop of the pre-size volume or the base volume, then
/// flips, orientation, rotation, elastic deformation, blur and noise. The
/// result depends only on (inputs, plan, volume_id, draw). Masks, when
/// given, follow every geometric step and are re-binarized at 0.5.
AugmentedSample apply_pipeline(const Tensor& pre, const Tensor& base, const AugmentPlan& plan,
                               std::uint64_t volume_id, std::uint64_t draw,
                               const Tensor* pre_mask = nullptr,
                               const Tensor* base_mask = nullptr);

}  // namespace ct3d
