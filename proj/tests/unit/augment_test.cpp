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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ct3d/augment.hpp"
#include "ct3d/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;

std::vector<float> sorted_values(const Tensor& t) {
  std::vector<float> v(t.data().begin(), t.data().end());
  std::sort(v.begin(), v.end());
  return v;
}

TEST(Flip, InvolutionAndIdentity) {
  Rng rng(1);
  const Tensor v = random_tensor({4, 5, 6}, rng);
  EXPECT_EQ(flip(flip(v, {true, true, true}), {true, true, true}), v);
  EXPECT_EQ(flip(v, {false, false, false}), v);
  const Tensor ab({2, 1, 1}, std::vector<float>{1.0f, 2.0f});
  EXPECT_EQ(flip(ab, {true, false, false}), Tensor({2, 1, 1}, std::vector<float>{2.0f, 1.0f}));
}

TEST(Noise, ZeroSigmaAndDeterminism) {
  Rng rng(2);
  const Tensor v = random_tensor({6, 6, 6}, rng);
  Rng a(7), b(7);
  EXPECT_EQ(add_noise_with_sigma(v, 0.0, a), v);
  Rng c(8), d(8);
  EXPECT_EQ(add_noise(v, c), add_noise(v, d));
}

TEST(Noise, StandardDeviation) {
  Rng rng(3);
  const Tensor out = add_noise_with_sigma(Tensor({64, 64, 64}), 0.7, rng);
  double mean = 0, sq = 0;
  for (float x : out.data()) mean += x;
  mean /= out.size();
  for (float x : out.data()) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / (out.size() - 1));
  EXPECT_GE(sd, 0.69);
  EXPECT_LE(sd, 0.71);
}

TEST(Blur, ConstantVolume) {
  const Tensor v = Tensor::full({7, 6, 5}, 0.4f);
  const Tensor out1 = gaussian_blur(v, 1.3);
  for (float x : out1.data()) EXPECT_NEAR(x, 0.4f, 1e-6);
}

TEST(Blur, ImpulseMatchesDenseKernel) {
  Tensor v({9, 9, 9});
  v.at(4, 4, 4) = 1.0f;
  const TensorD want = oracle::gaussian_blur_dense(v.cast<double>(), 1.0);
  EXPECT_LE(max_abs_diff(gaussian_blur(v, 1.0).cast<double>(), want), 1e-5);
}

TEST(Blur, InteriorMassConserved) {
  Rng rng(4);
  Tensor v({20, 20, 20});
  for (std::size_t x = 7; x < 13; ++x)
    for (std::size_t y = 7; y < 13; ++y)
      for (std::size_t z = 7; z < 13; ++z) v.at(x, y, z) = static_cast<float>(rng.uniform());
  double before = 0, after = 0;
  for (float x : v.data()) before += x;
  const Tensor out2 = gaussian_blur(v, 1.0);
  for (float x : out2.data()) after += x;
  EXPECT_NEAR(after, before, 1e-4 * std::max(1.0, before));
}

TEST(Rotate, ZeroAngle) {
  Rng rng(5);
  const Tensor v = random_tensor({8, 8, 4}, rng);
  EXPECT_LE(max_abs_diff(rotate_transversal(v, 0.0), v), 1e-6);
}

TEST(Rotate, RoundTripOnSmoothPhantom) {
  const std::size_t n = 40;
  Tensor v({n, n, 3});
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t z = 0; z < 3; ++z) {
        const double dx = x - 19.5, dy = y - 19.5;
        v.at(x, y, z) = static_cast<float>(std::exp(-(dx * dx + 2 * dy * dy) / 120.0));
      }
  const Tensor back = rotate_transversal(rotate_transversal(v, 25.0), -25.0);
  double worst = 0;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      if (std::hypot(x - 19.5, y - 19.5) > 12) continue;
      for (std::size_t z = 0; z < 3; ++z) {
        worst = std::max(worst, static_cast<double>(std::abs(back.at(x, y, z) - v.at(x, y, z))));
      }
    }
  EXPECT_LE(worst, 2e-2);
}

TEST(Rotate, ConstantInsideInscribedCylinder) {
  const std::size_t n = 16;
  const Tensor v = Tensor::full({n, n, 2}, 0.6f);
  const Tensor r = rotate_transversal(v, 17.0);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      if (std::hypot(x - 7.5, y - 7.5) > 7) continue;
      EXPECT_NEAR(r.at(x, y, 0), 0.6f, 1e-6);
    }
}

TEST(Elastic, ZeroAlphaAndConstant) {
  Rng rng(6);
  const Tensor v = random_tensor({10, 9, 8}, rng);
  const DeformField f = make_deform_field({10, 9, 8}, 3.0, rng);
  EXPECT_EQ(apply_deformation(v, f, 0.0), v);
  const Tensor c = Tensor::full({10, 9, 8}, 0.25f);
  const Tensor out3 = apply_deformation(c, f, 6.0);
  for (float x : out3.data()) EXPECT_FLOAT_EQ(x, 0.25f);
}

TEST(Elastic, SmoothingMatchesDenseKernel) {
  Rng rng(7);
  const Tensor noise = random_tensor({24, 24, 24}, rng);
  const TensorD want = oracle::gaussian_blur_dense(noise.cast<double>(), 2.0);
  EXPECT_LE(max_abs_diff(gaussian_blur(noise, 2.0).cast<double>(), want), 1e-5);
}

TEST(Orient90, IdentityOrderFourAndPermutation) {
  Rng rng(8);
  const Tensor v = random_tensor({5, 5, 5}, rng);
  EXPECT_EQ(orient90(v, {0, 0, 0}), v);
  for (int axis = 0; axis < 3; ++axis) {
    Tensor r = v;
    for (int i = 0; i < 4; ++i) r = rot90(r, axis, 1);
    EXPECT_EQ(r, v);
  }
  EXPECT_EQ(sorted_values(orient90(v, {1, 2, 3})), sorted_values(v));
  EXPECT_THROW(orient90(Tensor({4, 5, 5}), {1, 0, 0}), ShapeError);
}

TEST(Crop, CornersAndMapping) {
  Rng rng(9);
  const Tensor v = random_tensor({10, 10, 10}, rng);
  const Tensor low = crop(v, {0, 0, 0}, 6);
  const Tensor high = crop(v, {4, 4, 4}, 6);
  for (std::size_t x = 0; x < 6; ++x)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t z = 0; z < 6; ++z) {
        EXPECT_EQ(low.at(x, y, z), v.at(x, y, z));
        EXPECT_EQ(high.at(x, y, z), v.at(x + 4, y + 4, z + 4));
      }
  EXPECT_THROW(crop(v, {5, 0, 0}, 6), ShapeError);
}

TEST(Pipeline, IdentityPlanReturnsBase) {
  Rng rng(10);
  const Tensor pre = random_tensor({12, 12, 12}, rng);
  const Tensor base = random_tensor({8, 8, 8}, rng);
  const auto s = apply_pipeline(pre, base, AugmentPlan::identity(12, 8), 1, 0);
  EXPECT_EQ(s.volume, base);
}

TEST(Pipeline, DeterministicAndDrawDependent) {
  Rng rng(11);
  const Tensor pre = random_tensor({12, 12, 12}, rng, 0, 1);
  const Tensor base = random_tensor({8, 8, 8}, rng, 0, 1);
  AugmentPlan plan;
  plan.pre_size = 12;
  plan.crop_size = 8;
  plan.seed = 3;
  const auto a = apply_pipeline(pre, base, plan, 4, 2);
  const auto b = apply_pipeline(pre, base, plan, 4, 2);
  EXPECT_EQ(a.volume, b.volume);
  bool any_differs = false;
  for (std::uint64_t d = 3; d < 8 && !any_differs; ++d) {
    any_differs = !(apply_pipeline(pre, base, plan, 4, d).volume == a.volume);
  }
  EXPECT_TRUE(any_differs);
  EXPECT_TRUE(a.volume.all_finite());
}

TEST(Pipeline, MaskFollowsGeometryAndStaysBinary) {
  Rng rng(12);
  const Tensor pre = random_tensor({12, 12, 12}, rng, 0, 1);
  const Tensor base = random_tensor({8, 8, 8}, rng, 0, 1);
  Tensor pre_mask({12, 12, 12}), base_mask({8, 8, 8});
  for (auto& v : pre_mask.data()) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
  for (auto& v : base_mask.data()) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
  AugmentPlan plan;
  plan.pre_size = 12;
  plan.crop_size = 8;
  for (std::uint64_t d = 0; d < 10; ++d) {
    const auto s = apply_pipeline(pre, base, plan, 1, d, &pre_mask, &base_mask);
    ASSERT_TRUE(s.mask.has_value());
    EXPECT_EQ(s.mask->dims(), s.volume.dims());
    for (float v : s.mask->data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(Pipeline, BranchFrequencies) {
  Rng rng(13);
  const Tensor pre = random_tensor({12, 12, 12}, rng, 0, 1);
  const Tensor base = random_tensor({8, 8, 8}, rng, 0, 1);
  AugmentPlan plan;
  plan.pre_size = 12;
  plan.crop_size = 8;
  plan.seed = 21;
  std::size_t crops = 0, orients = 0;
  for (std::uint64_t d = 0; d < 1000; ++d) {
    const auto t = apply_pipeline(pre, base, plan, 2, d).trace;
    crops += t.cropped;
    orients += t.oriented;
  }
  EXPECT_GE(crops, 450u);
  EXPECT_LE(crops, 550u);
  EXPECT_GE(orients, 200u);
  EXPECT_LE(orients, 300u);
}

TEST(AugmentPlan, Validation) {
  AugmentPlan p;
  EXPECT_NO_THROW(p.validate());
  p.crop_prob = 1.5;
  EXPECT_THROW(p.validate(), ParameterError);
  p = AugmentPlan{};
  p.crop_size = p.pre_size + 1;
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(NormalizeIntensity, LungWindow) {
  const Tensor hu({4}, std::vector<float>{-2000.0f, -1000.0f, -300.0f, 1000.0f});
  const Tensor n = normalize_intensity(hu);
  EXPECT_FLOAT_EQ(n[0], 0.0f);
  EXPECT_FLOAT_EQ(n[1], 0.0f);
  EXPECT_FLOAT_EQ(n[2], 0.5f);
  EXPECT_FLOAT_EQ(n[3], 1.0f);
}

}  // namespace
}  // namespace ct3d
