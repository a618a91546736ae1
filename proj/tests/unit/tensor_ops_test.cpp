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

#include <cmath>

#include "ct3d/error.hpp"
#include "ct3d/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;

TEST(Tensor, ShapeAndSizeAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(numel(t.dims()), t.size());
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>(3)), ShapeError);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({24}).dims(), Shape{24});
}

TEST(Conv3d, IdentityKernel) {
  const Tensor x = Tensor::full({1, 3, 3, 3}, 1.0f);
  const Tensor w = Tensor::full({1, 1, 1, 1, 1}, 1.0f);
  EXPECT_EQ(conv3d(x, w), x);
}

TEST(Conv3d, SumOfOnes) {
  const Tensor x = Tensor::full({1, 3, 3, 3}, 1.0f);
  const Tensor w = Tensor::full({1, 1, 3, 3, 3}, 1.0f);
  const Tensor y = conv3d(x, w);
  ASSERT_EQ(y.dims(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 27.0f);
}

TEST(Conv3d, MatchesDirectSum) {
  Rng rng(11);
  const Tensor x = random_tensor({2, 5, 5, 5}, rng);
  const Tensor w = random_tensor({2, 3, 3, 3, 3}, rng);
  for (const ConvParams p : {ConvParams{}, ConvParams{{2, 1, 2}, {1, 0, 1}}}) {
    const TensorD want = oracle::conv3d(x.cast<double>(), w.cast<double>(), p.stride, p.padding);
    EXPECT_LE(max_abs_diff(conv3d(x, w, p).cast<double>(), want), 1e-5);
  }
}

TEST(Conv3d, RejectsOversizedKernel) {
  const Tensor x({1, 2, 2, 2});
  const Tensor w({1, 1, 3, 3, 3});
  EXPECT_THROW(conv3d(x, w), ShapeError);
  EXPECT_THROW(conv3d(x, Tensor({2, 1, 1, 1, 1})), ShapeError);
}

TEST(DepthwiseConv3d, ScalarKernels) {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 3, 3}, rng);
  Tensor w({2, 1, 1, 1, 1});
  w[0] = 2.0f;
  w[1] = 3.0f;
  const Tensor y = depthwise_conv3d(x, w);
  for (std::size_t i = 0; i < 27; ++i) {
    EXPECT_FLOAT_EQ(y[i], 2.0f * x[i]);
    EXPECT_FLOAT_EQ(y[27 + i], 3.0f * x[27 + i]);
  }
}

TEST(DepthwiseConv3d, CenteredDeltaIsIdentity) {
  Rng rng(4);
  const Tensor x = random_tensor({2, 4, 4, 4}, rng);
  Tensor w({2, 1, 3, 3, 3});
  w[13] = 1.0f;
  w[27 + 13] = 1.0f;
  EXPECT_EQ(depthwise_conv3d(x, w, ConvParams{{1, 1, 1}, {1, 1, 1}}), x);
}

TEST(DepthwiseConv3d, MatchesGroupedDirectSum) {
  Rng rng(5);
  const Tensor x = random_tensor({3, 6, 6, 6}, rng);
  const Tensor w = random_tensor({3, 1, 7, 7, 7}, rng);
  const ConvParams p{{1, 1, 1}, {3, 3, 3}};
  const TensorD want =
      oracle::depthwise_conv3d(x.cast<double>(), w.cast<double>(), p.stride, p.padding);
  EXPECT_LE(max_abs_diff(depthwise_conv3d(x, w, p).cast<double>(), want), 1e-5);
}

TEST(LayerNorm, ConstantInputGivesZeros) {
  const Tensor x = Tensor::full({3, 2, 2, 2}, 5.0f);
  const Tensor y = layer_norm(x, Tensor::full({3}, 1.0f), Tensor({3}), 1e-6);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, TwoChannels) {
  TensorD x({2, 1, 1, 1}, std::vector<double>{1.0, 3.0});
  const TensorD y = layer_norm(x, TensorD::full({2}, 1.0), TensorD({2}), 1e-12);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
}

TEST(LayerNorm, NormalizesEveryLocation) {
  Rng rng(6);
  const TensorD x = random_tensor<double>({5, 3, 2, 4}, rng, -3, 7);
  const TensorD y = layer_norm(x, TensorD::full({5}, 1.0), TensorD({5}), 1e-6);
  const std::size_t loc = 3 * 2 * 4;
  for (std::size_t p = 0; p < loc; ++p) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 5; ++c) mean += y[c * loc + p] / 5;
    for (std::size_t c = 0; c < 5; ++c) var += (y[c * loc + p] - mean) * (y[c * loc + p] - mean) / 5;
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Gelu, ReferenceValues) {
  const TensorD x({3}, std::vector<double>{0.0, 10.0, 1.0});
  const TensorD y = gelu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 10.0, 1e-12);
  // 0.5 * (1 + erf(1 / sqrt 2)) evaluated in high precision.
  EXPECT_NEAR(y[2], 0.8413447460685429, 1e-12);
}

TEST(Softmax, UniformShiftAndOverflow) {
  const TensorD u = softmax(TensorD({4}));
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 0.25);

  Rng rng(7);
  const TensorD x = random_tensor<double>({6}, rng, -4, 4);
  TensorD shifted = x;
  for (auto& v : shifted.data()) v += 123.0;
  EXPECT_LE(max_abs_diff(softmax(x), softmax(shifted)), 1e-12);

  const TensorD big = softmax(TensorD({2}, std::vector<double>{1000.0, 0.0}));
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_DOUBLE_EQ(big[1], 0.0);
}

TEST(TrilinearResize, IdentityAndConstant) {
  Rng rng(8);
  const Tensor x = random_tensor({2, 4, 4, 4}, rng);
  EXPECT_EQ(trilinear_resize(x, {4, 4, 4}), x);
  const Tensor c = trilinear_resize(Tensor::full({1, 3, 2, 5}, 0.75f), {7, 4, 3});
  for (float v : c.data()) EXPECT_FLOAT_EQ(v, 0.75f);
}

TEST(TrilinearResize, RampUpsampledTwice) {
  TensorD x({1, 4, 1, 1}, std::vector<double>{0, 1, 2, 3});
  const TensorD y = trilinear_resize(x, {8, 1, 1});
  // Source coordinate (i + 0.5) / 2 - 0.5, clamped to [0, 3].
  for (std::size_t i = 0; i < 8; ++i) {
    const double s = std::clamp((i + 0.5) / 2.0 - 0.5, 0.0, 3.0);
    EXPECT_NEAR(y[i], s, 1e-12) << i;
  }
}

TEST(GlobalAvgPool, MeansPerChannel) {
  TensorD x({2, 1, 2, 1}, std::vector<double>{1, 3, -2, 6});
  const TensorD y = global_avg_pool(x);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Ops, FiniteOutputsForFiniteInputs) {
  Rng rng(9);
  const Tensor x = random_tensor({4, 5, 5, 5}, rng, -50, 50);
  EXPECT_TRUE(conv3d(x, random_tensor({4, 2, 3, 3, 3}, rng)).all_finite());
  EXPECT_TRUE(layer_norm(x, Tensor::full({4}, 1.0f), Tensor({4}), 1e-6).all_finite());
  EXPECT_TRUE(gelu(x).all_finite());
  EXPECT_TRUE(softmax_channels(x).all_finite());
}

}  // namespace
}  // namespace ct3d
