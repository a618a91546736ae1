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
#include "ct3d/inflate.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;

double gauss(double x, double mu, double sigma) {
  return std::exp(-(x - mu) * (x - mu) / (2 * sigma * sigma));
}

TEST(GaussianWeight, Values) {
  EXPECT_DOUBLE_EQ(gaussian_weight(2.5, 2.5, 0.3), 1.0);
  EXPECT_NEAR(gaussian_weight(1.5, 1.0, 0.5), 0.6065306597126334, 1e-15);
  EXPECT_NEAR(gaussian_weight(0.0, 1.0, 0.25), 3.3546262790251185e-4, 1e-18);
  EXPECT_THROW(gaussian_weight(0, 0, 0), ParameterError);
}

TEST(InflationMode, Parse) {
  EXPECT_EQ(parse_inflation_mode("full"), InflationMode::full);
  EXPECT_EQ(parse_inflation_mode("1g"), InflationMode::one_gaussian);
  EXPECT_EQ(parse_inflation_mode("2g"), InflationMode::two_gaussian);
  EXPECT_THROW(parse_inflation_mode("3g"), ParameterError);
  for (auto m : {InflationMode::full, InflationMode::one_gaussian, InflationMode::two_gaussian}) {
    EXPECT_EQ(parse_inflation_mode(to_string(m)), m);
  }
}

TEST(InflateFull, ScalarKernel) {
  const TensorD out = inflate_full(TensorD::full({1, 1, 1, 1}, 1.0), 3);
  ASSERT_EQ(out.dims(), (Shape{1, 1, 1, 1, 3}));
  for (double v : out.data()) EXPECT_NEAR(v, 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(InflateFull, DepthOneIsIdentity) {
  Rng rng(1);
  const Tensor k = random_tensor({2, 3, 3, 3}, rng);
  EXPECT_EQ(inflate_full(k, 1).reshaped(k.dims()), k);
  EXPECT_EQ(inflate_1g(k, 1).reshaped(k.dims()), k);
}

TEST(InflateFull, SlicesIdenticalAndNormKept) {
  Rng rng(2);
  const TensorD k = random_tensor<double>({2, 2, 3, 3}, rng);
  const TensorD out = inflate_full(k, 5);
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t d = 1; d < 5; ++d) EXPECT_EQ(out[i * 5 + d], out[i * 5]);
  }
  EXPECT_NEAR(l2_norm(out), l2_norm(k), 1e-6 * l2_norm(k));
}

TEST(Inflate1g, DepthTwoProfile) {
  const TensorD out = inflate_1g(TensorD::full({1, 1, 1, 1}, 1.0), 2);
  const double a = std::exp(-8.0), b = 1.0, n = std::hypot(a, b);
  EXPECT_NEAR(out[0], a / n, 1e-15);
  EXPECT_NEAR(out[1], b / n, 1e-15);
  EXPECT_NEAR(out[0], 3.3546e-4, 1e-8);
  EXPECT_NEAR(out[1], 0.99999994, 1e-8);
}

TEST(Inflate1g, SliceRatiosFollowGaussian) {
  Rng rng(3);
  for (std::size_t depth : {2u, 3u, 6u, 7u}) {
    const TensorD k = random_tensor<double>({2, 1, 3, 3}, rng);
    const TensorD out = inflate_1g(k, depth);
    const double mu = depth / 2.0, sigma = depth / 8.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
      for (std::size_t d = 1; d < depth; ++d) {
        const double want = gauss(d, mu, sigma) / gauss(0, mu, sigma);
        EXPECT_NEAR(out[i * depth + d] / out[i * depth], want, 1e-9 * std::max(1.0, want));
      }
    }
    EXPECT_NEAR(l2_norm(out), l2_norm(k), 1e-9);
  }
}

TEST(Inflate2g, SingleEntry) {
  const TensorD out = inflate_2g(TensorD::full({1, 1, 1, 1}, 1.0), 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0], 1.0, 1e-15);
}

TEST(Inflate2g, EntrywiseFormula) {
  Rng rng(4);
  const TensorD k = random_tensor<double>({2, 2, 3, 4}, rng);
  const std::size_t depth = 5, width = 4;
  const TensorD out = inflate_2g(k, depth);
  TensorD pre(out.dims());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const std::size_t w = i % width;
    for (std::size_t d = 0; d < depth; ++d) {
      pre[i * depth + d] = k[i] * (gauss(d, depth / 2.0, depth / 8.0) +
                                   gauss(w, width / 2.0, width / 8.0));
    }
  }
  const double gamma = l2_norm(k) / l2_norm(pre);
  for (std::size_t j = 0; j < out.size(); ++j) EXPECT_NEAR(out[j], gamma * pre[j], 1e-12);
}

TEST(Inflate, NormPreservedForRandomInstances) {
  Rng rng(5);
  for (auto mode : {InflationMode::full, InflationMode::one_gaussian, InflationMode::two_gaussian}) {
    for (int t = 0; t < 20; ++t) {
      const Shape dims{rng.uniform_int(1, 3), rng.uniform_int(1, 3), rng.uniform_int(1, 7),
                       rng.uniform_int(1, 7)};
      const TensorD k = random_tensor<double>(dims, rng);
      const TensorD out = inflate(k, InflationSpec{mode, rng.uniform_int(1, 9)});
      EXPECT_NEAR(l2_norm(out), l2_norm(k), 1e-6 * l2_norm(k));
    }
  }
}

TEST(Inflate, ZeroKernelStaysZero) {
  const TensorD out = inflate_1g(TensorD({1, 2, 3, 3}), 4);
  EXPECT_EQ(out, TensorD({1, 2, 3, 3, 4}));
}

TEST(Inflate, RejectsBadArguments) {
  EXPECT_THROW(inflate_full(TensorD({2, 2, 3}), 3), ShapeError);
  EXPECT_THROW(inflate_full(TensorD({1, 1, 3, 3}), 0), ParameterError);
}

TEST(ComputeGamma, Cases) {
  Rng rng(6);
  const TensorD k = random_tensor<double>({1, 2, 3, 3}, rng);
  TensorD rep({1, 2, 3, 3, 4});
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t d = 0; d < 4; ++d) rep[i * 4 + d] = k[i];
  }
  EXPECT_NEAR(compute_gamma(rep, k).value, 0.5, 1e-15);
  EXPECT_NEAR(compute_gamma(k.reshaped({1, 2, 3, 3, 1}), k).value, 1.0, 1e-15);
  const TensorD other = random_tensor<double>({1, 2, 3, 3, 5}, rng);
  const Gamma g = compute_gamma(other, k);
  EXPECT_NEAR(g.value * l2_norm(other), l2_norm(k), 1e-7);
  EXPECT_FALSE(g.zero_kernel);
  EXPECT_TRUE(compute_gamma(TensorD({1, 1, 1, 1, 2}), k).zero_kernel);
}

}  // namespace
}  // namespace ct3d
