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

#include "ct3d/error.hpp"
#include "ct3d/resample.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;

TEST(Spline1d, ConstantSignal) {
  const std::vector<double> y{5, 5, 5, 5};
  for (std::size_t m : {1u, 2u, 3u, 10u}) {
    for (double v : spline_resample_1d(y, m)) EXPECT_NEAR(v, 5.0, 1e-12);
  }
}

TEST(Spline1d, LinearSignalIsExact) {
  const std::vector<double> y{0, 1, 2, 3};
  const auto out = spline_resample_1d(y, 7);
  const std::vector<double> want{0, 0.5, 1, 1.5, 2, 2.5, 3};
  ASSERT_EQ(out.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out[i], want[i], 1e-12);
}

TEST(Spline1d, MatchesDenseSolve) {
  Rng rng(1);
  std::vector<double> y(9);
  for (auto& v : y) v = rng.uniform(-1, 1);
  const auto got = spline_resample_1d(y, 13);
  const auto want = oracle::spline_resample_dense(y, 13);
  for (std::size_t i = 0; i < 13; ++i) EXPECT_NEAR(got[i], want[i], 1e-6);
}

TEST(Spline1d, EndpointsAndSingleSamples) {
  Rng rng(2);
  std::vector<double> y(6);
  for (auto& v : y) v = rng.uniform(-1, 1);
  const auto out = spline_resample_1d(y, 11);
  EXPECT_DOUBLE_EQ(out.front(), y.front());
  EXPECT_DOUBLE_EQ(out.back(), y.back());
  EXPECT_NEAR(spline_resample_1d(y, 1)[0], NaturalSpline(y)(2.5), 1e-15);
  const std::vector<double> one{4.0};
  for (double v : spline_resample_1d(one, 5)) EXPECT_EQ(v, 4.0);
}

TEST(Spline1d, Errors) {
  const std::vector<double> y{1, 2};
  EXPECT_THROW(spline_resample_1d(y, 0), ParameterError);
  EXPECT_THROW(spline_resample_1d(std::vector<double>{}, 3), ParameterError);
}

TEST(NaturalSpline, SecondDerivativesSolveTheSystem) {
  Rng rng(3);
  std::vector<double> y(20);
  for (auto& v : y) v = rng.uniform(-3, 3);
  const NaturalSpline s(y);
  EXPECT_EQ(s.second_derivatives().front(), 0.0);
  EXPECT_EQ(s.second_derivatives().back(), 0.0);
  EXPECT_LT(s.residual(), 1e-12);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(s(static_cast<double>(i)), y[i], 1e-12);
}

TEST(SplineVolume, SameSizeIsIdentity) {
  Rng rng(4);
  const Tensor v = random_tensor({32, 32, 32}, rng);
  EXPECT_LE(max_abs_diff(spline_resample_volume(v, {32, 32, 32}), v), 1e-6);
}

TEST(SplineVolume, ReproducesLinearFunction) {
  TensorD v({6, 5, 7});
  for (std::size_t x = 0; x < 6; ++x)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t z = 0; z < 7; ++z) v.at(x, y, z) = 2.0 * x + 3.0 * y - 1.0 * z;
  const Extent3 t{11, 9, 4};
  const TensorD out = spline_resample_volume(v, t);
  for (std::size_t x = 0; x < t[0]; ++x)
    for (std::size_t y = 0; y < t[1]; ++y)
      for (std::size_t z = 0; z < t[2]; ++z) {
        const double fx = x * 5.0 / (t[0] - 1), fy = y * 4.0 / (t[1] - 1),
                     fz = z * 6.0 / (t[2] - 1);
        EXPECT_NEAR(out.at(x, y, z), 2 * fx + 3 * fy - fz, 1e-5);
      }
}

TEST(SplineVolume, MatchesComposedOneDimensionalOracle) {
  Rng rng(5);
  const TensorD v = random_tensor<double>({9, 8, 7}, rng);
  const std::size_t m = 12;
  // Z, then Y, then X, each with the dense oracle.
  TensorD a({9, 8, m});
  for (std::size_t x = 0; x < 9; ++x)
    for (std::size_t y = 0; y < 8; ++y) {
      std::vector<double> line(7);
      for (std::size_t z = 0; z < 7; ++z) line[z] = v.at(x, y, z);
      const auto r = oracle::spline_resample_dense(line, m);
      for (std::size_t z = 0; z < m; ++z) a.at(x, y, z) = r[z];
    }
  TensorD b({9, m, m});
  for (std::size_t x = 0; x < 9; ++x)
    for (std::size_t z = 0; z < m; ++z) {
      std::vector<double> line(8);
      for (std::size_t y = 0; y < 8; ++y) line[y] = a.at(x, y, z);
      const auto r = oracle::spline_resample_dense(line, m);
      for (std::size_t y = 0; y < m; ++y) b.at(x, y, z) = r[y];
    }
  TensorD c({m, m, m});
  for (std::size_t y = 0; y < m; ++y)
    for (std::size_t z = 0; z < m; ++z) {
      std::vector<double> line(9);
      for (std::size_t x = 0; x < 9; ++x) line[x] = b.at(x, y, z);
      const auto r = oracle::spline_resample_dense(line, m);
      for (std::size_t x = 0; x < m; ++x) c.at(x, y, z) = r[x];
    }
  EXPECT_LE(max_abs_diff(spline_resample_volume(v, {m, m, m}), c), 1e-5);
}

TEST(SplineVolume, ConstantVolume) {
  const Tensor v = Tensor::full({4, 5, 6}, 0.3f);
  const Tensor out1 = spline_resample_volume(v, {9, 3, 8});
  for (float x : out1.data()) EXPECT_NEAR(x, 0.3f, 1e-6);
}

}  // namespace
}  // namespace ct3d
