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

#include "ct3d/autodiff.hpp"
#include "ct3d/error.hpp"
#include "ct3d/model.hpp"
#include "ct3d/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;

TEST(ModelConfig, Validation) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  EXPECT_NO_THROW(ModelConfig::toy().validate());
  ModelConfig c = ModelConfig::toy();
  c.depthwise_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  c.stage_channels.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  c.classification_head = c.segmentation_head = false;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(ModelConfig{}.total_stride(), 32u);
  EXPECT_THROW(ModelConfig::toy().validate_input({32, 32, 30}), ShapeError);
}

TEST(BuildModel, ParameterCountMatchesClosedForm) {
  for (ModelConfig c : {ModelConfig{}, ModelConfig::toy()}) {
    const auto layout = parameter_layout(c);
    std::size_t n = 0;
    for (const auto& p : layout) n += numel(p.dims);
    EXPECT_EQ(n, oracle::parameter_count(c));
  }
  ModelConfig seg;
  seg.segmentation_head = true;
  EXPECT_EQ(build_model<float>(ModelConfig::toy(), 1).params.scalar_count(),
            oracle::parameter_count(ModelConfig::toy()));
  std::size_t n = 0;
  for (const auto& p : parameter_layout(seg)) n += numel(p.dims);
  EXPECT_EQ(n, oracle::parameter_count(seg));
}

TEST(BuildModel, InitializationConventions) {
  const auto m = build_model<float>(ModelConfig::toy(), 3);
  for (const auto& [name, t] : m.params) {
    const bool norm = name.find("norm") != std::string::npos;
    if (norm && name.ends_with(".weight")) {
      for (float v : t.data()) EXPECT_EQ(v, 1.0f) << name;
    } else if (name.ends_with(".bias")) {
      for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
    } else {
      for (float v : t.data()) EXPECT_LE(std::abs(v), 0.04f) << name;
    }
  }
  EXPECT_EQ(build_model<float>(ModelConfig::toy(), 3).params.begin()->second,
            m.params.begin()->second);
}

TEST(Forward, ToyStageExtents) {
  const auto m = build_model<float>(ModelConfig::toy(), 1);
  Rng rng(2);
  const auto f = forward_features(m, random_tensor({32, 32, 32}, rng, 0, 1));
  ASSERT_EQ(f.stages.size(), 4u);
  const std::size_t side[] = {8, 4, 2, 1}, ch[] = {4, 8, 16, 32};
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(f.stages[s].dims(), (Shape{ch[s], side[s], side[s], side[s]}));
  }
}

TEST(Forward, ZeroInputFiniteAndDeterministic) {
  const auto m = build_model<float>(ModelConfig::toy(), 1);
  const Tensor zero({1, 32, 32, 32});
  const auto a = forward_features(m, zero);
  const auto b = forward_features(m, zero);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_TRUE(a.stages[s].all_finite());
    EXPECT_EQ(a.stages[s], b.stages[s]);
  }
  EXPECT_TRUE(classify(m, a).all_finite());
  EXPECT_EQ(segment(m, a, {32, 32, 32}), segment(m, b, {32, 32, 32}));
}

TEST(Forward, RejectsBadInput) {
  const auto m = build_model<float>(ModelConfig::toy(), 1);
  EXPECT_THROW(forward_features(m, Tensor({2, 32, 32, 32})), ShapeError);
  EXPECT_THROW(forward_features(m, Tensor({1, 20, 32, 32})), ShapeError);
}

TEST(Classify, LogitCountAndPoolingInvariance) {
  ModelConfig c = ModelConfig::toy();
  c.num_classes = 4;
  const auto m = build_model<float>(c, 4);
  Rng rng(5);
  const auto f = forward_features(m, random_tensor({32, 32, 32}, rng, 0, 1));
  EXPECT_EQ(classify(m, f).dims(), Shape{4});

  // Permuting the spatial positions of the last stage leaves the logits alone.
  auto g = f;
  g.stages.back() = random_tensor({32, 2, 2, 2}, rng);
  auto h = g;
  Tensor& last = h.stages.back();
  for (std::size_t ch = 0; ch < 32; ++ch) {
    std::reverse(last.data().begin() + ch * 8, last.data().begin() + (ch + 1) * 8);
  }
  EXPECT_LE(max_abs_diff(classify(m, g), classify(m, h)), 1e-6);
}

TEST(Classify, ConstantFeaturesGiveLinearOfPooledValue) {
  const auto m = build_model<double>(ModelConfig::toy(), 6);
  StageFeatures<double> f;
  for (std::size_t s = 0; s < 4; ++s) f.stages.push_back(TensorD({4u << s, 1, 1, 1}));
  f.stages.back() = TensorD::full({32, 2, 2, 2}, 0.5);
  StageFeatures<double> g = f;
  g.stages.back() = TensorD::full({32, 1, 1, 1}, 0.5);
  EXPECT_LE(max_abs_diff(classify(m, f), classify(m, g)), 1e-12);
}

TEST(Segment, OutputExtents) {
  const auto m = build_model<float>(ModelConfig::toy(), 7);
  Rng rng(8);
  for (std::size_t s : {32u, 64u}) {
    const auto f = forward_features(m, random_tensor({s, s, s}, rng, 0, 1));
    EXPECT_EQ(segment(m, f, {s, s, s}).dims(), (Shape{2, s, s, s}));
  }
  ModelConfig cls_only = ModelConfig::toy();
  cls_only.segmentation_head = false;
  const auto c = build_model<float>(cls_only, 7);
  EXPECT_THROW(segment(c, forward_features(c, Tensor({32, 32, 32})), {32, 32, 32}), ConfigError);
}

TEST(Forward, TapeMatchesPlainForward) {
  const auto m = build_model<double>(ModelConfig::toy(), 9);
  Rng rng(10);
  const TensorD x = random_tensor<double>({1, 32, 32, 32}, rng, 0, 1);
  const auto plain = forward_features(m, x);
  Tape<double> tape;
  const auto vars = bind_parameters(tape, m.params);
  const auto taped = forward_features(m.config, vars, tape.constant(x));
  EXPECT_LE(max_abs_diff(classify(m.config, vars, taped).value(), classify(m, plain)), 1e-12);
  EXPECT_LE(max_abs_diff(segment(m.config, vars, taped, {32, 32, 32}).value(),
                         segment(m, plain, {32, 32, 32})),
            1e-12);
}

}  // namespace
}  // namespace ct3d
