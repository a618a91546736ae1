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

#include "ct3d/checkpoint.hpp"
#include "ct3d/error.hpp"
#include "ct3d/inflate.hpp"
#include "test_util.hpp"

namespace ct3d {
namespace {

using testing::random_tensor;
using testing::TempDir;

/// A 2D counterpart of `config`: spatial kernels lose their depth axis and
/// the heads the 2D network lacks are left out.
Checkpoint make_2d_checkpoint(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig cls_only = config;
  cls_only.segmentation_head = false;
  Rng rng(seed);
  Checkpoint ck;
  for (const auto& spec : parameter_layout(cls_only)) {
    Shape dims = spec.dims;
    if (dims.size() == 5) dims.pop_back();
    ck.add(spec.name, random_tensor(dims, rng));
  }
  return ck;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto m = build_model<float>(ModelConfig::toy(), 1);
  const auto bytes = encode_checkpoint(save_checkpoint(m));
  Model<float> other = build_model<float>(ModelConfig::toy(), 2);
  load_checkpoint(other, decode_checkpoint(bytes));
  EXPECT_EQ(encode_checkpoint(save_checkpoint(other)), bytes);
  EXPECT_EQ(config_from_checkpoint(decode_checkpoint(bytes)), m.config);
}

TEST(Checkpoint, FileRoundTrip) {
  TempDir dir("ckpt");
  const auto m = build_model<float>(ModelConfig::toy(), 3);
  write_checkpoint(dir / "m.ntc", save_checkpoint(m));
  const Model<float> back = model_from_checkpoint(read_checkpoint(dir / "m.ntc"));
  EXPECT_EQ(back.config, m.config);
  auto a = m.params.begin();
  for (auto b = back.params.begin(); b != back.params.end(); ++a, ++b) {
    EXPECT_EQ(a->first, b->first);
    EXPECT_EQ(a->second, b->second);
  }
}

TEST(Checkpoint, CorruptionDetected) {
  auto bytes = encode_checkpoint(save_checkpoint(build_model<float>(ModelConfig::toy(), 4)));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
}

TEST(Checkpoint, DuplicateNamesRejected) {
  Checkpoint ck;
  ck.add("a", Tensor({2}));
  EXPECT_THROW(ck.add("a", Tensor({2})), FormatError);
}

TEST(LoadCheckpoint, RenamedKeyIsNamed) {
  const auto m = build_model<float>(ModelConfig::toy(), 5);
  Checkpoint ck = save_checkpoint(m);
  ck.entries[3].name = "renamed.weight";
  const std::string original = m.params.begin()[3].first;
  Model<float> target = build_model<float>(ModelConfig::toy(), 6);
  const Tensor before = target.params.begin()->second;
  try {
    load_checkpoint(target, ck);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string what = e.what();
    EXPECT_TRUE(what.find(original) != std::string::npos ||
                what.find("renamed.weight") != std::string::npos)
        << what;
  }
  EXPECT_EQ(target.params.begin()->second, before);
}

TEST(LoadCheckpoint, ToyIntoDefaultIsShapeError) {
  const Checkpoint ck = save_checkpoint(build_model<float>(ModelConfig::toy(), 7));
  ModelConfig big;
  big.segmentation_head = true;
  Model<float> target = build_model<float>(big, 8);
  EXPECT_THROW(load_checkpoint(target, ck), ShapeError);
}

TEST(Import2d, InflatesCopiesAndInitializes) {
  const ModelConfig cfg = ModelConfig::toy();
  const Checkpoint ck2d = make_2d_checkpoint(cfg, 9);
  const ImportResult r = import_2d_checkpoint(ck2d, InflationMode::full, cfg, 10);
  const Model<float> m = model_from_checkpoint(r.checkpoint);
  const Model<float> fresh = build_model<float>(cfg, 10);
  std::size_t inflated = 0, copied = 0, initialized = 0;
  for (const auto& rec : r.report) {
    const Tensor& got = m.params.get(rec.name);
    switch (rec.action) {
      case ImportRecord::Action::inflated: {
        ++inflated;
        EXPECT_NEAR(rec.target_norm, rec.source_norm, 1e-5 * std::max(1.0, rec.source_norm));
        EXPECT_NEAR(l2_norm(got), l2_norm(ck2d.find(rec.name)->value), 1e-5);
        break;
      }
      case ImportRecord::Action::copied:
        ++copied;
        EXPECT_EQ(got, ck2d.find(rec.name)->value) << rec.name;
        break;
      case ImportRecord::Action::initialized:
        ++initialized;
        EXPECT_EQ(rec.name.rfind("seg.", 0), 0u) << rec.name;
        EXPECT_EQ(got, fresh.params.get(rec.name));
        break;
    }
  }
  EXPECT_GT(inflated, 0u);
  EXPECT_GT(copied, 0u);
  EXPECT_GT(initialized, 0u);
  EXPECT_EQ(r.report.size(), m.params.size());
}

TEST(Import2d, StemNormPreserved) {
  ModelConfig cfg;
  cfg.num_classes = 2;
  Rng rng(11);
  Checkpoint ck;
  for (const auto& spec : parameter_layout(cfg)) {
    Shape dims = spec.dims;
    if (dims.size() == 5) dims.pop_back();
    ck.add(spec.name, spec.name == "stem.conv.weight" ? random_tensor(dims, rng) : Tensor(dims));
  }
  const auto r = import_2d_checkpoint(ck, InflationMode::full, cfg);
  const Tensor& stem = r.checkpoint.find("stem.conv.weight")->value;
  EXPECT_EQ(stem.dims(), (Shape{1, 96, 4, 4, 4}));
  const double n2 = l2_norm(ck.find("stem.conv.weight")->value);
  EXPECT_NEAR(l2_norm(stem), n2, 1e-5 * n2);
}

TEST(Import2d, DepthwiseGaussianPeak) {
  const ModelConfig cfg = ModelConfig::toy();
  const Checkpoint ck2d = make_2d_checkpoint(cfg, 12);
  const auto r = import_2d_checkpoint(ck2d, InflationMode::one_gaussian, cfg);
  const Tensor& dw = r.checkpoint.find("stages.0.blocks.0.dwconv.weight")->value;
  ASSERT_EQ(dw.dims(), (Shape{4, 1, 7, 7, 7}));
  for (std::size_t i = 0; i < dw.size() / 7; ++i) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < 7; ++d) {
      if (std::abs(dw[i * 7 + d]) > std::abs(dw[i * 7 + best])) best = d;
    }
    if (dw[i * 7 + best] != 0.0f) EXPECT_TRUE(best == 3 || best == 4) << best;
  }
}

TEST(Import2d, UnmappedEntriesListed) {
  Checkpoint ck2d = make_2d_checkpoint(ModelConfig::toy(), 13);
  ck2d.add("extra.one", Tensor({3}));
  ck2d.add("extra.two", Tensor({3}));
  try {
    import_2d_checkpoint(ck2d, InflationMode::full, ModelConfig::toy());
    FAIL() << "expected MigrationError";
  } catch (const MigrationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("extra.one"), std::string::npos);
    EXPECT_NE(what.find("extra.two"), std::string::npos);
  }
}

TEST(Import2d, IrreconcilableShape) {
  Checkpoint ck2d = make_2d_checkpoint(ModelConfig::toy(), 14);
  for (auto& e : ck2d.entries) {
    if (e.name == "stem.conv.weight") e.value = Tensor({1, 4, 3, 3});
  }
  EXPECT_THROW(import_2d_checkpoint(ck2d, InflationMode::full, ModelConfig::toy()), ShapeError);
}

}  // namespace
}  // namespace ct3d
