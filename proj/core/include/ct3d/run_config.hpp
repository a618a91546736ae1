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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ct3d/augment.hpp"
#include "ct3d/inflate.hpp"
#include "ct3d/model.hpp"
#include "ct3d/train.hpp"

// Run configuration, read from "key = value" lines. '#' starts a comment.
// Every key is optional; config_keys() lists them with their defaults.
// Unknown keys and malformed values are rejected with the line number.

namespace ct3d {

struct RunConfig {
  std::string mode = "severity";  // severity (4 classes) | detection (2)
  ModelConfig model;
  AugmentPlan augment;
  TrainHyper train;
  std::size_t folds_k = 5;
  InflationMode inflation = InflationMode::full;
  std::filesystem::path labels;
  std::filesystem::path folds;  // computed from labels when empty
  std::filesystem::path out_dir = "runs";
  std::filesystem::path init_ckpt;  // 2D or 3D NTC1; random init when empty

  /// Relative paths are resolved against `base_dir`.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Every key, one per line, in config_keys() order.
  std::string to_text() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

const std::vector<ConfigKey>& config_keys();

}  // namespace ct3d
