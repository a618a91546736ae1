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
#include <utility>
#include <vector>

#include "ct3d/augment.hpp"
#include "ct3d/train.hpp"

// Tab-separated case lists, fold files, predictions and metrics. Blank lines
// and lines starting with '#' are ignored on input.
//
//   labels       case_id  label  [volume_ref  [mask_ref]]
//   folds        case_id  fold
//   predictions  case_id  class  p0,p1,...
//   metrics      metric   value

namespace ct3d {

/// Relative refs are resolved against the directory of the labels file.
/// Throws FormatError with the line number on malformed input.
std::vector<LabeledCase> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<LabeledCase>& cases);

/// Lines follow the order of `cases`.
void write_folds(const std::filesystem::path& path, const FoldAssignment& folds,
                 const std::vector<LabeledCase>& cases);
/// k is one more than the largest fold index.
FoldAssignment read_folds(const std::filesystem::path& path);

struct PredictionRow {
  std::string case_id;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
};

/// Probabilities are written with 17 significant digits.
std::string format_predictions(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

using Metrics = std::vector<std::pair<std::string, double>>;
std::string format_metrics(const Metrics& metrics);

/// Writes text atomically.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Stable 64-bit identifier of a case, used to key its augmentation streams.
std::uint64_t case_stream_id(const std::string& case_id);

/// Loads a case volume (and mask, when the case has one) through ingestion
/// and the precompute cache, at the pre-crop and base sizes of `plan`. Mask
/// volumes are resampled the same way and re-binarized at 0.5.
TrainingCase prepare_case(const LabeledCase& c, const AugmentPlan& plan,
                          const std::filesystem::path& cache_dir);

/// The base-size volume of a case (what a model sees at inference), from the
/// same cache entry prepare_case uses.
Tensor load_base_volume(const LabeledCase& c, const AugmentPlan& plan,
                        const std::filesystem::path& cache_dir);

}  // namespace ct3d
