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
#include <functional>
#include <string>
#include <vector>

namespace ct3d::acceptance {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  bool skipped = false;  // quick mode; counts as neither pass nor fail
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  /// Skips the full-size forward pass and the end-to-end training run.
  bool quick = false;
  std::uint64_t seed = 2026;
};

CriterionResult inflation_invariants(const Options& opt);
CriterionResult gradient_oracle(const Options& opt);
CriterionResult convolution_oracles(const Options& opt);
CriterionResult spline_oracle(const Options& opt);
CriterionResult augmentation_invariants(const Options& opt);
CriterionResult structural_checks(const Options& opt);
CriterionResult reductions(const Options& opt);
CriterionResult end_to_end_smoke(const Options& opt);
CriterionResult format_round_trips(const Options& opt);

/// Runs every criterion in order, reporting each result as it completes.
std::vector<CriterionResult> run_all(const Options& opt,
                                     const std::function<void(const CriterionResult&)>& on_result);

/// "PASS [3] title (12.3s): detail", or SKIP / FAIL.
std::string format_result(const CriterionResult& r);

}  // namespace ct3d::acceptance
