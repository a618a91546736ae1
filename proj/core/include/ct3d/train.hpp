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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ct3d/augment.hpp"
#include "ct3d/autodiff.hpp"
#include "ct3d/model.hpp"

namespace ct3d {

// ---------------------------------------------------------------------------
// Losses

struct ClassWeights {
  std::vector<double> weights;
};

/// Inverse class frequency N / (K n_c), rescaled to mean 1. Throws
/// ParameterError when a class has no members or a label is out of range.
ClassWeights class_weights(std::span<const std::size_t> labels, std::size_t num_classes);

/// Mean over rows of w[y] * -log softmax(logits)[y]. `logits` is (N, K), or
/// (K) for a single sample.
template <typename T>
double balanced_ce(const BasicTensor<T>& logits, std::span<const std::size_t> labels,
                   const ClassWeights& weights);
/// Unweighted cross-entropy.
template <typename T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels);

/// Voxel-mean two-class cross-entropy of (2, X, Y, Z) logits against a
/// {0, 1} mask (X, Y, Z). Throws ParameterError for non-binary masks.
template <typename T>
double seg_loss(const BasicTensor<T>& mask_logits, const Tensor& mask);

double multitask_loss(double cls_loss, double seg_loss, double lambda = 1.0);

template <typename T>
Var<T> balanced_ce(const Var<T>& logits, std::span<const std::size_t> labels,
                   const ClassWeights& weights);
template <typename T>
Var<T> seg_loss(const Var<T>& mask_logits, const Tensor& mask);
template <typename T>
Var<T> multitask_loss(const Var<T>& cls_loss, const Var<T>& seg_loss, double lambda = 1.0);

// ---------------------------------------------------------------------------
// Weight averaging

template <typename T>
struct EmaState {
  double decay = 0.999;
  ParameterStore<T> shadow;
};

/// Shadow initialized to a copy of `params`. Throws ParameterError unless
/// 0 <= decay < 1.
template <typename T>
EmaState<T> make_ema(const ParameterStore<T>& params, double decay = 0.999);
/// shadow <- decay * shadow + (1 - decay) * param, evaluated in double.
/// Throws ContractError on a name or shape mismatch.
template <typename T>
void ema_update(EmaState<T>& state, const ParameterStore<T>& params);

// ---------------------------------------------------------------------------
// Cases and folds

struct LabeledCase {
  std::string case_id;
  std::size_t label = 0;
  std::string volume_ref;
  std::string mask_ref;  // empty when the case has no mask
};

struct FoldAssignment {
  std::size_t k = 5;
  std::map<std::string, std::size_t> fold_of;

  /// Case ids of fold `f`, in the order of the input list.
  std::vector<std::string> members(std::size_t f, const std::vector<LabeledCase>& cases) const;
};

/// Each class is shuffled with its own seeded stream and dealt round-robin,
/// the deal continuing where the previous class stopped so fold sizes stay
/// balanced too. Throws ParameterError for k < 2 or duplicate case ids.
FoldAssignment stratified_kfold(const std::vector<LabeledCase>& cases, std::size_t k,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prediction and scoring

struct EnsembleOutput {
  std::vector<double> probabilities;
  std::size_t predicted = 0;
};

/// Index of the largest value; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

/// Mean of the per-model softmax of `logits` (one row per model), summed in
/// model order. Throws ShapeError on differing class counts.
EnsembleOutput ensemble_from_logits(const std::vector<std::vector<double>>& logits);

/// Model input is the (X, Y, Z) volume. Throws ParameterError for an empty
/// list.
EnsembleOutput ensemble_predict(const std::vector<const Model<float>*>& models,
                                const Tensor& volume);

struct F1Report {
  double macro = 0.0;
  std::vector<double> per_class;
};

/// Per-class F1 = 2 TP / (2 TP + FP + FN); 0 for a class that is neither
/// predicted nor present.
F1Report macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                  std::size_t num_classes);

/// Voxelwise argmax of the softmaxed mask logits, as a {0, 1} volume.
Tensor pseudo_label(const Model<float>& seg_model, const Tensor& volume);
std::vector<Tensor> generate_pseudo_labels(const Model<float>& seg_model,
                                           const std::vector<Tensor>& volumes);

// ---------------------------------------------------------------------------
// Training

struct TrainHyper {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t steps = 200;
  std::size_t batch = 4;
  double lambda = 1.0;  // weight of the segmentation loss
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
};

/// One training volume at both stored resolutions.
struct TrainingCase {
  Tensor pre;   // plan.pre_size^3
  Tensor base;  // plan.crop_size^3
  std::size_t label = 0;
  std::optional<Tensor> pre_mask;
  std::optional<Tensor> base_mask;
  std::uint64_t volume_id = 0;
};

struct TrainResult {
  Model<float> model;
  EmaState<float> ema;
  std::vector<double> loss_trace;
};

/// SGD with momentum (v <- mu v + g; p <- p - lr v) on balanced
/// cross-entropy with class weights from the case labels, plus lambda times
/// the segmentation loss for cases that carry a mask when the model has a
/// segmentation head. Each step draws `batch` cases from a seeded
/// per-epoch permutation and augments them with `plan`; the EMA shadow is
/// updated after every step. Throws TrainingDiverged on a non-finite loss.
TrainResult train_toy(Model<float> model, const std::vector<TrainingCase>& cases,
                      const AugmentPlan& plan, const TrainHyper& hyper);

}  // namespace ct3d
