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
#include <string>
#include <utility>
#include <vector>

#include "ct3d/autodiff.hpp"
#include "ct3d/tensor.hpp"

// Volumetric ConvNeXt.
//
//   stem        conv p^3 stride p (+bias), LayerNorm
//   stage s     depth_s blocks at width C_s; stages after the first are
//               preceded by LayerNorm + conv 2^3 stride 2
//   block       depthwise k^3 conv -> LayerNorm -> pointwise C->4C -> GELU
//               -> pointwise 4C->C, added to the block input
//   cls head    global average pool of the last stage -> LayerNorm -> linear
//   seg head    per stage: pointwise to seg width, LayerNorm, GELU, resize to
//               the first-stage grid; concat -> conv 3^3 -> LayerNorm -> GELU
//               -> pointwise to 2 channels -> resize to the input grid
//
// Parameter names follow the usual ConvNeXt layout, e.g.
// "stages.2.blocks.4.dwconv.weight". Pointwise and linear weights are
// (C_out, C_in) matrices; spatial kernels are (C_in, C_out, k, k, k).

namespace ct3d {

struct ModelConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> stage_depths{3, 3, 9, 3};
  std::vector<std::size_t> stage_channels{96, 192, 384, 768};
  std::size_t depthwise_kernel = 7;
  std::size_t stem_patch = 4;
  std::size_t num_classes = 4;
  std::size_t seg_channels = 128;
  bool classification_head = true;
  bool segmentation_head = false;
  double norm_eps = 1e-6;

  static constexpr std::size_t kExpansion = 4;
  static constexpr std::size_t kSegClasses = 2;

  /// Throws ConfigError.
  void validate() const;
  /// Input extents must be multiples of this: stem_patch * 2^(stages - 1).
  std::size_t total_stride() const;
  void validate_input(const Extent3& spatial) const;

  /// depths [1,1,1,1], channels [4,8,16,32], seg width 8, both heads.
  static ModelConfig toy();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParameterSpec {
  std::string name;
  Shape dims;
};

/// Every parameter of the configuration, in creation order.
std::vector<ParameterSpec> parameter_layout(const ModelConfig& config);

/// Ordered name -> tensor store.
template <typename T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, BasicTensor<T>>;

  void add(std::string name, BasicTensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const BasicTensor<T>& get(const std::string& name) const;
  BasicTensor<T>& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Model {
  ModelConfig config;
  ParameterStore<T> params;

  template <typename U>
  Model<U> cast() const {
    return Model<U>{config, params.template cast<U>()};
  }
};

/// Weights ~ N(0, 0.02^2) truncated at two standard deviations, biases zero,
/// LayerNorm gamma one and beta zero.
template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// One feature map per stage, (C_s, S / (p * 2^s), ...) for s = 0..n-1.
template <typename V>
struct StageFeaturesT {
  std::vector<V> stages;
};

template <typename T>
using StageFeatures = StageFeaturesT<BasicTensor<T>>;

/// `input` is (C_in, X, Y, Z), or (X, Y, Z) for single-channel models.
template <typename T>
StageFeatures<T> forward_features(const Model<T>& model, const BasicTensor<T>& input);
/// Raw logits (num_classes).
template <typename T>
BasicTensor<T> classify(const Model<T>& model, const StageFeatures<T>& features);
/// Mask logits (2, X, Y, Z).
template <typename T>
BasicTensor<T> segment(const Model<T>& model, const StageFeatures<T>& features,
                       const Extent3& out_size);

// Tape versions, for training and gradient checks.

template <typename T>
using VarMap = std::map<std::string, Var<T>>;

template <typename T>
VarMap<T> bind_parameters(Tape<T>& tape, const ParameterStore<T>& params);

template <typename T>
StageFeaturesT<Var<T>> forward_features(const ModelConfig& config, const VarMap<T>& params,
                                        const Var<T>& input);
template <typename T>
Var<T> classify(const ModelConfig& config, const VarMap<T>& params,
                const StageFeaturesT<Var<T>>& features);
template <typename T>
Var<T> segment(const ModelConfig& config, const VarMap<T>& params,
               const StageFeaturesT<Var<T>>& features, const Extent3& out_size);

}  // namespace ct3d
