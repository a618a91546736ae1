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

#include "ct3d/model.hpp"

#include <cmath>

#include "ct3d/ops.hpp"
#include "ct3d/random.hpp"

namespace ct3d {

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (stage_depths.empty() || stage_depths.size() != stage_channels.size()) {
    throw ConfigError("stage_depths and stage_channels need the same non-zero length");
  }
  for (std::size_t i = 0; i < stage_depths.size(); ++i) {
    if (stage_depths[i] == 0 || stage_channels[i] == 0) {
      throw ConfigError("stage depths and widths must be positive");
    }
  }
  if (depthwise_kernel == 0 || depthwise_kernel % 2 == 0) {
    throw ConfigError("depthwise_kernel must be odd");
  }
  if (stem_patch == 0) throw ConfigError("stem_patch must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (segmentation_head && seg_channels == 0) {
    throw ConfigError("seg_channels must be positive");
  }
  if (!classification_head && !segmentation_head) {
    throw ConfigError("at least one head is required");
  }
  if (!(norm_eps > 0)) throw ConfigError("norm_eps must be positive");
}

std::size_t ModelConfig::total_stride() const {
  return stem_patch << (stage_depths.size() - 1);
}

void ModelConfig::validate_input(const Extent3& spatial) const {
  const std::size_t stride = total_stride();
  for (auto e : spatial) {
    if (e == 0 || e % stride != 0) {
      throw ShapeError("input extent " + std::to_string(e) + " is not a multiple of " +
                       std::to_string(stride));
    }
  }
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.stage_depths = {1, 1, 1, 1};
  c.stage_channels = {4, 8, 16, 32};
  c.seg_channels = 8;
  c.num_classes = 2;
  c.segmentation_head = true;
  return c;
}

std::vector<ParameterSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParameterSpec> out;
  auto norm = [&](const std::string& prefix, std::size_t ch) {
    out.push_back({prefix + ".weight", {ch}});
    out.push_back({prefix + ".bias", {ch}});
  };
  const std::size_t p = c.stem_patch, k = c.depthwise_kernel;
  const std::size_t c0 = c.stage_channels[0];
  out.push_back({"stem.conv.weight", {c.in_channels, c0, p, p, p}});
  out.push_back({"stem.conv.bias", {c0}});
  norm("stem.norm", c0);
  for (std::size_t s = 0; s < c.stage_depths.size(); ++s) {
    const std::size_t ch = c.stage_channels[s];
    if (s > 0) {
      const std::string ds = "downsample." + std::to_string(s);
      const std::size_t prev = c.stage_channels[s - 1];
      norm(ds + ".norm", prev);
      out.push_back({ds + ".conv.weight", {prev, ch, 2, 2, 2}});
      out.push_back({ds + ".conv.bias", {ch}});
    }
    for (std::size_t b = 0; b < c.stage_depths[s]; ++b) {
      const std::string blk = "stages." + std::to_string(s) + ".blocks." + std::to_string(b);
      const std::size_t hidden = ModelConfig::kExpansion * ch;
      out.push_back({blk + ".dwconv.weight", {ch, 1, k, k, k}});
      out.push_back({blk + ".dwconv.bias", {ch}});
      norm(blk + ".norm", ch);
      out.push_back({blk + ".pwconv1.weight", {hidden, ch}});
      out.push_back({blk + ".pwconv1.bias", {hidden}});
      out.push_back({blk + ".pwconv2.weight", {ch, hidden}});
      out.push_back({blk + ".pwconv2.bias", {ch}});
    }
  }
  if (c.classification_head) {
    const std::size_t last = c.stage_channels.back();
    norm("head.norm", last);
    out.push_back({"head.fc.weight", {c.num_classes, last}});
    out.push_back({"head.fc.bias", {c.num_classes}});
  }
  if (c.segmentation_head) {
    const std::size_t w = c.seg_channels;
    for (std::size_t s = 0; s < c.stage_channels.size(); ++s) {
      const std::string lat = "seg.lateral." + std::to_string(s);
      out.push_back({lat + ".weight", {w, c.stage_channels[s]}});
      out.push_back({lat + ".bias", {w}});
      norm(lat + ".norm", w);
    }
    out.push_back({"seg.fuse.weight", {w * c.stage_channels.size(), w, 3, 3, 3}});
    out.push_back({"seg.fuse.bias", {w}});
    norm("seg.fuse.norm", w);
    out.push_back({"seg.out.weight", {ModelConfig::kSegClasses, w}});
    out.push_back({"seg.out.bias", {ModelConfig::kSegClasses}});
  }
  return out;
}

template <typename T>
void ParameterStore<T>::add(std::string name, BasicTensor<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
const BasicTensor<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
BasicTensor<T>& ParameterStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_norm(const std::string& name) {
  return name.find(".norm.") != std::string::npos;
}

double truncated_normal(Rng& rng, double stddev) {
  for (;;) {
    const double v = rng.normal();
    if (std::abs(v) <= 2.0) return v * stddev;
  }
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  Model<T> m{config, {}};
  Rng rng(seed);
  for (const auto& spec : parameter_layout(config)) {
    BasicTensor<T> t(spec.dims);
    if (is_norm(spec.name)) {
      if (ends_with(spec.name, ".weight")) std::fill(t.data().begin(), t.data().end(), T(1));
    } else if (ends_with(spec.name, ".weight")) {
      for (auto& v : t.data()) v = static_cast<T>(truncated_normal(rng, 0.02));
    }
    m.params.add(spec.name, std::move(t));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward pass, written once for tensors and tape variables. `P` maps a
// parameter name to a value usable by the op overloads.

namespace {

template <typename V, typename P>
V norm(const V& x, const P& p, const std::string& prefix, double eps) {
  return layer_norm(x, p(prefix + ".weight"), p(prefix + ".bias"), eps);
}

template <typename V, typename P>
V linear(const V& x, const P& p, const std::string& prefix) {
  return add_channel_bias(pointwise(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

template <typename V, typename P>
std::vector<V> features_impl(const ModelConfig& c, const P& p, const V& input) {
  const double eps = c.norm_eps;
  const std::size_t patch = c.stem_patch;
  ConvParams stem{{patch, patch, patch}, {0, 0, 0}};
  V x = add_channel_bias(conv3d(input, p("stem.conv.weight"), stem), p("stem.conv.bias"));
  x = norm(x, p, "stem.norm", eps);

  const std::size_t pad = c.depthwise_kernel / 2;
  const ConvParams dw{{1, 1, 1}, {pad, pad, pad}};
  const ConvParams down{{2, 2, 2}, {0, 0, 0}};
  std::vector<V> stages;
  for (std::size_t s = 0; s < c.stage_depths.size(); ++s) {
    if (s > 0) {
      const std::string ds = "downsample." + std::to_string(s);
      x = norm(x, p, ds + ".norm", eps);
      x = add_channel_bias(conv3d(x, p(ds + ".conv.weight"), down), p(ds + ".conv.bias"));
    }
    for (std::size_t b = 0; b < c.stage_depths[s]; ++b) {
      const std::string blk = "stages." + std::to_string(s) + ".blocks." + std::to_string(b);
      V y = add_channel_bias(depthwise_conv3d(x, p(blk + ".dwconv.weight"), dw),
                             p(blk + ".dwconv.bias"));
      y = norm(y, p, blk + ".norm", eps);
      y = gelu(linear(y, p, blk + ".pwconv1"));
      y = linear(y, p, blk + ".pwconv2");
      x = add(x, y);
    }
    stages.push_back(x);
  }
  return stages;
}

template <typename V, typename P>
V classify_impl(const ModelConfig& c, const P& p, const std::vector<V>& stages) {
  if (!c.classification_head) throw ConfigError("model has no classification head");
  V pooled = global_avg_pool(stages.back());
  pooled = norm(pooled, p, "head.norm", c.norm_eps);
  return linear(pooled, p, "head.fc");
}

template <typename V, typename P>
V segment_impl(const ModelConfig& c, const P& p, const std::vector<V>& stages,
               const Extent3& out_size) {
  if (!c.segmentation_head) throw ConfigError("model has no segmentation head");
  if (stages.size() != c.stage_channels.size()) {
    throw ShapeError("segment: expected one feature map per stage");
  }
  const Extent3 grid = spatial_extent(stages.front().dims());
  std::vector<V> lateral;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string lat = "seg.lateral." + std::to_string(s);
    V y = linear(stages[s], p, lat);
    y = gelu(norm(y, p, lat + ".norm", c.norm_eps));
    lateral.push_back(trilinear_resize(y, grid));
  }
  V fused = concat_channels(lateral);
  const ConvParams same{{1, 1, 1}, {1, 1, 1}};
  fused = add_channel_bias(conv3d(fused, p("seg.fuse.weight"), same), p("seg.fuse.bias"));
  fused = gelu(norm(fused, p, "seg.fuse.norm", c.norm_eps));
  V logits = linear(fused, p, "seg.out");
  return trilinear_resize(logits, out_size);
}

template <typename T>
BasicTensor<T> as_model_input(const ModelConfig& c, const BasicTensor<T>& input) {
  BasicTensor<T> x = input;
  if (x.rank() == 3 && c.in_channels == 1) {
    x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  }
  if (x.rank() != 4 || x.dim(0) != c.in_channels) {
    throw ShapeError("model input must be (" + std::to_string(c.in_channels) +
                     ", X, Y, Z), got " + to_string(input.dims()));
  }
  c.validate_input(spatial_extent(x.dims()));
  return x;
}

}  // namespace

template <typename T>
StageFeatures<T> forward_features(const Model<T>& model, const BasicTensor<T>& input) {
  const auto x = as_model_input(model.config, input);
  auto p = [&](const std::string& n) -> const BasicTensor<T>& { return model.params.get(n); };
  return {features_impl(model.config, p, x)};
}

template <typename T>
BasicTensor<T> classify(const Model<T>& model, const StageFeatures<T>& features) {
  auto p = [&](const std::string& n) -> const BasicTensor<T>& { return model.params.get(n); };
  return classify_impl(model.config, p, features.stages);
}

template <typename T>
BasicTensor<T> segment(const Model<T>& model, const StageFeatures<T>& features,
                       const Extent3& out_size) {
  auto p = [&](const std::string& n) -> const BasicTensor<T>& { return model.params.get(n); };
  return segment_impl(model.config, p, features.stages, out_size);
}

template <typename T>
VarMap<T> bind_parameters(Tape<T>& tape, const ParameterStore<T>& params) {
  VarMap<T> vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.parameter(name, t));
  return vars;
}

namespace {

template <typename T>
auto var_lookup(const VarMap<T>& params) {
  return [&params](const std::string& n) -> const Var<T>& {
    auto it = params.find(n);
    if (it == params.end()) throw ContractError("no parameter named '" + n + "'");
    return it->second;
  };
}

}  // namespace

template <typename T>
StageFeaturesT<Var<T>> forward_features(const ModelConfig& config, const VarMap<T>& params,
                                        const Var<T>& input) {
  if (input.value().rank() != 4 || input.value().dim(0) != config.in_channels) {
    throw ShapeError("model input must be (C_in, X, Y, Z), got " +
                     to_string(input.value().dims()));
  }
  config.validate_input(spatial_extent(input.value().dims()));
  return {features_impl(config, var_lookup(params), input)};
}

template <typename T>
Var<T> classify(const ModelConfig& config, const VarMap<T>& params,
                const StageFeaturesT<Var<T>>& features) {
  return classify_impl(config, var_lookup(params), features.stages);
}

template <typename T>
Var<T> segment(const ModelConfig& config, const VarMap<T>& params,
               const StageFeaturesT<Var<T>>& features, const Extent3& out_size) {
  return segment_impl(config, var_lookup(params), features.stages, out_size);
}

#define CT3D_INSTANTIATE_MODEL(T)                                                        \
  template class ParameterStore<T>;                                                      \
  template Model<T> build_model(const ModelConfig&, std::uint64_t);                     \
  template StageFeatures<T> forward_features(const Model<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> classify(const Model<T>&, const StageFeatures<T>&);           \
  template BasicTensor<T> segment(const Model<T>&, const StageFeatures<T>&,             \
                                  const Extent3&);                                      \
  template VarMap<T> bind_parameters(Tape<T>&, const ParameterStore<T>&);               \
  template StageFeaturesT<Var<T>> forward_features(const ModelConfig&, const VarMap<T>&, \
                                                   const Var<T>&);                      \
  template Var<T> classify(const ModelConfig&, const VarMap<T>&,                        \
                           const StageFeaturesT<Var<T>>&);                              \
  template Var<T> segment(const ModelConfig&, const VarMap<T>&,                         \
                          const StageFeaturesT<Var<T>>&, const Extent3&);

CT3D_INSTANTIATE_MODEL(float)
CT3D_INSTANTIATE_MODEL(double)

}  // namespace ct3d
