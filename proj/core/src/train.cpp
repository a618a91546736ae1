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

#include "ct3d/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ct3d/error.hpp"
#include "ct3d/ops.hpp"
#include "ct3d/random.hpp"

namespace ct3d {

ClassWeights class_weights(std::span<const std::size_t> labels, std::size_t num_classes) {
  if (num_classes == 0) throw ParameterError("class_weights: num_classes must be positive");
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) {
    if (y >= num_classes) {
      throw ParameterError("class_weights: label " + std::to_string(y) + " out of range");
    }
    ++counts[y];
  }
  ClassWeights w;
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      throw ParameterError("class_weights: class " + std::to_string(c) + " has no members");
    }
    w.weights.push_back(n / (static_cast<double>(num_classes) * static_cast<double>(counts[c])));
  }
  const double mean =
      std::accumulate(w.weights.begin(), w.weights.end(), 0.0) / static_cast<double>(num_classes);
  for (auto& v : w.weights) v /= mean;
  return w;
}

namespace {

struct RowView {
  std::size_t rows, classes;
};

template <typename T>
RowView logit_rows(const BasicTensor<T>& logits, std::size_t n_labels, const char* what) {
  RowView v{};
  if (logits.rank() == 1) {
    v = {1, logits.dim(0)};
  } else if (logits.rank() == 2) {
    v = {logits.dim(0), logits.dim(1)};
  } else {
    throw ShapeError(std::string(what) + ": logits must be (K) or (N, K), got " +
                     to_string(logits.dims()));
  }
  if (n_labels != v.rows) {
    throw ShapeError(std::string(what) + ": " + std::to_string(n_labels) + " labels for " +
                     std::to_string(v.rows) + " rows");
  }
  return v;
}

/// -log softmax(x)[y] over `k` entries.
template <typename T>
double nll(const T* x, std::size_t k, std::size_t y) {
  double m = x[0];
  for (std::size_t i = 1; i < k; ++i) m = std::max(m, static_cast<double>(x[i]));
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(static_cast<double>(x[i]) - m);
  return m + std::log(s) - static_cast<double>(x[y]);
}

template <typename T>
void softmax_row(const T* x, std::size_t k, double* p) {
  double m = x[0];
  for (std::size_t i = 1; i < k; ++i) m = std::max(m, static_cast<double>(x[i]));
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += p[i] = std::exp(static_cast<double>(x[i]) - m);
  for (std::size_t i = 0; i < k; ++i) p[i] /= s;
}

// `w` may be null for unit weights; a unit weight multiplies by 1.0 exactly,
// so both entry points agree bit for bit.
template <typename T>
double ce_impl(const BasicTensor<T>& logits, std::span<const std::size_t> labels,
               const double* w, const char* what) {
  const RowView v = logit_rows(logits, labels.size(), what);
  double total = 0;
  for (std::size_t i = 0; i < v.rows; ++i) {
    const std::size_t y = labels[i];
    if (y >= v.classes) throw ParameterError(std::string(what) + ": label out of range");
    total += (w ? w[y] : 1.0) * nll(logits.data().data() + i * v.classes, v.classes, y);
  }
  return total / static_cast<double>(v.rows);
}

void check_weights(const ClassWeights& weights, std::size_t classes) {
  if (weights.weights.size() != classes) {
    throw ShapeError("balanced_ce: " + std::to_string(weights.weights.size()) +
                     " class weights for " + std::to_string(classes) + " classes");
  }
}

void check_mask(const Tensor& mask, const Shape& logit_dims) {
  if (logit_dims.size() != 4 || logit_dims[0] != 2) {
    throw ShapeError("seg_loss: logits must be (2, X, Y, Z), got " + to_string(logit_dims));
  }
  require_same_shape(mask.dims(), Shape(logit_dims.begin() + 1, logit_dims.end()), "seg_loss");
  for (float v : mask.data()) {
    if (v != 0.0f && v != 1.0f) throw ParameterError("seg_loss: mask is not binary");
  }
}

}  // namespace

template <typename T>
double balanced_ce(const BasicTensor<T>& logits, std::span<const std::size_t> labels,
                   const ClassWeights& weights) {
  check_weights(weights, logits.dims().back());
  return ce_impl(logits, labels, weights.weights.data(), "balanced_ce");
}

template <typename T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> labels) {
  return ce_impl(logits, labels, nullptr, "cross_entropy");
}

template <typename T>
double seg_loss(const BasicTensor<T>& mask_logits, const Tensor& mask) {
  check_mask(mask, mask_logits.dims());
  const std::size_t n = mask.size();
  const T* a = mask_logits.data().data();
  const T* b = a + n;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T pair[2] = {a[i], b[i]};
    total += nll(pair, 2, mask[i] != 0.0f ? 1 : 0);
  }
  return total / static_cast<double>(n);
}

double multitask_loss(double cls_loss, double seg, double lambda) {
  if (!(lambda >= 0)) throw ParameterError("multitask_loss: lambda must be non-negative");
  return cls_loss + lambda * seg;
}

template <typename T>
Var<T> balanced_ce(const Var<T>& logits, std::span<const std::size_t> labels,
                   const ClassWeights& weights) {
  const BasicTensor<T>& x = logits.value();
  const double loss = balanced_ce(x, labels, weights);
  const RowView v = logit_rows(x, labels.size(), "balanced_ce");
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  std::vector<double> w = weights.weights;
  return logits.tape().record(
      BasicTensor<T>::scalar(static_cast<T>(loss)), {logits},
      [logits, ys, w, v](Tape<T>& tape, const BasicTensor<T>& g) {
        const BasicTensor<T>& xv = logits.value();
        BasicTensor<T> gi(xv.dims());
        std::vector<double> p(v.classes);
        const double scale = static_cast<double>(g[0]) / static_cast<double>(v.rows);
        for (std::size_t i = 0; i < v.rows; ++i) {
          softmax_row(xv.data().data() + i * v.classes, v.classes, p.data());
          p[ys[i]] -= 1.0;
          for (std::size_t c = 0; c < v.classes; ++c) {
            gi[i * v.classes + c] = static_cast<T>(scale * w[ys[i]] * p[c]);
          }
        }
        tape.accumulate(logits, std::move(gi));
      });
}

template <typename T>
Var<T> seg_loss(const Var<T>& mask_logits, const Tensor& mask) {
  const double loss = seg_loss(mask_logits.value(), mask);
  return mask_logits.tape().record(
      BasicTensor<T>::scalar(static_cast<T>(loss)), {mask_logits},
      [mask_logits, mask](Tape<T>& tape, const BasicTensor<T>& g) {
        const BasicTensor<T>& x = mask_logits.value();
        const std::size_t n = mask.size();
        const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
        BasicTensor<T> gi(x.dims());
        for (std::size_t i = 0; i < n; ++i) {
          const T pair[2] = {x[i], x[n + i]};
          double p[2];
          softmax_row(pair, 2, p);
          p[mask[i] != 0.0f ? 1 : 0] -= 1.0;
          gi[i] = static_cast<T>(scale * p[0]);
          gi[n + i] = static_cast<T>(scale * p[1]);
        }
        tape.accumulate(mask_logits, std::move(gi));
      });
}

template <typename T>
Var<T> multitask_loss(const Var<T>& cls_loss, const Var<T>& seg, double lambda) {
  if (!(lambda >= 0)) throw ParameterError("multitask_loss: lambda must be non-negative");
  return add(cls_loss, scale(seg, static_cast<T>(lambda)));
}

// ---------------------------------------------------------------------------

template <typename T>
EmaState<T> make_ema(const ParameterStore<T>& params, double decay) {
  if (!(decay >= 0 && decay < 1)) throw ParameterError("EMA decay must lie in [0, 1)");
  return EmaState<T>{decay, params};
}

template <typename T>
void ema_update(EmaState<T>& state, const ParameterStore<T>& params) {
  if (state.shadow.size() != params.size()) {
    throw ContractError("ema_update: shadow has " + std::to_string(state.shadow.size()) +
                        " parameters, model has " + std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    if (!state.shadow.contains(name)) {
      throw ContractError("ema_update: shadow has no parameter '" + name + "'");
    }
    require_same_shape(state.shadow.get(name).dims(), p.dims(), "ema_update");
  }
  const double b = state.decay;
  for (const auto& [name, p] : params) {
    auto s = state.shadow.get(name).data();
    auto v = p.data();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<T>(b * static_cast<double>(s[i]) + (1.0 - b) * static_cast<double>(v[i]));
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> FoldAssignment::members(std::size_t f,
                                                 const std::vector<LabeledCase>& cases) const {
  std::vector<std::string> out;
  for (const auto& c : cases) {
    auto it = fold_of.find(c.case_id);
    if (it != fold_of.end() && it->second == f) out.push_back(c.case_id);
  }
  return out;
}

FoldAssignment stratified_kfold(const std::vector<LabeledCase>& cases, std::size_t k,
                                std::uint64_t seed) {
  if (k < 2) throw ParameterError("stratified_kfold: k must be at least 2");
  std::map<std::size_t, std::vector<std::string>> by_class;
  std::set<std::string> ids;
  for (const auto& c : cases) {
    if (!ids.insert(c.case_id).second) {
      throw ParameterError("stratified_kfold: duplicate case id '" + c.case_id + "'");
    }
    by_class[c.label].push_back(c.case_id);
  }
  FoldAssignment out;
  out.k = k;
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    Rng rng(StreamKey{seed, label, 0x666f6c64});
    std::shuffle(members.begin(), members.end(), rng.engine());
    for (const auto& id : members) {
      out.fold_of[id] = next;
      next = (next + 1) % k;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ParameterError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

EnsembleOutput ensemble_from_logits(const std::vector<std::vector<double>>& logits) {
  if (logits.empty()) throw ParameterError("ensemble needs at least one model");
  const std::size_t k = logits.front().size();
  if (k == 0) throw ShapeError("ensemble: empty logit vector");
  EnsembleOutput out;
  out.probabilities.assign(k, 0.0);
  std::vector<double> p(k);
  for (const auto& row : logits) {
    if (row.size() != k) {
      throw ShapeError("ensemble: models disagree on the number of classes (" +
                       std::to_string(k) + " vs " + std::to_string(row.size()) + ")");
    }
    softmax_row(row.data(), k, p.data());
    for (std::size_t c = 0; c < k; ++c) out.probabilities[c] += p[c];
  }
  for (auto& v : out.probabilities) v /= static_cast<double>(logits.size());
  out.predicted = argmax(out.probabilities);
  return out;
}

EnsembleOutput ensemble_predict(const std::vector<const Model<float>*>& models,
                                const Tensor& volume) {
  if (models.empty()) throw ParameterError("ensemble needs at least one model");
  std::vector<std::vector<double>> logits;
  for (const auto* m : models) {
    const Tensor l = classify(*m, forward_features(*m, volume));
    logits.emplace_back(l.data().begin(), l.data().end());
  }
  return ensemble_from_logits(logits);
}

F1Report macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                  std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("macro_f1: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0) throw ParameterError("macro_f1: num_classes must be positive");
  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t p = predictions[i], y = labels[i];
    if (p >= num_classes || y >= num_classes) throw ParameterError("macro_f1: class out of range");
    if (p == y) {
      tp[y] += 1;
    } else {
      fp[p] += 1;
      fn[y] += 1;
    }
  }
  F1Report r;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    r.per_class.push_back(denom > 0 ? 2 * tp[c] / denom : 0.0);
  }
  r.macro = std::accumulate(r.per_class.begin(), r.per_class.end(), 0.0) /
            static_cast<double>(num_classes);
  return r;
}

Tensor pseudo_label(const Model<float>& seg_model, const Tensor& volume) {
  if (volume.rank() != 3) throw ShapeError("pseudo_label: expected an (X, Y, Z) volume");
  const Extent3 size = spatial_extent(Shape{1, volume.dim(0), volume.dim(1), volume.dim(2)});
  const Tensor logits = segment(seg_model, forward_features(seg_model, volume), size);
  const Tensor prob = softmax_channels(logits);
  const std::size_t n = volume.size();
  Tensor mask(volume.dims());
  for (std::size_t i = 0; i < n; ++i) mask[i] = prob[n + i] > prob[i] ? 1.0f : 0.0f;
  return mask;
}

std::vector<Tensor> generate_pseudo_labels(const Model<float>& seg_model,
                                           const std::vector<Tensor>& volumes) {
  std::vector<Tensor> out;
  out.reserve(volumes.size());
  for (const auto& v : volumes) out.push_back(pseudo_label(seg_model, v));
  return out;
}

// ---------------------------------------------------------------------------

TrainResult train_toy(Model<float> model, const std::vector<TrainingCase>& cases,
                      const AugmentPlan& plan, const TrainHyper& hyper) {
  if (cases.empty()) throw ParameterError("train_toy: no training cases");
  if (hyper.batch == 0) throw ParameterError("train_toy: batch must be positive");
  if (!(hyper.lr >= 0) || !(hyper.momentum >= 0 && hyper.momentum < 1)) {
    throw ParameterError("train_toy: need lr >= 0 and 0 <= momentum < 1");
  }
  plan.validate();
  TrainResult out{std::move(model), {}, {}};
  const ModelConfig& cfg = out.model.config;
  std::vector<std::size_t> labels;
  bool any_mask = false;
  for (const auto& c : cases) {
    if (c.label >= cfg.num_classes) throw ParameterError("train_toy: label out of range");
    labels.push_back(c.label);
    any_mask = any_mask || c.pre_mask.has_value();
  }
  const bool use_cls = cfg.classification_head;
  const bool use_seg = cfg.segmentation_head && any_mask && hyper.lambda > 0;
  if (!use_cls && !use_seg) throw ConfigError("train_toy: nothing to train");
  const ClassWeights weights =
      use_cls ? class_weights(labels, cfg.num_classes) : ClassWeights{};

  out.ema = make_ema(out.model.params, hyper.ema_decay);
  std::map<std::string, Tensor> velocity;
  for (const auto& [name, p] : out.model.params) velocity.emplace(name, Tensor(p.dims()));

  std::vector<std::size_t> order(cases.size());
  std::size_t cursor = order.size(), epoch = 0;
  std::uint64_t draw = 0;
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    Tape<float> tape;
    const VarMap<float> vars = bind_parameters(tape, out.model.params);
    std::vector<Var<float>> rows;
    std::vector<std::size_t> batch_labels;
    std::vector<Var<float>> seg_terms;
    for (std::size_t j = 0; j < hyper.batch; ++j) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(StreamKey{hyper.seed, epoch++, 0x65706f6368});
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      const TrainingCase& c = cases[order[cursor++]];
      const AugmentedSample s =
          apply_pipeline(c.pre, c.base, plan, c.volume_id, draw++,
                         c.pre_mask ? &*c.pre_mask : nullptr,
                         c.base_mask ? &*c.base_mask : nullptr);
      const Extent3 ext{s.volume.dim(0), s.volume.dim(1), s.volume.dim(2)};
      const Var<float> input = tape.constant(s.volume.reshaped({1, ext[0], ext[1], ext[2]}));
      const auto feats = forward_features(cfg, vars, input);
      if (use_cls) {
        rows.push_back(classify(cfg, vars, feats));
        batch_labels.push_back(c.label);
      }
      if (use_seg && s.mask) seg_terms.push_back(seg_loss(segment(cfg, vars, feats, ext), *s.mask));
    }

    Var<float> loss;
    bool have_loss = false;
    if (use_cls) {
      loss = balanced_ce(stack_rows(rows), batch_labels, weights);
      have_loss = true;
    }
    if (!seg_terms.empty()) {
      Var<float> seg = seg_terms.front();
      for (std::size_t i = 1; i < seg_terms.size(); ++i) seg = add(seg, seg_terms[i]);
      seg = scale(seg, 1.0f / static_cast<float>(seg_terms.size()));
      loss = have_loss ? multitask_loss(loss, seg, hyper.lambda)
                       : scale(seg, static_cast<float>(hyper.lambda));
      have_loss = true;
    }
    if (!have_loss) {
      out.loss_trace.push_back(0.0);
      ema_update(out.ema, out.model.params);
      continue;
    }

    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw TrainingDiverged("loss became " + std::to_string(value) + " at step " +
                             std::to_string(step));
    }
    out.loss_trace.push_back(value);
    const Gradients<float> grads = tape.backward(loss);
    for (auto& [name, p] : out.model.params) {
      auto v = velocity.at(name).data();
      auto g = grads.at(name).data();
      auto w = p.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = static_cast<float>(hyper.momentum) * v[i] + g[i];
        w[i] -= static_cast<float>(hyper.lr) * v[i];
      }
    }
    ema_update(out.ema, out.model.params);
  }
  return out;
}

#define CT3D_INSTANTIATE_TRAIN(T)                                                          \
  template double balanced_ce(const BasicTensor<T>&, std::span<const std::size_t>,         \
                              const ClassWeights&);                                        \
  template double cross_entropy(const BasicTensor<T>&, std::span<const std::size_t>);      \
  template double seg_loss(const BasicTensor<T>&, const Tensor&);                          \
  template Var<T> balanced_ce(const Var<T>&, std::span<const std::size_t>,                 \
                              const ClassWeights&);                                        \
  template Var<T> seg_loss(const Var<T>&, const Tensor&);                                  \
  template Var<T> multitask_loss(const Var<T>&, const Var<T>&, double);                    \
  template EmaState<T> make_ema(const ParameterStore<T>&, double);                         \
  template void ema_update(EmaState<T>&, const ParameterStore<T>&);

CT3D_INSTANTIATE_TRAIN(float)
CT3D_INSTANTIATE_TRAIN(double)

}  // namespace ct3d
