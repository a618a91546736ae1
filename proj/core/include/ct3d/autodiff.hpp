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
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ct3d/ops.hpp"
#include "ct3d/tensor.hpp"

namespace ct3d {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const BasicTensor<T>& value() const;
  const Shape& dims() const { return value().dims(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
using Gradients = std::map<std::string, BasicTensor<T>>;

/// Append-only computation record. Nodes are created in evaluation order, so
/// walking the tape backwards from the loss is a valid reverse topological
/// order and visits every node once.
///
/// A tape belongs to one thread for the duration of a training step.
template <typename T>
class Tape {
 public:
  using Tensor = BasicTensor<T>;
  /// Receives the gradient flowing into the node and accumulates the
  /// contributions to its parents through `accumulate`.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf. Names must be unique on a tape.
  Var<T> parameter(std::string name, Tensor value);
  Var<T> constant(Tensor value);
  Var<T> record(Tensor value, const std::vector<Var<T>>& parents, BackwardFn backward);

  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(const Var<T>& v, Tensor grad);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Returns a gradient for every
  /// parameter on the tape; parameters the loss does not depend on get zeros.
  /// Throws ContractError when the loss has more than one element.
  Gradients<T> backward(const Var<T>& loss);

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    std::string name;
    bool trainable = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Differentiable counterparts of the tensor ops. Same names as ops.hpp so
// model code can be written once for tensors and tape variables.

template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weights, const ConvParams& p = {});
template <typename T>
Var<T> depthwise_conv3d(const Var<T>& input, const Var<T>& weights, const ConvParams& p = {});
template <typename T>
Var<T> pointwise(const Var<T>& input, const Var<T>& weights);
template <typename T>
Var<T> add_channel_bias(const Var<T>& input, const Var<T>& bias);
template <typename T>
Var<T> layer_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, double eps);
template <typename T>
Var<T> gelu(const Var<T>& input);
template <typename T>
Var<T> trilinear_resize(const Var<T>& input, const Extent3& target);
template <typename T>
Var<T> global_avg_pool(const Var<T>& input);
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
/// Elementwise product of equally shaped operands.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
/// Sum of all elements, as a scalar.
template <typename T>
Var<T> sum(const Var<T>& a);
/// Stacks N rank-1 tensors of length K into (N, K).
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows);

// ---------------------------------------------------------------------------
// Finite-difference verification.

using ParamMap = std::map<std::string, TensorD>;

struct ParamIndex {
  std::string name;
  std::size_t index = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  ParamIndex worst;
};

/// `richardson` combines central differences at h and h/2 as
/// (4 D(h/2) - D(h)) / 3, which cancels the h^2 error term. Useful where
/// LayerNorm over a low-variance input makes the loss sharply curved.
enum class FdScheme { central, richardson };

/// Compares `analytic` against finite differences of `f` with step `step`
/// at the listed entries (all entries when `samples` is empty). The relative
/// error of one entry is |a - fd| / max(|a|, |fd|, 1e-8).
GradCheckReport finite_diff_check(const std::function<double(const ParamMap&)>& f,
                                  ParamMap params, const ParamMap& analytic, double step,
                                  const std::vector<ParamIndex>& samples = {},
                                  FdScheme scheme = FdScheme::central);

using LossBuilder =
    std::function<Var<double>(Tape<double>&, const std::map<std::string, Var<double>>&)>;

/// Builds the loss on a fresh tape with `params` as leaves, differentiates it
/// and checks the result with `finite_diff_check`.
GradCheckReport gradient_check(const LossBuilder& build, const ParamMap& params,
                               double step, const std::vector<ParamIndex>& samples = {},
                               FdScheme scheme = FdScheme::central);

/// `count` random entries, cycling through the tensors so each one is
/// sampled at least once when count >= params.size().
std::vector<ParamIndex> sample_entries(const ParamMap& params, std::size_t count,
                                       std::uint64_t seed);

}  // namespace ct3d
