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

#include "ct3d/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ct3d/random.hpp"

namespace ct3d {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(std::string name, Tensor value) {
  if (parameters_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  Node n;
  n.value = std::move(value);
  n.name = name;
  n.trainable = true;
  n.requires_grad = true;
  auto v = push(std::move(n));
  parameters_.emplace(std::move(name), v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor value, const std::vector<Var<T>>& parents,
                       BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ContractError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, Tensor grad) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  require_same_shape(grad.dims(), n.value.dims(), "gradient");
  if (!n.grad) {
    n.grad = std::move(grad);
  } else {
    auto& g = *n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
  }
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got extents " +
                        to_string(loss.value().dims()));
  }
  for (auto& n : nodes_) n.grad.reset();
  nodes_[loss.id()].grad = Tensor(loss.value().dims(), T(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
  Gradients<T> out;
  for (const auto& [name, id] : parameters_) {
    const Node& n = nodes_[id];
    out.emplace(name, n.grad ? *n.grad : Tensor(n.value.dims()));
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weights, const ConvParams& p) {
  auto& tape = input.tape();
  return tape.record(conv3d(input.value(), weights.value(), p), {input, weights},
                     [input, weights, p](Tape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(input)) {
                         t.accumulate(input, conv3d_grad_input(input.dims(),
                                                               weights.value(), g, p));
                       }
                       if (t.requires_grad(weights)) {
                         t.accumulate(weights, conv3d_grad_weights(input.value(),
                                                                   weights.dims(), g, p));
                       }
                     });
}

template <typename T>
Var<T> depthwise_conv3d(const Var<T>& input, const Var<T>& weights, const ConvParams& p) {
  auto& tape = input.tape();
  return tape.record(
      depthwise_conv3d(input.value(), weights.value(), p), {input, weights},
      [input, weights, p](Tape<T>& t, const BasicTensor<T>& g) {
        if (t.requires_grad(input)) {
          t.accumulate(input,
                       depthwise_conv3d_grad_input(input.dims(), weights.value(), g, p));
        }
        if (t.requires_grad(weights)) {
          t.accumulate(weights, depthwise_conv3d_grad_weights(input.value(),
                                                              weights.dims(), g, p));
        }
      });
}

template <typename T>
Var<T> pointwise(const Var<T>& input, const Var<T>& weights) {
  auto& tape = input.tape();
  return tape.record(pointwise(input.value(), weights.value()), {input, weights},
                     [input, weights](Tape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(input)) {
                         t.accumulate(input, pointwise_grad_input(weights.value(), g));
                       }
                       if (t.requires_grad(weights)) {
                         t.accumulate(weights, pointwise_grad_weights(input.value(), g));
                       }
                     });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& input, const Var<T>& bias) {
  auto& tape = input.tape();
  return tape.record(add_channel_bias(input.value(), bias.value()), {input, bias},
                     [input, bias](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(input, g);
                       if (t.requires_grad(bias)) t.accumulate(bias, sum_per_channel(g));
                     });
}

template <typename T>
Var<T> layer_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                  double eps) {
  auto& tape = input.tape();
  return tape.record(
      layer_norm(input.value(), gamma.value(), beta.value(), eps), {input, gamma, beta},
      [input, gamma, beta, eps](Tape<T>& t, const BasicTensor<T>& g) {
        auto grads = layer_norm_backward(input.value(), gamma.value(), eps, g);
        t.accumulate(input, std::move(grads.input));
        t.accumulate(gamma, std::move(grads.gamma));
        t.accumulate(beta, std::move(grads.beta));
      });
}

template <typename T>
Var<T> gelu(const Var<T>& input) {
  auto& tape = input.tape();
  return tape.record(gelu(input.value()), {input},
                     [input](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(input, gelu_backward(input.value(), g));
                     });
}

template <typename T>
Var<T> trilinear_resize(const Var<T>& input, const Extent3& target) {
  auto& tape = input.tape();
  return tape.record(trilinear_resize(input.value(), target), {input},
                     [input](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(input, trilinear_resize_backward(input.dims(), g));
                     });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& input) {
  auto& tape = input.tape();
  return tape.record(global_avg_pool(input.value()), {input},
                     [input](Tape<T>& t, const BasicTensor<T>& g) {
                       const auto& d = input.dims();
                       const std::size_t n = input.value().size() / d[0];
                       BasicTensor<T> gi(d);
                       for (std::size_t c = 0; c < d[0]; ++c) {
                         const T v = g[c] / static_cast<T>(n);
                         std::fill_n(gi.data().begin() + c * n, n, v);
                       }
                       t.accumulate(input, std::move(gi));
                     });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  std::vector<BasicTensor<T>> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  auto& tape = parts.front().tape();
  return tape.record(concat_channels(values), parts,
                     [parts](Tape<T>& t, const BasicTensor<T>& g) {
                       std::size_t offset = 0;
                       for (const auto& p : parts) {
                         const std::size_t n = p.value().size();
                         if (t.requires_grad(p)) {
                           std::vector<T> slice(g.data().begin() + offset,
                                                g.data().begin() + offset + n);
                           t.accumulate(p, BasicTensor<T>(p.dims(), std::move(slice)));
                         }
                         offset += n;
                       }
                     });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = a.tape();
  return tape.record(add(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(a, g);
                       t.accumulate(b, g);
                     });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.dims(), b.dims(), "mul");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b},
                         [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> ga = g, gb = g;
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] *= b.value()[i];
                             gb[i] *= a.value()[i];
                           }
                           t.accumulate(a, std::move(ga));
                           t.accumulate(b, std::move(gb));
                         });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a},
                         [a, factor](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> ga = g;
                           for (auto& v : ga.data()) v *= factor;
                           t.accumulate(a, std::move(ga));
                         });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  return a.tape().record(BasicTensor<T>::scalar(s), {a},
                         [a](Tape<T>& t, const BasicTensor<T>& g) {
                           t.accumulate(a, BasicTensor<T>(a.dims(), g[0]));
                         });
}

template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t k = rows.front().value().size();
  std::vector<T> data;
  data.reserve(rows.size() * k);
  for (const auto& r : rows) {
    if (r.value().rank() != 1 || r.value().size() != k) {
      throw ShapeError("stack_rows: rows must be rank 1 with equal length");
    }
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
  }
  return rows.front().tape().record(
      BasicTensor<T>({rows.size(), k}, std::move(data)), rows,
      [rows, k](Tape<T>& t, const BasicTensor<T>& g) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          std::vector<T> slice(g.data().begin() + i * k, g.data().begin() + (i + 1) * k);
          t.accumulate(rows[i], BasicTensor<T>({k}, std::move(slice)));
        }
      });
}

// ---------------------------------------------------------------------------

GradCheckReport finite_diff_check(const std::function<double(const ParamMap&)>& f,
                                  ParamMap params, const ParamMap& analytic, double step,
                                  const std::vector<ParamIndex>& samples, FdScheme scheme) {
  if (!(step > 0)) throw ParameterError("finite difference step must be positive");
  std::vector<ParamIndex> entries = samples;
  if (entries.empty()) {
    for (const auto& [name, t] : params) {
      for (std::size_t i = 0; i < t.size(); ++i) entries.push_back({name, i});
    }
  }
  GradCheckReport report;
  for (const auto& e : entries) {
    auto it = params.find(e.name);
    auto ait = analytic.find(e.name);
    if (it == params.end() || ait == analytic.end()) {
      throw ContractError("no parameter or gradient named '" + e.name + "'");
    }
    double& w = it->second[e.index];
    const double saved = w;
    auto central = [&](double h) {
      w = saved + h;
      const double up = f(params);
      w = saved - h;
      const double down = f(params);
      w = saved;
      return (up - down) / (2.0 * h);
    };
    const double fd = scheme == FdScheme::central
                          ? central(step)
                          : (4.0 * central(step / 2) - central(step)) / 3.0;
    const double a = ait->second[e.index];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    const double rel = std::abs(a - fd) / denom;
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = e;
    }
    ++report.checked;
  }
  return report;
}

GradCheckReport gradient_check(const LossBuilder& build, const ParamMap& params,
                               double step, const std::vector<ParamIndex>& samples,
                               FdScheme scheme) {
  auto evaluate = [&](const ParamMap& p, Gradients<double>* grads) {
    Tape<double> tape;
    std::map<std::string, Var<double>> vars;
    for (const auto& [name, t] : p) vars.emplace(name, tape.parameter(name, t));
    Var<double> loss = build(tape, vars);
    const double value = loss.value()[0];
    if (grads) *grads = tape.backward(loss);
    return value;
  };
  Gradients<double> analytic;
  evaluate(params, &analytic);
  return finite_diff_check([&](const ParamMap& p) { return evaluate(p, nullptr); },
                           params, analytic, step, samples, scheme);
}

std::vector<ParamIndex> sample_entries(const ParamMap& params, std::size_t count,
                                       std::uint64_t seed) {
  std::vector<ParamIndex> out;
  if (params.empty()) return out;
  Rng rng(seed);
  std::vector<const std::pair<const std::string, TensorD>*> order;
  for (const auto& kv : params) order.push_back(&kv);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& [name, t] = *order[i % order.size()];
    out.push_back({name, static_cast<std::size_t>(rng.uniform_int(0, t.size() - 1))});
  }
  return out;
}

#define CT3D_INSTANTIATE_AD(T)                                                         \
  template class Tape<T>;                                                              \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const ConvParams&);             \
  template Var<T> depthwise_conv3d(const Var<T>&, const Var<T>&, const ConvParams&);   \
  template Var<T> pointwise(const Var<T>&, const Var<T>&);                             \
  template Var<T> add_channel_bias(const Var<T>&, const Var<T>&);                      \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);     \
  template Var<T> gelu(const Var<T>&);                                                 \
  template Var<T> trilinear_resize(const Var<T>&, const Extent3&);                     \
  template Var<T> global_avg_pool(const Var<T>&);                                      \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                   \
  template Var<T> scale(const Var<T>&, T);                                             \
  template Var<T> sum(const Var<T>&);                                                  \
  template Var<T> stack_rows(const std::vector<Var<T>>&);

CT3D_INSTANTIATE_AD(float)
CT3D_INSTANTIATE_AD(double)

}  // namespace ct3d
