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

#include <vector>

#include "ct3d/tensor.hpp"

// Dense volumetric primitives. Feature maps are channel-first (C, X, Y, Z);
// spatial kernels are stored as (C_in, C_out, H, W, D) and applied as
// cross-correlation. Each forward op is paired with the kernels that compute
// its vector-Jacobian products; autodiff.hpp wires them into the tape.

namespace ct3d {

struct ConvParams {
  Extent3 stride{1, 1, 1};
  Extent3 padding{0, 0, 0};
};

/// floor((n + 2p - k) / s) + 1 per axis. Throws ShapeError when a kernel does
/// not fit at least once.
Extent3 conv_output_extent(const Extent3& in, const Extent3& kernel,
                           const ConvParams& p);

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const ConvParams& p = {});
template <typename T>
BasicTensor<T> conv3d_grad_input(const Shape& input_dims, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& grad_out, const ConvParams& p);
template <typename T>
BasicTensor<T> conv3d_grad_weights(const BasicTensor<T>& input, const Shape& weight_dims,
                                   const BasicTensor<T>& grad_out, const ConvParams& p);

/// Weights (C, 1, H, W, D); channel c only sees kernel c.
template <typename T>
BasicTensor<T> depthwise_conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                const ConvParams& p = {});
template <typename T>
BasicTensor<T> depthwise_conv3d_grad_input(const Shape& input_dims,
                                           const BasicTensor<T>& weights,
                                           const BasicTensor<T>& grad_out,
                                           const ConvParams& p);
template <typename T>
BasicTensor<T> depthwise_conv3d_grad_weights(const BasicTensor<T>& input,
                                             const Shape& weight_dims,
                                             const BasicTensor<T>& grad_out,
                                             const ConvParams& p);

/// Channel mixing with a (C_out, C_in) matrix at every spatial location.
/// A rank-1 input (C_in) makes this a plain matrix-vector product.
template <typename T>
BasicTensor<T> pointwise(const BasicTensor<T>& input, const BasicTensor<T>& weights);
template <typename T>
BasicTensor<T> pointwise_grad_input(const BasicTensor<T>& weights,
                                    const BasicTensor<T>& grad_out);
template <typename T>
BasicTensor<T> pointwise_grad_weights(const BasicTensor<T>& input,
                                      const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias);
/// Sum over every axis but the first.
template <typename T>
BasicTensor<T> sum_per_channel(const BasicTensor<T>& t);

/// Normalizes over the channel axis independently at every spatial location.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps);

template <typename T>
struct LayerNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};
template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& input,
                                      const BasicTensor<T>& gamma, double eps,
                                      const BasicTensor<T>& grad_out);

/// Exact form x * Phi(x).
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

/// Rank 1: softmax over all entries. Rank 2 (N, K): softmax of every row.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input);

/// Softmax over the channel axis of a (C, ...) tensor.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input);

/// Align-corners-false trilinear sampling of a (C, X, Y, Z) tensor, with
/// source coordinates clamped at the low edge.
template <typename T>
BasicTensor<T> trilinear_resize(const BasicTensor<T>& input, const Extent3& target);
template <typename T>
BasicTensor<T> trilinear_resize_backward(const Shape& input_dims,
                                         const BasicTensor<T>& grad_out);

/// Mean over all spatial positions, (C, ...) -> (C).
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// (C, X, Y, Z) spatial extents of a rank-4 tensor.
Extent3 spatial_extent(const Shape& dims);

}  // namespace ct3d
