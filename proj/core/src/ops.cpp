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

#include "ct3d/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>

namespace ct3d {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& dims, std::size_t rank, const char* what) {
  if (dims.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + to_string(dims));
  }
}

Extent3 kernel_extent(const Shape& w) { return {w[2], w[3], w[4]}; }

// Source index along one axis for every output position, -1 when the tap
// lands in the zero padding.
std::vector<std::ptrdiff_t> tap_indices(std::size_t out_len, std::size_t in_len,
                                        std::size_t stride, std::size_t pad,
                                        std::size_t offset) {
  std::vector<std::ptrdiff_t> idx(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    auto s = static_cast<std::ptrdiff_t>(o * stride + offset) -
             static_cast<std::ptrdiff_t>(pad);
    idx[o] = (s >= 0 && s < static_cast<std::ptrdiff_t>(in_len)) ? s : -1;
  }
  return idx;
}

struct Taps {
  std::vector<std::ptrdiff_t> x, y, z;
};

Taps taps_for(const Extent3& in, const Extent3& out, const ConvParams& p,
              std::size_t a, std::size_t b, std::size_t c) {
  return {tap_indices(out[0], in[0], p.stride[0], p.padding[0], a),
          tap_indices(out[1], in[1], p.stride[1], p.padding[1], b),
          tap_indices(out[2], in[2], p.stride[2], p.padding[2], c)};
}

// cols(i, n) = input(i, tap(n)) or 0.
template <typename T>
void gather(const T* input, std::size_t channels, const Extent3& in,
            const Extent3& out, const Taps& t, T* cols) {
  const std::size_t in_n = in[0] * in[1] * in[2];
  const std::size_t out_n = out[0] * out[1] * out[2];
  for (std::size_t i = 0; i < channels; ++i) {
    const T* src = input + i * in_n;
    T* dst = cols + i * out_n;
    std::size_t n = 0;
    for (std::size_t x = 0; x < out[0]; ++x) {
      for (std::size_t y = 0; y < out[1]; ++y) {
        const bool row_ok = t.x[x] >= 0 && t.y[y] >= 0;
        const T* row = row_ok ? src + (t.x[x] * in[1] + t.y[y]) * in[2] : nullptr;
        for (std::size_t z = 0; z < out[2]; ++z, ++n) {
          dst[n] = (row_ok && t.z[z] >= 0) ? row[t.z[z]] : T(0);
        }
      }
    }
  }
}

template <typename T>
void scatter_add(const T* cols, std::size_t channels, const Extent3& in,
                 const Extent3& out, const Taps& t, T* grad_in) {
  const std::size_t in_n = in[0] * in[1] * in[2];
  const std::size_t out_n = out[0] * out[1] * out[2];
  for (std::size_t i = 0; i < channels; ++i) {
    const T* src = cols + i * out_n;
    T* dst = grad_in + i * in_n;
    std::size_t n = 0;
    for (std::size_t x = 0; x < out[0]; ++x) {
      for (std::size_t y = 0; y < out[1]; ++y) {
        if (t.x[x] < 0 || t.y[y] < 0) {
          n += out[2];
          continue;
        }
        T* row = dst + (t.x[x] * in[1] + t.y[y]) * in[2];
        for (std::size_t z = 0; z < out[2]; ++z, ++n) {
          if (t.z[z] >= 0) row[t.z[z]] += src[n];
        }
      }
    }
  }
}

// W[:, :, a, b, c] as a (C_in, C_out) matrix.
template <typename T>
RowMat<T> kernel_slice(const BasicTensor<T>& w, std::size_t k) {
  const auto& d = w.dims();
  const std::size_t taps = d[2] * d[3] * d[4];
  RowMat<T> m(d[0], d[1]);
  for (std::size_t i = 0; i < d[0]; ++i) {
    for (std::size_t o = 0; o < d[1]; ++o) m(i, o) = w[(i * d[1] + o) * taps + k];
  }
  return m;
}

void check_conv_shapes(const Shape& in, const Shape& w, const char* what) {
  require_rank(in, 4, what);
  require_rank(w, 5, what);
  if (in[0] != w[0]) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(in[0]) +
                     " channels but kernel expects " + std::to_string(w[0]));
  }
}

// Valid output range [lo, hi) along one axis for kernel tap `offset`.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_len, std::size_t in_len,
                                                std::size_t stride, std::size_t pad,
                                                std::size_t offset) {
  std::size_t lo = 0;
  if (pad > offset) lo = (pad - offset + stride - 1) / stride;
  // o * stride + offset - pad <= in_len - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in_len) - 1 +
                             static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(offset);
  if (top < 0) return {0, 0};
  std::size_t hi = std::min(out_len, static_cast<std::size_t>(top) / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Extent3 spatial_extent(const Shape& dims) {
  require_rank(dims, 4, "spatial_extent");
  return {dims[1], dims[2], dims[3]};
}

Extent3 conv_output_extent(const Extent3& in, const Extent3& kernel,
                           const ConvParams& p) {
  Extent3 out{};
  for (int a = 0; a < 3; ++a) {
    if (p.stride[a] == 0) throw ShapeError("conv stride must be positive");
    const std::size_t span = in[a] + 2 * p.padding[a];
    if (kernel[a] == 0 || span < kernel[a]) {
      throw ShapeError("kernel extent " + std::to_string(kernel[a]) +
                       " does not fit padded input extent " + std::to_string(span) +
                       " on axis " + std::to_string(a));
    }
    out[a] = (span - kernel[a]) / p.stride[a] + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense convolution: one gather + GEMM per kernel tap.

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const ConvParams& p) {
  check_conv_shapes(input.dims(), weights.dims(), "conv3d");
  const Extent3 in = spatial_extent(input.dims());
  const Extent3 k = kernel_extent(weights.dims());
  const Extent3 out = conv_output_extent(in, k, p);
  const std::size_t cin = weights.dim(0), cout = weights.dim(1);
  const std::size_t out_n = out[0] * out[1] * out[2];

  BasicTensor<T> result({cout, out[0], out[1], out[2]});
  MatMap<T> res(result.data().data(), cout, out_n);
  RowMat<T> cols(cin, out_n);
  std::size_t tap = 0;
  for (std::size_t a = 0; a < k[0]; ++a) {
    for (std::size_t b = 0; b < k[1]; ++b) {
      for (std::size_t c = 0; c < k[2]; ++c, ++tap) {
        const Taps t = taps_for(in, out, p, a, b, c);
        gather(input.data().data(), cin, in, out, t, cols.data());
        res.noalias() += kernel_slice(weights, tap).transpose() * cols;
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> conv3d_grad_input(const Shape& input_dims, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& grad_out, const ConvParams& p) {
  check_conv_shapes(input_dims, weights.dims(), "conv3d_grad_input");
  const Extent3 in = spatial_extent(input_dims);
  const Extent3 k = kernel_extent(weights.dims());
  const Extent3 out = conv_output_extent(in, k, p);
  const std::size_t cin = weights.dim(0), cout = weights.dim(1);
  const std::size_t out_n = out[0] * out[1] * out[2];
  require_same_shape(grad_out.dims(), Shape{cout, out[0], out[1], out[2]},
                     "conv3d_grad_input");

  BasicTensor<T> grad_in(input_dims);
  ConstMatMap<T> g(grad_out.data().data(), cout, out_n);
  RowMat<T> cols(cin, out_n);
  std::size_t tap = 0;
  for (std::size_t a = 0; a < k[0]; ++a) {
    for (std::size_t b = 0; b < k[1]; ++b) {
      for (std::size_t c = 0; c < k[2]; ++c, ++tap) {
        cols.noalias() = kernel_slice(weights, tap) * g;
        scatter_add(cols.data(), cin, in, out, taps_for(in, out, p, a, b, c),
                    grad_in.data().data());
      }
    }
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> conv3d_grad_weights(const BasicTensor<T>& input, const Shape& weight_dims,
                                   const BasicTensor<T>& grad_out, const ConvParams& p) {
  check_conv_shapes(input.dims(), weight_dims, "conv3d_grad_weights");
  const Extent3 in = spatial_extent(input.dims());
  const Extent3 k = kernel_extent(weight_dims);
  const Extent3 out = conv_output_extent(in, k, p);
  const std::size_t cin = weight_dims[0], cout = weight_dims[1];
  const std::size_t out_n = out[0] * out[1] * out[2];
  const std::size_t taps = k[0] * k[1] * k[2];
  require_same_shape(grad_out.dims(), Shape{cout, out[0], out[1], out[2]},
                     "conv3d_grad_weights");

  BasicTensor<T> grad_w(weight_dims);
  ConstMatMap<T> g(grad_out.data().data(), cout, out_n);
  RowMat<T> cols(cin, out_n);
  RowMat<T> slice(cin, cout);
  std::size_t tap = 0;
  for (std::size_t a = 0; a < k[0]; ++a) {
    for (std::size_t b = 0; b < k[1]; ++b) {
      for (std::size_t c = 0; c < k[2]; ++c, ++tap) {
        gather(input.data().data(), cin, in, out, taps_for(in, out, p, a, b, c),
               cols.data());
        slice.noalias() = cols * g.transpose();
        for (std::size_t i = 0; i < cin; ++i) {
          for (std::size_t o = 0; o < cout; ++o) {
            grad_w[(i * cout + o) * taps + tap] = slice(i, o);
          }
        }
      }
    }
  }
  return grad_w;
}

// ---------------------------------------------------------------------------
// Depthwise convolution: direct loops with the innermost axis contiguous.

namespace {

void check_depthwise_shapes(const Shape& in, const Shape& w, const char* what) {
  require_rank(in, 4, what);
  require_rank(w, 5, what);
  if (w[1] != 1 || in[0] != w[0]) {
    throw ShapeError(std::string(what) + ": input " + to_string(in) +
                     " incompatible with per-channel kernel " + to_string(w));
  }
}

// Calls fn(in_row, out_row, lo, hi, src_offset) for every (channel, tap,
// output row) so that out_row[z] pairs with in_row[z * sz + src_offset]
// for z in [lo, hi).
template <typename Fn>
void for_each_depthwise_row(std::size_t channels, const Extent3& in, const Extent3& out,
                            const Extent3& k, const ConvParams& p, Fn&& fn) {
  const std::size_t in_n = in[0] * in[1] * in[2];
  const std::size_t out_n = out[0] * out[1] * out[2];
  const std::size_t taps = k[0] * k[1] * k[2];
  for (std::size_t ch = 0; ch < channels; ++ch) {
    std::size_t tap = 0;
    for (std::size_t a = 0; a < k[0]; ++a) {
      const auto [xlo, xhi] = valid_range(out[0], in[0], p.stride[0], p.padding[0], a);
      for (std::size_t b = 0; b < k[1]; ++b) {
        const auto [ylo, yhi] = valid_range(out[1], in[1], p.stride[1], p.padding[1], b);
        for (std::size_t c = 0; c < k[2]; ++c, ++tap) {
          const auto [zlo, zhi] =
              valid_range(out[2], in[2], p.stride[2], p.padding[2], c);
          if (zlo >= zhi) continue;
          const std::ptrdiff_t zoff = static_cast<std::ptrdiff_t>(c) -
                                      static_cast<std::ptrdiff_t>(p.padding[2]);
          for (std::size_t x = xlo; x < xhi; ++x) {
            const std::size_t sx = x * p.stride[0] + a - p.padding[0];
            for (std::size_t y = ylo; y < yhi; ++y) {
              const std::size_t sy = y * p.stride[1] + b - p.padding[1];
              fn(ch, ch * taps + tap, ch * in_n + (sx * in[1] + sy) * in[2],
                 ch * out_n + (x * out[1] + y) * out[2], zlo, zhi, zoff);
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> depthwise_conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                const ConvParams& p) {
  check_depthwise_shapes(input.dims(), weights.dims(), "depthwise_conv3d");
  const Extent3 in = spatial_extent(input.dims());
  const Extent3 k = kernel_extent(weights.dims());
  const Extent3 out = conv_output_extent(in, k, p);
  const std::size_t channels = input.dim(0);
  BasicTensor<T> result({channels, out[0], out[1], out[2]});
  const T* src = input.data().data();
  T* dst = result.data().data();
  const std::size_t sz = p.stride[2];
  for_each_depthwise_row(channels, in, out, k, p,
                         [&](std::size_t, std::size_t widx, std::size_t in_row,
                             std::size_t out_row, std::size_t lo, std::size_t hi,
                             std::ptrdiff_t zoff) {
                           const T w = weights[widx];
                           const T* ir = src + in_row;
                           T* orow = dst + out_row;
                           for (std::size_t z = lo; z < hi; ++z) {
                             orow[z] += w * ir[static_cast<std::ptrdiff_t>(z * sz) + zoff];
                           }
                         });
  return result;
}

template <typename T>
BasicTensor<T> depthwise_conv3d_grad_input(const Shape& input_dims,
                                           const BasicTensor<T>& weights,
                                           const BasicTensor<T>& grad_out,
                                           const ConvParams& p) {
  check_depthwise_shapes(input_dims, weights.dims(), "depthwise_conv3d_grad_input");
  const Extent3 in = spatial_extent(input_dims);
  const Extent3 k = kernel_extent(weights.dims());
  const Extent3 out = conv_output_extent(in, k, p);
  require_same_shape(grad_out.dims(), Shape{input_dims[0], out[0], out[1], out[2]},
                     "depthwise_conv3d_grad_input");
  BasicTensor<T> grad_in(input_dims);
  const T* g = grad_out.data().data();
  T* dst = grad_in.data().data();
  const std::size_t sz = p.stride[2];
  for_each_depthwise_row(input_dims[0], in, out, k, p,
                         [&](std::size_t, std::size_t widx, std::size_t in_row,
                             std::size_t out_row, std::size_t lo, std::size_t hi,
                             std::ptrdiff_t zoff) {
                           const T w = weights[widx];
                           T* ir = dst + in_row;
                           const T* grow = g + out_row;
                           for (std::size_t z = lo; z < hi; ++z) {
                             ir[static_cast<std::ptrdiff_t>(z * sz) + zoff] += w * grow[z];
                           }
                         });
  return grad_in;
}

template <typename T>
BasicTensor<T> depthwise_conv3d_grad_weights(const BasicTensor<T>& input,
                                             const Shape& weight_dims,
                                             const BasicTensor<T>& grad_out,
                                             const ConvParams& p) {
  check_depthwise_shapes(input.dims(), weight_dims, "depthwise_conv3d_grad_weights");
  const Extent3 in = spatial_extent(input.dims());
  const Extent3 k = kernel_extent(weight_dims);
  const Extent3 out = conv_output_extent(in, k, p);
  require_same_shape(grad_out.dims(), Shape{input.dim(0), out[0], out[1], out[2]},
                     "depthwise_conv3d_grad_weights");
  BasicTensor<T> grad_w(weight_dims);
  const T* src = input.data().data();
  const T* g = grad_out.data().data();
  const std::size_t sz = p.stride[2];
  for_each_depthwise_row(input.dim(0), in, out, k, p,
                         [&](std::size_t, std::size_t widx, std::size_t in_row,
                             std::size_t out_row, std::size_t lo, std::size_t hi,
                             std::ptrdiff_t zoff) {
                           const T* ir = src + in_row;
                           const T* grow = g + out_row;
                           T acc = 0;
                           for (std::size_t z = lo; z < hi; ++z) {
                             acc += grow[z] * ir[static_cast<std::ptrdiff_t>(z * sz) + zoff];
                           }
                           grad_w[widx] += acc;
                         });
  return grad_w;
}

// ---------------------------------------------------------------------------
// Pointwise / bias.

template <typename T>
BasicTensor<T> pointwise(const BasicTensor<T>& input, const BasicTensor<T>& weights) {
  require_rank(weights.dims(), 2, "pointwise weights");
  if (input.dim(0) != weights.dim(1)) {
    throw ShapeError("pointwise: input " + to_string(input.dims()) +
                     " does not match weights " + to_string(weights.dims()));
  }
  const std::size_t cin = weights.dim(1), cout = weights.dim(0);
  const std::size_t n = input.size() / cin;
  Shape out_dims = input.dims();
  out_dims[0] = cout;
  BasicTensor<T> result(out_dims);
  MatMap<T>(result.data().data(), cout, n).noalias() =
      ConstMatMap<T>(weights.data().data(), cout, cin) *
      ConstMatMap<T>(input.data().data(), cin, n);
  return result;
}

template <typename T>
BasicTensor<T> pointwise_grad_input(const BasicTensor<T>& weights,
                                    const BasicTensor<T>& grad_out) {
  const std::size_t cin = weights.dim(1), cout = weights.dim(0);
  if (grad_out.dim(0) != cout) throw ShapeError("pointwise_grad_input: channel mismatch");
  const std::size_t n = grad_out.size() / cout;
  Shape in_dims = grad_out.dims();
  in_dims[0] = cin;
  BasicTensor<T> result(in_dims);
  MatMap<T>(result.data().data(), cin, n).noalias() =
      ConstMatMap<T>(weights.data().data(), cout, cin).transpose() *
      ConstMatMap<T>(grad_out.data().data(), cout, n);
  return result;
}

template <typename T>
BasicTensor<T> pointwise_grad_weights(const BasicTensor<T>& input,
                                      const BasicTensor<T>& grad_out) {
  const std::size_t cin = input.dim(0), cout = grad_out.dim(0);
  const std::size_t n = input.size() / cin;
  if (grad_out.size() / cout != n) throw ShapeError("pointwise_grad_weights: extent mismatch");
  BasicTensor<T> result({cout, cin});
  MatMap<T>(result.data().data(), cout, cin).noalias() =
      ConstMatMap<T>(grad_out.data().data(), cout, n) *
      ConstMatMap<T>(input.data().data(), cin, n).transpose();
  return result;
}

template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias) {
  if (bias.rank() != 1 || bias.size() != input.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + to_string(bias.dims()) +
                     " vs input " + to_string(input.dims()));
  }
  BasicTensor<T> result = input;
  const std::size_t n = input.size() / input.dim(0);
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    T* row = result.data().data() + c * n;
    for (std::size_t i = 0; i < n; ++i) row[i] += bias[c];
  }
  return result;
}

template <typename T>
BasicTensor<T> sum_per_channel(const BasicTensor<T>& t) {
  const std::size_t c = t.dim(0), n = t.size() / c;
  BasicTensor<T> result({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc = 0;
    const T* row = t.data().data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) acc += row[i];
    result[ch] = acc;
  }
  return result;
}

// ---------------------------------------------------------------------------
// LayerNorm over channels.

namespace {

template <typename T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> rstd;
};

template <typename T>
ChannelStats<T> channel_stats(const BasicTensor<T>& x, double eps) {
  const std::size_t c = x.dim(0), n = x.size() / c;
  ChannelStats<T> s{std::vector<T>(n, T(0)), std::vector<T>(n, T(0))};
  const T* d = x.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) s.mean[i] += d[ch * n + i];
  }
  for (auto& m : s.mean) m /= static_cast<T>(c);
  std::vector<T>& var = s.rstd;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) {
      const T dv = d[ch * n + i] - s.mean[i];
      var[i] += dv * dv;
    }
  }
  for (auto& v : var) v = T(1) / std::sqrt(v / static_cast<T>(c) + static_cast<T>(eps));
  return s;
}

template <typename T>
void check_norm_params(const BasicTensor<T>& x, const BasicTensor<T>& gamma) {
  if (gamma.rank() != 1 || gamma.size() != x.dim(0)) {
    throw ShapeError("layer_norm: affine parameters " + to_string(gamma.dims()) +
                     " vs input " + to_string(x.dims()));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps) {
  check_norm_params(input, gamma);
  check_norm_params(input, beta);
  const std::size_t c = input.dim(0), n = input.size() / c;
  const auto s = channel_stats(input, eps);
  BasicTensor<T> out(input.dims());
  const T* d = input.data().data();
  T* o = out.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) {
      o[ch * n + i] = gamma[ch] * ((d[ch * n + i] - s.mean[i]) * s.rstd[i]) + beta[ch];
    }
  }
  return out;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& input,
                                      const BasicTensor<T>& gamma, double eps,
                                      const BasicTensor<T>& grad_out) {
  check_norm_params(input, gamma);
  require_same_shape(input.dims(), grad_out.dims(), "layer_norm_backward");
  const std::size_t c = input.dim(0), n = input.size() / c;
  const auto s = channel_stats(input, eps);
  LayerNormGrads<T> g{BasicTensor<T>(input.dims()), BasicTensor<T>({c}),
                      BasicTensor<T>({c})};
  const T* d = input.data().data();
  const T* go = grad_out.data().data();
  std::vector<T> mean_dxhat(n, T(0)), mean_dxhat_xhat(n, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    T dg = 0, db = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (d[ch * n + i] - s.mean[i]) * s.rstd[i];
      const T dxhat = go[ch * n + i] * gamma[ch];
      mean_dxhat[i] += dxhat;
      mean_dxhat_xhat[i] += dxhat * xhat;
      dg += go[ch * n + i] * xhat;
      db += go[ch * n + i];
    }
    g.gamma[ch] = dg;
    g.beta[ch] = db;
  }
  for (std::size_t i = 0; i < n; ++i) {
    mean_dxhat[i] /= static_cast<T>(c);
    mean_dxhat_xhat[i] /= static_cast<T>(c);
  }
  T* gi = g.input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (d[ch * n + i] - s.mean[i]) * s.rstd[i];
      const T dxhat = go[ch * n + i] * gamma[ch];
      gi[ch * n + i] = s.rstd[i] * (dxhat - mean_dxhat[i] - xhat * mean_dxhat_xhat[i]);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations.

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.dims());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  return out;
}

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_same_shape(input.dims(), grad_out.dims(), "gelu_backward");
  BasicTensor<T> out(input.dims());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
    out[i] = grad_out[i] * (cdf + x * pdf);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input) {
  if (input.rank() > 2) throw ShapeError("softmax expects rank 1 or 2");
  const std::size_t k = input.dims().back();
  const std::size_t rows = input.size() / k;
  BasicTensor<T> out(input.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = input.data().data() + r * k;
    T* o = out.data().data() + r * k;
    const T mx = *std::max_element(in, in + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < k; ++j) o[j] /= sum;
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input) {
  const std::size_t c = input.dim(0), n = input.size() / c;
  BasicTensor<T> out(input.dims());
  const T* d = input.data().data();
  T* o = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t ch = 0; ch < c; ++ch) mx = std::max(mx, d[ch * n + i]);
    T sum = 0;
    for (std::size_t ch = 0; ch < c; ++ch) sum += (o[ch * n + i] = std::exp(d[ch * n + i] - mx));
    for (std::size_t ch = 0; ch < c; ++ch) o[ch * n + i] /= sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trilinear resize as three separable linear passes.

namespace {

struct LinearTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

LinearTaps linear_taps(std::size_t in_len, std::size_t out_len) {
  LinearTaps t;
  t.lo.resize(out_len);
  t.hi.resize(out_len);
  t.frac.resize(out_len);
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    double src = in_len == out_len ? static_cast<double>(j)
                                   : (static_cast<double>(j) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in_len - 1) i0 = in_len - 1;
    t.lo[j] = i0;
    t.hi[j] = std::min(i0 + 1, in_len - 1);
    t.frac[j] = src - static_cast<double>(i0);
  }
  return t;
}

// Resamples axis `axis` (1..3) of a rank-4 tensor to `out_len`.
template <typename T>
BasicTensor<T> linear_axis(const BasicTensor<T>& x, std::size_t axis, std::size_t out_len) {
  const Shape& d = x.dims();
  Shape od = d;
  od[axis] = out_len;
  if (d[axis] == out_len) return x;
  const LinearTaps t = linear_taps(d[axis], out_len);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= d[a];
  for (std::size_t a = axis + 1; a < d.size(); ++a) inner *= d[a];
  BasicTensor<T> out(od);
  const T* src = x.data().data();
  T* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const T* r0 = src + (o * d[axis] + t.lo[j]) * inner;
      const T* r1 = src + (o * d[axis] + t.hi[j]) * inner;
      const T f = static_cast<T>(t.frac[j]);
      T* w = dst + (o * out_len + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) w[i] = r0[i] + f * (r1[i] - r0[i]);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> linear_axis_backward(const BasicTensor<T>& g, std::size_t axis,
                                    std::size_t in_len) {
  const Shape& d = g.dims();
  const std::size_t out_len = d[axis];
  if (in_len == out_len) return g;
  Shape id = d;
  id[axis] = in_len;
  const LinearTaps t = linear_taps(in_len, out_len);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= d[a];
  for (std::size_t a = axis + 1; a < d.size(); ++a) inner *= d[a];
  BasicTensor<T> out(id);
  const T* src = g.data().data();
  T* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const T* gr = src + (o * out_len + j) * inner;
      T* r0 = dst + (o * in_len + t.lo[j]) * inner;
      T* r1 = dst + (o * in_len + t.hi[j]) * inner;
      const T f = static_cast<T>(t.frac[j]);
      for (std::size_t i = 0; i < inner; ++i) {
        r0[i] += (T(1) - f) * gr[i];
        r1[i] += f * gr[i];
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> trilinear_resize(const BasicTensor<T>& input, const Extent3& target) {
  require_rank(input.dims(), 4, "trilinear_resize");
  for (auto e : target) {
    if (e == 0) throw ShapeError("trilinear_resize: target extents must be positive");
  }
  auto t = linear_axis(input, 3, target[2]);
  t = linear_axis(t, 2, target[1]);
  return linear_axis(t, 1, target[0]);
}

template <typename T>
BasicTensor<T> trilinear_resize_backward(const Shape& input_dims,
                                         const BasicTensor<T>& grad_out) {
  require_rank(input_dims, 4, "trilinear_resize_backward");
  auto g = linear_axis_backward(grad_out, 1, input_dims[1]);
  g = linear_axis_backward(g, 2, input_dims[2]);
  return linear_axis_backward(g, 3, input_dims[3]);
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  auto s = sum_per_channel(input);
  const T n = static_cast<T>(input.size() / input.dim(0));
  for (auto& v : s.data()) v /= n;
  return s;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  Shape dims = parts.front().dims();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    Shape rest_a(p.dims().begin() + 1, p.dims().end());
    Shape rest_b(dims.begin() + 1, dims.end());
    require_same_shape(rest_a, rest_b, "concat_channels");
    channels += p.dim(0);
  }
  dims[0] = channels;
  std::vector<T> data;
  data.reserve(numel(dims));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return BasicTensor<T>(dims, std::move(data));
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.dims(), b.dims(), "add");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

#define CT3D_INSTANTIATE_OPS(T)                                                          \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                 const ConvParams&);                                      \
  template BasicTensor<T> conv3d_grad_input(const Shape&, const BasicTensor<T>&,          \
                                            const BasicTensor<T>&, const ConvParams&);    \
  template BasicTensor<T> conv3d_grad_weights(const BasicTensor<T>&, const Shape&,        \
                                              const BasicTensor<T>&, const ConvParams&);  \
  template BasicTensor<T> depthwise_conv3d(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                           const ConvParams&);                            \
  template BasicTensor<T> depthwise_conv3d_grad_input(                                    \
      const Shape&, const BasicTensor<T>&, const BasicTensor<T>&, const ConvParams&);     \
  template BasicTensor<T> depthwise_conv3d_grad_weights(                                  \
      const BasicTensor<T>&, const Shape&, const BasicTensor<T>&, const ConvParams&);     \
  template BasicTensor<T> pointwise(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> pointwise_grad_input(const BasicTensor<T>&,                     \
                                               const BasicTensor<T>&);                    \
  template BasicTensor<T> pointwise_grad_weights(const BasicTensor<T>&,                   \
                                                 const BasicTensor<T>&);                  \
  template BasicTensor<T> add_channel_bias(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> sum_per_channel(const BasicTensor<T>&);                         \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                     const BasicTensor<T>&, double);                      \
  template LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>&,                   \
                                                 const BasicTensor<T>&, double,           \
                                                 const BasicTensor<T>&);                  \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                    \
  template BasicTensor<T> gelu_backward(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                 \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                        \
  template BasicTensor<T> trilinear_resize(const BasicTensor<T>&, const Extent3&);        \
  template BasicTensor<T> trilinear_resize_backward(const Shape&, const BasicTensor<T>&); \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                         \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);

CT3D_INSTANTIATE_OPS(float)
CT3D_INSTANTIATE_OPS(double)

}  // namespace ct3d
