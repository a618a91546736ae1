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

#include "ct3d/resample.hpp"

#include <algorithm>
#include <cmath>

namespace ct3d {

namespace {

// Thomas solve of M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]) for
// the interior knots, with M[0] = M[n-1] = 0. The factorization depends only
// on n, so it is computed once per line length.
class SplineSolver {
 public:
  explicit SplineSolver(std::size_t n) : n_(n) {
    if (n_ < 3) return;
    const std::size_t k = n_ - 2;
    cprime_.resize(k);
    denom_.resize(k);
    double c = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      denom_[i] = 4.0 - (i ? c : 0.0);
      c = 1.0 / denom_[i];
      cprime_[i] = c;
    }
  }

  void solve(const double* y, double* m, std::vector<double>& scratch) const {
    std::fill(m, m + n_, 0.0);
    if (n_ < 3) return;
    const std::size_t k = n_ - 2;
    scratch.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
      scratch[i] = (rhs - (i ? scratch[i - 1] : 0.0)) / denom_[i];
    }
    m[k] = scratch[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) {
      scratch[i] -= cprime_[i] * scratch[i + 1];
      m[i + 1] = scratch[i];
    }
  }

 private:
  std::size_t n_;
  std::vector<double> cprime_;
  std::vector<double> denom_;
};

double eval_spline(const double* y, const double* m, std::size_t n, double t) {
  if (n == 1) return y[0];
  auto i = static_cast<std::size_t>(std::floor(t));
  if (i > n - 2) i = n - 2;
  const double u = t - static_cast<double>(i);
  const double v = 1.0 - u;
  return v * y[i] + u * y[i + 1] + ((v * v * v - v) * m[i] + (u * u * u - u) * m[i + 1]) / 6.0;
}

std::vector<double> sample_positions(std::size_t n, std::size_t m) {
  std::vector<double> t(m);
  if (m == 1) {
    t[0] = static_cast<double>(n - 1) / 2.0;
    return t;
  }
  for (std::size_t j = 0; j < m; ++j) {
    t[j] = static_cast<double>(j * (n - 1)) / static_cast<double>(m - 1);
  }
  return t;
}

// Resamples `count` lines of length n, stride `stride` between consecutive
// samples of one line, to length m.
struct LinePlan {
  std::size_t n, m;
  SplineSolver solver;
  std::vector<double> positions;

  LinePlan(std::size_t n_, std::size_t m_)
      : n(n_), m(m_), solver(n_), positions(sample_positions(n_, m_)) {}

  void apply(const double* y, double* out, std::vector<double>& msec,
             std::vector<double>& scratch) const {
    msec.resize(n);
    solver.solve(y, msec.data(), scratch);
    for (std::size_t j = 0; j < m; ++j) out[j] = eval_spline(y, msec.data(), n, positions[j]);
  }
};

// Resample axis `axis` of a row-major rank-3 double buffer.
std::vector<double> resample_axis(const std::vector<double>& in, const Extent3& dims,
                                  std::size_t axis, std::size_t target) {
  Extent3 od = dims;
  od[axis] = target;
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
  for (std::size_t a = axis + 1; a < 3; ++a) inner *= dims[a];
  const std::size_t n = dims[axis];
  const LinePlan plan(n, target);
  std::vector<double> out(od[0] * od[1] * od[2]);
  std::vector<double> line(n), res(target), msec, scratch;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const double* src = in.data() + o * n * inner + i;
      for (std::size_t k = 0; k < n; ++k) line[k] = src[k * inner];
      plan.apply(line.data(), res.data(), msec, scratch);
      double* dst = out.data() + o * target * inner + i;
      for (std::size_t k = 0; k < target; ++k) dst[k * inner] = res[k];
    }
  }
  return out;
}

}  // namespace

NaturalSpline::NaturalSpline(std::span<const double> samples)
    : y_(samples.begin(), samples.end()), m_(samples.size(), 0.0) {
  if (y_.empty()) throw ParameterError("spline needs at least one sample");
  std::vector<double> scratch;
  SplineSolver(y_.size()).solve(y_.data(), m_.data(), scratch);
}

double NaturalSpline::operator()(double t) const {
  return eval_spline(y_.data(), m_.data(), y_.size(), t);
}

double NaturalSpline::residual() const {
  double worst = std::abs(m_.front()) + std::abs(m_.back());
  for (std::size_t i = 1; i + 1 < y_.size(); ++i) {
    const double lhs = m_[i - 1] + 4.0 * m_[i] + m_[i + 1];
    const double rhs = 6.0 * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

std::vector<double> spline_resample_1d(std::span<const double> signal,
                                       std::size_t target_len) {
  if (target_len == 0) throw ParameterError("spline target length must be positive");
  if (signal.empty()) throw ParameterError("cannot resample an empty signal");
  const LinePlan plan(signal.size(), target_len);
  std::vector<double> out(target_len), msec, scratch;
  plan.apply(signal.data(), out.data(), msec, scratch);
  return out;
}

template <typename T>
BasicTensor<T> spline_resample_volume(const BasicTensor<T>& volume, const Extent3& target) {
  if (volume.rank() != 3) {
    throw ShapeError("spline_resample_volume expects an (X, Y, Z) volume, got " +
                     to_string(volume.dims()));
  }
  for (auto e : target) {
    if (e == 0) throw ParameterError("resample target extents must be positive");
  }
  Extent3 dims{volume.dim(0), volume.dim(1), volume.dim(2)};
  std::vector<double> buf(volume.data().begin(), volume.data().end());
  for (std::size_t axis : {2u, 1u, 0u}) {
    if (dims[axis] == target[axis]) continue;
    buf = resample_axis(buf, dims, axis, target[axis]);
    dims[axis] = target[axis];
  }
  return BasicTensor<T>({target[0], target[1], target[2]},
                        std::vector<T>(buf.begin(), buf.end()));
}

template BasicTensor<float> spline_resample_volume(const BasicTensor<float>&, const Extent3&);
template BasicTensor<double> spline_resample_volume(const BasicTensor<double>&,
                                                    const Extent3&);

}  // namespace ct3d
