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

#include "ct3d/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ct3d {

namespace {

enum StreamOp : std::uint64_t {
  kDecisions = 0,
  kCrop,
  kFlip,
  kOrient,
  kRotate,
  kElastic,
  kBlur,
  kNoise,
};

void require_volume(const Tensor& v, const char* what) {
  if (v.rank() != 3) {
    throw ShapeError(std::string(what) + " expects an (X, Y, Z) volume, got " +
                     to_string(v.dims()));
  }
}

Extent3 extents_of(const Tensor& v) { return {v.dim(0), v.dim(1), v.dim(2)}; }

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(std::string(name) + " must lie in [0, 1]");
  }
}

void check_range(double lo, double hi, const char* name, bool allow_zero = false) {
  if (!(lo <= hi) || (allow_zero ? lo < 0 : lo <= 0)) {
    throw ParameterError(std::string(name) + " range is invalid");
  }
}

// Per output index: the contiguous source band and the folded weights.
struct Band {
  std::size_t lo = 0;
  std::vector<double> w;
};

std::vector<Band> folded_bands(std::size_t n, const std::vector<double>& kernel) {
  const auto r = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<Band> bands(n);
  std::vector<double> dense(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dense.begin(), dense.end(), 0.0);
    std::size_t lo = n, hi = 0;
    for (std::ptrdiff_t t = -r; t <= r; ++t) {
      const std::size_t j = reflect_index(static_cast<std::ptrdiff_t>(i) + t, n);
      dense[j] += kernel[static_cast<std::size_t>(t + r)];
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
    bands[i].lo = lo;
    bands[i].w.assign(dense.begin() + lo, dense.begin() + hi + 1);
  }
  return bands;
}

void filter_axis(std::vector<double>& buf, const Extent3& dims, std::size_t axis,
                 const std::vector<double>& kernel) {
  const std::size_t n = dims[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
  for (std::size_t a = axis + 1; a < 3; ++a) inner *= dims[a];
  const auto bands = folded_bands(n, kernel);
  std::vector<double> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double* base = buf.data() + o * n * inner + i;
      for (std::size_t k = 0; k < n; ++k) line[k] = base[k * inner];
      for (std::size_t k = 0; k < n; ++k) {
        const Band& b = bands[k];
        double acc = 0.0;
        for (std::size_t t = 0; t < b.w.size(); ++t) acc += b.w[t] * line[b.lo + t];
        base[k * inner] = acc;
      }
    }
  }
}

float binarize(float v) { return v >= 0.5f ? 1.0f : 0.0f; }

Tensor binarized(Tensor t) {
  for (auto& v : t.data()) v = binarize(v);
  return t;
}

// Trilinear sample with coordinates clamped to the volume.
float sample_clamped(const Tensor& v, double x, double y, double z) {
  const Extent3 d = extents_of(v);
  auto axis = [](double c, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(c));
    i1 = std::min(i0 + 1, n - 1);
    f = c - static_cast<double>(i0);
  };
  std::size_t x0, x1, y0, y1, z0, z1;
  double fx, fy, fz;
  axis(x, d[0], x0, x1, fx);
  axis(y, d[1], y0, y1, fy);
  axis(z, d[2], z0, z1, fz);
  auto lerp = [](double a, double b, double f) { return a + f * (b - a); };
  const double c00 = lerp(v.at(x0, y0, z0), v.at(x0, y0, z1), fz);
  const double c01 = lerp(v.at(x0, y1, z0), v.at(x0, y1, z1), fz);
  const double c10 = lerp(v.at(x1, y0, z0), v.at(x1, y0, z1), fz);
  const double c11 = lerp(v.at(x1, y1, z0), v.at(x1, y1, z1), fz);
  return static_cast<float>(lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fx));
}

}  // namespace

void AugmentPlan::validate() const {
  check_prob(flip_prob, "flip_prob");
  check_prob(noise_prob, "noise_prob");
  check_prob(blur_prob, "blur_prob");
  check_prob(rotate_prob, "rotate_prob");
  check_prob(elastic_prob, "elastic_prob");
  check_prob(orient_prob, "orient_prob");
  check_prob(crop_prob, "crop_prob");
  check_range(noise_sigma_min, noise_sigma_max, "noise sigma", true);
  check_range(blur_sigma_min, blur_sigma_max, "blur sigma");
  check_range(elastic_alpha_min, elastic_alpha_max, "elastic alpha", true);
  if (!(elastic_sigma > 0)) throw ParameterError("elastic_sigma must be positive");
  if (!(rotate_max_deg >= 0)) throw ParameterError("rotate_max_deg must be non-negative");
  if (crop_size == 0 || crop_size > pre_size) {
    throw ParameterError("crop_size must lie in [1, pre_size]");
  }
}

AugmentPlan AugmentPlan::identity(std::size_t pre_size, std::size_t crop_size) {
  AugmentPlan p;
  p.flip_prob = p.noise_prob = p.blur_prob = p.rotate_prob = 0.0;
  p.elastic_prob = p.orient_prob = p.crop_prob = 0.0;
  p.pre_size = pre_size;
  p.crop_size = crop_size;
  return p;
}

Tensor normalize_intensity(const Tensor& hu, double lo, double hi) {
  if (!(hi > lo)) throw ParameterError("intensity window must have hi > lo");
  Tensor out(hu.dims());
  for (std::size_t i = 0; i < hu.size(); ++i) {
    const double v = std::clamp(static_cast<double>(hu[i]), lo, hi);
    out[i] = static_cast<float>((v - lo) / (hi - lo));
  }
  return out;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t j = i % period;
  if (j < 0) j += period;
  if (j >= static_cast<std::ptrdiff_t>(n)) j = period - 1 - j;
  return static_cast<std::size_t>(j);
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0)) throw ParameterError("blur sigma must be positive");
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (std::ptrdiff_t t = -r; t <= r; ++t) {
    const double v = std::exp(-0.5 * (t / sigma) * (t / sigma));
    k[static_cast<std::size_t>(t + r)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

Tensor flip(const Tensor& volume, const std::array<bool, 3>& axes) {
  require_volume(volume, "flip");
  const Extent3 d = extents_of(volume);
  Tensor out(volume.dims());
  for (std::size_t x = 0; x < d[0]; ++x) {
    const std::size_t sx = axes[0] ? d[0] - 1 - x : x;
    for (std::size_t y = 0; y < d[1]; ++y) {
      const std::size_t sy = axes[1] ? d[1] - 1 - y : y;
      for (std::size_t z = 0; z < d[2]; ++z) {
        out.at(x, y, z) = volume.at(sx, sy, axes[2] ? d[2] - 1 - z : z);
      }
    }
  }
  return out;
}

Tensor random_flip(const Tensor& volume, Rng& rng, double prob) {
  std::array<bool, 3> axes{};
  for (auto& a : axes) a = rng.bernoulli(prob);
  return flip(volume, axes);
}

Tensor add_noise_with_sigma(const Tensor& volume, double sigma, Rng& rng) {
  if (sigma < 0) throw ParameterError("noise sigma must be non-negative");
  Tensor out = volume;
  if (sigma == 0.0) return out;
  for (auto& v : out.data()) v = static_cast<float>(v + rng.normal(0.0, sigma));
  return out;
}

Tensor add_noise(const Tensor& volume, Rng& rng, double sigma_min, double sigma_max) {
  const double sigma = rng.uniform(sigma_min, sigma_max);
  return add_noise_with_sigma(volume, sigma, rng);
}

Tensor gaussian_blur(const Tensor& volume, double sigma) {
  require_volume(volume, "gaussian_blur");
  const auto kernel = gaussian_kernel_1d(sigma);
  const Extent3 d = extents_of(volume);
  std::vector<double> buf(volume.data().begin(), volume.data().end());
  for (std::size_t axis = 0; axis < 3; ++axis) filter_axis(buf, d, axis, kernel);
  return Tensor(volume.dims(), std::vector<float>(buf.begin(), buf.end()));
}

Tensor rotate_transversal(const Tensor& volume, double degrees, std::optional<float> fill) {
  require_volume(volume, "rotate_transversal");
  const Extent3 d = extents_of(volume);
  const float background =
      fill.value_or(*std::min_element(volume.data().begin(), volume.data().end()));
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = (static_cast<double>(d[0]) - 1) / 2;
  const double cy = (static_cast<double>(d[1]) - 1) / 2;
  const double tol = 1e-9;
  const double xmax = static_cast<double>(d[0] - 1), ymax = static_cast<double>(d[1] - 1);
  Tensor out(volume.dims());
  for (std::size_t x = 0; x < d[0]; ++x) {
    for (std::size_t y = 0; y < d[1]; ++y) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      double sx = cx + c * dx + s * dy;
      double sy = cy - s * dx + c * dy;
      if (sx < -tol || sy < -tol || sx > xmax + tol || sy > ymax + tol) {
        for (std::size_t z = 0; z < d[2]; ++z) out.at(x, y, z) = background;
        continue;
      }
      sx = std::clamp(sx, 0.0, xmax);
      sy = std::clamp(sy, 0.0, ymax);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const auto y0 = static_cast<std::size_t>(std::floor(sy));
      const std::size_t x1 = std::min(x0 + 1, d[0] - 1), y1 = std::min(y0 + 1, d[1] - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t z = 0; z < d[2]; ++z) {
        const double a = volume.at(x0, y0, z), b = volume.at(x0, y1, z);
        const double e = volume.at(x1, y0, z), f = volume.at(x1, y1, z);
        const double top = a + fy * (b - a), bottom = e + fy * (f - e);
        out.at(x, y, z) = static_cast<float>(top + fx * (bottom - top));
      }
    }
  }
  return out;
}

DeformField make_deform_field(const Extent3& extents, double sigma, Rng& rng) {
  auto component = [&] {
    Tensor t({extents[0], extents[1], extents[2]});
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return gaussian_blur(t, sigma);
  };
  DeformField f;
  f.dx = component();
  f.dy = component();
  f.dz = component();
  return f;
}

Tensor apply_deformation(const Tensor& volume, const DeformField& field, double alpha) {
  require_volume(volume, "apply_deformation");
  require_same_shape(field.dx.dims(), volume.dims(), "deformation field");
  require_same_shape(field.dy.dims(), volume.dims(), "deformation field");
  require_same_shape(field.dz.dims(), volume.dims(), "deformation field");
  if (alpha == 0.0) return volume;
  const Extent3 d = extents_of(volume);
  Tensor out(volume.dims());
  std::size_t i = 0;
  for (std::size_t x = 0; x < d[0]; ++x) {
    for (std::size_t y = 0; y < d[1]; ++y) {
      for (std::size_t z = 0; z < d[2]; ++z, ++i) {
        out[i] = sample_clamped(volume, static_cast<double>(x) + alpha * field.dx[i],
                                static_cast<double>(y) + alpha * field.dy[i],
                                static_cast<double>(z) + alpha * field.dz[i]);
      }
    }
  }
  return out;
}

Tensor elastic_deform(const Tensor& volume, Rng& rng, double sigma, double alpha_min,
                      double alpha_max) {
  require_volume(volume, "elastic_deform");
  const double alpha = rng.uniform(alpha_min, alpha_max);
  return apply_deformation(volume, make_deform_field(extents_of(volume), sigma, rng), alpha);
}

Tensor rot90(const Tensor& volume, int axis, int turns) {
  require_volume(volume, "rot90");
  if (axis < 0 || axis > 2) throw ParameterError("rot90 axis must be 0, 1 or 2");
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return volume;
  const std::size_t p = axis == 0 ? 1 : 0;
  const std::size_t q = axis == 2 ? 1 : 2;
  Tensor cur = volume;
  for (int t = 0; t < turns; ++t) {
    Extent3 cd = extents_of(cur);
    Extent3 od = cd;
    std::swap(od[p], od[q]);
    Tensor next({od[0], od[1], od[2]});
    // next[.. a@p .. b@q ..] = cur[.. b@p .. (n_q - 1 - a)@q ..]
    std::array<std::size_t, 3> o{}, s{};
    for (o[0] = 0; o[0] < od[0]; ++o[0]) {
      for (o[1] = 0; o[1] < od[1]; ++o[1]) {
        for (o[2] = 0; o[2] < od[2]; ++o[2]) {
          s = o;
          s[p] = o[q];
          s[q] = cd[q] - 1 - o[p];
          next.at(o[0], o[1], o[2]) = cur.at(s[0], s[1], s[2]);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Tensor orient90(const Tensor& volume, const std::array<int, 3>& turns) {
  require_volume(volume, "orient90");
  const bool any = std::any_of(turns.begin(), turns.end(), [](int t) { return t % 4 != 0; });
  if (!any) return volume;
  if (volume.dim(0) != volume.dim(1) || volume.dim(1) != volume.dim(2)) {
    throw ShapeError("orient90 needs a cubic volume, got " + to_string(volume.dims()));
  }
  Tensor out = volume;
  for (int axis = 0; axis < 3; ++axis) out = rot90(out, axis, turns[axis]);
  return out;
}

Tensor random_orient90(const Tensor& volume, Rng& rng, double prob) {
  if (!rng.bernoulli(prob)) return volume;
  std::array<int, 3> turns{};
  for (auto& t : turns) t = static_cast<int>(rng.uniform_int(0, 3));
  return orient90(volume, turns);
}

Tensor crop(const Tensor& volume, const Extent3& offset, std::size_t size) {
  require_volume(volume, "crop");
  for (int a = 0; a < 3; ++a) {
    if (offset[a] + size > volume.dim(a)) {
      throw ShapeError("crop window exceeds volume " + to_string(volume.dims()));
    }
  }
  Tensor out({size, size, size});
  for (std::size_t x = 0; x < size; ++x) {
    for (std::size_t y = 0; y < size; ++y) {
      const float* src = &volume.at(x + offset[0], y + offset[1], offset[2]);
      std::copy(src, src + size, &out.at(x, y, 0));
    }
  }
  return out;
}

Tensor random_crop(const Tensor& volume, Rng& rng, std::size_t pre_size,
                   std::size_t crop_size) {
  require_volume(volume, "random_crop");
  if (volume.dims() != Shape{pre_size, pre_size, pre_size}) {
    throw ShapeError("random_crop expects a " + std::to_string(pre_size) +
                     "^3 volume, got " + to_string(volume.dims()));
  }
  Extent3 off{};
  for (auto& o : off) o = rng.uniform_int(0, pre_size - crop_size);
  return crop(volume, off, crop_size);
}

AugmentedSample apply_pipeline(const Tensor& pre, const Tensor& base, const AugmentPlan& plan,
                               std::uint64_t volume_id, std::uint64_t draw,
                               const Tensor* pre_mask, const Tensor* base_mask) {
  plan.validate();
  const Shape pre_dims{plan.pre_size, plan.pre_size, plan.pre_size};
  const Shape base_dims{plan.crop_size, plan.crop_size, plan.crop_size};
  require_same_shape(pre.dims(), pre_dims, "pipeline pre-crop volume");
  require_same_shape(base.dims(), base_dims, "pipeline base volume");
  if ((pre_mask == nullptr) != (base_mask == nullptr)) {
    throw ContractError("masks must be given for both resolutions or neither");
  }
  if (pre_mask) {
    require_same_shape(pre_mask->dims(), pre_dims, "pipeline pre-crop mask");
    require_same_shape(base_mask->dims(), base_dims, "pipeline base mask");
  }

  const std::uint64_t stream = mix64(volume_id) ^ draw;
  auto rng_for = [&](StreamOp op) { return Rng(StreamKey{plan.seed, stream, op}); };

  // Branch decisions come from their own stream in a fixed order, so the
  // parameters drawn by one step never shift the coin flips of another.
  Rng decide = rng_for(kDecisions);
  AugmentTrace trace;
  trace.cropped = decide.bernoulli(plan.crop_prob);
  for (auto& f : trace.flipped) f = decide.bernoulli(plan.flip_prob);
  trace.oriented = decide.bernoulli(plan.orient_prob);
  trace.rotated = decide.bernoulli(plan.rotate_prob);
  trace.elastic = decide.bernoulli(plan.elastic_prob);
  trace.blurred = decide.bernoulli(plan.blur_prob);
  trace.noised = decide.bernoulli(plan.noise_prob);

  AugmentedSample out;
  std::optional<Tensor> mask;
  if (trace.cropped) {
    Rng r = rng_for(kCrop);
    for (auto& o : trace.crop_offset) o = r.uniform_int(0, plan.pre_size - plan.crop_size);
    out.volume = crop(pre, trace.crop_offset, plan.crop_size);
    if (pre_mask) mask = crop(*pre_mask, trace.crop_offset, plan.crop_size);
  } else {
    out.volume = base;
    if (base_mask) mask = *base_mask;
  }

  out.volume = flip(out.volume, trace.flipped);
  if (mask) mask = flip(*mask, trace.flipped);

  if (trace.oriented) {
    Rng r = rng_for(kOrient);
    for (auto& t : trace.turns) t = static_cast<int>(r.uniform_int(0, 3));
    out.volume = orient90(out.volume, trace.turns);
    if (mask) mask = orient90(*mask, trace.turns);
  }

  if (trace.rotated) {
    Rng r = rng_for(kRotate);
    trace.angle_deg = r.uniform(-plan.rotate_max_deg, plan.rotate_max_deg);
    out.volume = rotate_transversal(out.volume, trace.angle_deg);
    if (mask) mask = binarized(rotate_transversal(*mask, trace.angle_deg, 0.0f));
  }

  if (trace.elastic) {
    Rng r = rng_for(kElastic);
    trace.alpha = r.uniform(plan.elastic_alpha_min, plan.elastic_alpha_max);
    const DeformField field = make_deform_field(extents_of(out.volume), plan.elastic_sigma, r);
    out.volume = apply_deformation(out.volume, field, trace.alpha);
    if (mask) mask = binarized(apply_deformation(*mask, field, trace.alpha));
  }

  if (trace.blurred) {
    Rng r = rng_for(kBlur);
    trace.blur_sigma = r.uniform(plan.blur_sigma_min, plan.blur_sigma_max);
    out.volume = gaussian_blur(out.volume, trace.blur_sigma);
  }

  if (trace.noised) {
    Rng r = rng_for(kNoise);
    trace.noise_sigma = r.uniform(plan.noise_sigma_min, plan.noise_sigma_max);
    out.volume = add_noise_with_sigma(out.volume, trace.noise_sigma, r);
  }

  out.mask = std::move(mask);
  out.trace = trace;
  return out;
}

}  // namespace ct3d
