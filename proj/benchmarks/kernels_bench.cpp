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

#include <benchmark/benchmark.h>

#include "ct3d/augment.hpp"
#include "ct3d/model.hpp"
#include "ct3d/ops.hpp"
#include "ct3d/random.hpp"
#include "ct3d/resample.hpp"

namespace {

using namespace ct3d;

Tensor noise(Shape dims, std::uint64_t seed) {
  Tensor t(std::move(dims));
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: channels, spatial extent.
void BM_Conv3d3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const Tensor x = noise({c, n, n, n}, 1);
  const Tensor w = noise({c, c, 3, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, w, {{1, 1, 1}, {1, 1, 1}}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * n * n * n));
}
BENCHMARK(BM_Conv3d3x3)->Args({8, 16})->Args({16, 32})->Args({32, 32})->Unit(benchmark::kMillisecond);

void BM_Depthwise7(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const Tensor x = noise({c, n, n, n}, 3);
  const Tensor w = noise({c, 1, 7, 7, 7}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(depthwise_conv3d(x, w, {{1, 1, 1}, {3, 3, 3}}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * n * n * n));
}
BENCHMARK(BM_Depthwise7)->Args({8, 16})->Args({32, 16})->Args({8, 56})->Unit(benchmark::kMillisecond);

// Arg: sigma in tenths of a voxel.
void BM_GaussianBlur64(benchmark::State& state) {
  const Tensor x = noise({64, 64, 64}, 5);
  const double sigma = static_cast<double>(state.range(0)) / 10.0;
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_blur(x, sigma));
}
BENCHMARK(BM_GaussianBlur64)->Arg(5)->Arg(15)->Arg(50)->Unit(benchmark::kMillisecond);

// Args: source extent, target extent.
void BM_SplineResample(benchmark::State& state) {
  const auto from = static_cast<std::size_t>(state.range(0));
  const auto to = static_cast<std::size_t>(state.range(1));
  const Tensor x = noise({from, from, from}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(spline_resample_volume(x, {to, to, to}));
}
BENCHMARK(BM_SplineResample)->Args({32, 36})->Args({64, 96})->Args({128, 64})
    ->Unit(benchmark::kMillisecond);

void BM_ToyForward32(benchmark::State& state) {
  const auto model = build_model<float>(ModelConfig::toy(), 7);
  const Tensor x = noise({32, 32, 32}, 8);
  for (auto _ : state) {
    const auto f = forward_features(model, x);
    benchmark::DoNotOptimize(classify(model, f));
    benchmark::DoNotOptimize(segment(model, f, {32, 32, 32}));
  }
}
BENCHMARK(BM_ToyForward32)->Unit(benchmark::kMillisecond);

void BM_AugmentPipeline36to32(benchmark::State& state) {
  const Tensor pre = noise({36, 36, 36}, 9);
  const Tensor base = noise({32, 32, 32}, 10);
  AugmentPlan plan;
  plan.pre_size = 36;
  plan.crop_size = 32;
  std::uint64_t draw = 0;
  for (auto _ : state) benchmark::DoNotOptimize(apply_pipeline(pre, base, plan, 0, draw++));
}
BENCHMARK(BM_AugmentPipeline36to32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
