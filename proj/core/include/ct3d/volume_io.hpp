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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ct3d/tensor.hpp"

// Volume files and case ingestion.
//
// VOX1 layout (little-endian): "VOX1", u8 dtype (0 = float32), u8 rank,
// rank x u64 dims, float32 payload.
//
// A case is either a VOX1 file, taken as stored, or a directory of 2D
// grayscale slices (binary or ASCII PGM, PNG) stacked along Z in
// lexicographic filename order. Slice intensities are mapped to [0, 1]:
// 8-bit values by v / 255, 16-bit values as HU = v - 1024 through the lung
// window of normalize_intensity.

namespace ct3d {

std::vector<std::uint8_t> encode_vox(const Tensor& volume);
/// Throws FormatError.
Tensor decode_vox(std::span<const std::uint8_t> bytes);
Tensor read_vox(const std::filesystem::path& path);
void write_vox(const std::filesystem::path& path, const Tensor& volume);

struct SliceImage {
  std::size_t rows = 0, cols = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> pixels;  // row-major
};

/// PGM (P2, P5) or PNG, chosen by content. Throws FormatError naming the
/// file when it cannot be decoded or is not single-channel grayscale.
SliceImage read_slice_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const SliceImage& image);
void write_png(const std::filesystem::path& path, const SliceImage& image);

/// Map of raw slice values to normalized intensities.
float slice_intensity(std::uint16_t value, int bit_depth);

struct IngestResult {
  Tensor volume;  // (rows, cols, slices)
  std::vector<std::string> slice_files;  // kept, in stacking order
  std::vector<std::size_t> discarded;    // indices into the sorted listing
  std::vector<std::string> warnings;
};

/// Throws IoError for a missing input, FormatError for undecodable slices
/// and ShapeError when fewer than two slices share the majority resolution
/// (ties go to the larger resolution).
IngestResult ingest_case(const std::filesystem::path& input);

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// $CT3D_CACHE_DIR, or ".ct3d-cache" when unset or empty.
std::filesystem::path default_cache_dir();

struct PrecomputeResult {
  std::string key;  // hex content hash
  std::filesystem::path pre_path, base_path;
  bool cache_hit = false;
};

/// Spline-resamples `volume` to pre_size^3 and crop_size^3 and stores both
/// as VOX1 under cache_dir/<key>/, where key hashes the volume content and
/// the two sizes. Existing entries are reused untouched.
PrecomputeResult precompute(const Tensor& volume, std::size_t pre_size, std::size_t crop_size,
                            const std::filesystem::path& cache_dir);

}  // namespace ct3d
