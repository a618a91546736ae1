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

#include "ct3d/inflate.hpp"
#include "ct3d/model.hpp"
#include "ct3d/tensor.hpp"

// NTC1 checkpoint container (all integers little-endian):
//
//   "NTC1"  u32 entry count
//   per entry: u16 name length, name bytes, u8 rank, rank x u64 dims,
//              float32 data
//   u32 CRC-32 of every preceding byte
//
// Entries whose name starts with "meta." carry the model configuration and
// the format version; all other entries are parameters.

namespace ct3d {

struct CheckpointEntry {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  /// nullptr when absent.
  const CheckpointEntry* find(const std::string& name) const;
  /// Throws FormatError on a duplicate name.
  void add(std::string name, Tensor value);
  /// Parameter entries only.
  std::vector<const CheckpointEntry*> parameters() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

bool is_meta_entry(const std::string& name);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Validates magic, sizes, name uniqueness and the CRC; throws FormatError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Parameters in layout order followed by the configuration snapshot.
Checkpoint save_checkpoint(const Model<float>& model);
/// Replaces every parameter of `model`. Throws ShapeError when a shared name
/// has different dims and FormatError naming the first missing or
/// unexpected entry; `model` is untouched on error.
void load_checkpoint(Model<float>& model, const Checkpoint& ckpt);

/// Throws FormatError when the snapshot is missing or malformed.
ModelConfig config_from_checkpoint(const Checkpoint& ckpt);
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

struct ImportRecord {
  enum class Action { inflated, copied, initialized };
  std::string name;
  Action action = Action::initialized;
  Shape source_dims;  // empty for initialized entries
  Shape target_dims;
  double source_norm = 0.0;
  double target_norm = 0.0;
};

std::string_view to_string(ImportRecord::Action action);

struct ImportResult {
  Checkpoint checkpoint;
  std::vector<ImportRecord> report;
};

/// Maps a 2D checkpoint onto the 3D layout of `config`. Rank-4 spatial
/// kernels (I, O, H, W) are inflated to (I, O, H, W, D) with the mode of
/// `mode` and D taken from the 3D kernel; parameters whose dims already
/// match are copied bitwise. 3D parameters with no 2D counterpart (heads the
/// 2D network does not have) keep the values of build_model(config, seed).
/// Throws MigrationError listing every 2D name that has no 3D counterpart,
/// and ShapeError for counterparts that cannot be reconciled.
ImportResult import_2d_checkpoint(const Checkpoint& ckpt2d, InflationMode mode,
                                  const ModelConfig& config, std::uint64_t seed = 0);

}  // namespace ct3d
