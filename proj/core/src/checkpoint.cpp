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

#include "ct3d/checkpoint.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <zlib.h>

#include "byte_io.hpp"
#include "ct3d/error.hpp"
#include "ct3d/file_io.hpp"

namespace ct3d {

namespace {

constexpr char kMagic[] = "NTC1";

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

bool is_meta_entry(const std::string& name) { return name.rfind("meta.", 0) == 0; }

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void Checkpoint::add(std::string name, Tensor value) {
  if (find(name)) throw FormatError("duplicate checkpoint entry '" + name + "'");
  entries.push_back({std::move(name), std::move(value)});
}

std::vector<const CheckpointEntry*> Checkpoint::parameters() const {
  std::vector<const CheckpointEntry*> out;
  for (const auto& e : entries) {
    if (!is_meta_entry(e.name)) out.push_back(&e);
  }
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.entries.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("too many checkpoint entries");
  }
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  std::set<std::string> seen;
  for (const auto& e : ckpt.entries) {
    if (!seen.insert(e.name).second) throw FormatError("duplicate checkpoint entry '" + e.name + "'");
    if (e.name.empty() || e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("invalid checkpoint entry name length");
    }
    if (e.value.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("rank too large for '" + e.name + "'");
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name);
    w.u8(static_cast<std::uint8_t>(e.value.rank()));
    for (auto d : e.value.dims()) w.u64(d);
    for (float v : e.value.data()) w.f32(v);
  }
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.last(4), "checkpoint");
  if (tail.u32() != crc32_of(body)) throw FormatError("checkpoint: CRC mismatch");

  detail::ByteReader r(body, "checkpoint");
  if (r.raw(4) != kMagic) r.fail("bad magic");
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.raw(len);
    const std::uint8_t rank = r.u8();
    Shape dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u64();
      if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) r.fail("dims overflow");
      n *= d;
    }
    if (rank == 0 || n == 0) r.fail("empty tensor '" + name + "'");
    if (n > r.remaining() / 4) r.fail("truncated data for '" + name + "'");
    Tensor t(dims);
    r.f32s(t.data().data(), n);
    ckpt.add(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

// ---------------------------------------------------------------------------
// Configuration snapshot.

namespace {

Tensor meta_vector(const std::vector<std::size_t>& values) {
  Tensor t({values.size()});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<float>(values[i]);
  return t;
}

Tensor meta_scalar(std::size_t v) { return Tensor::scalar(static_cast<float>(v)); }

std::vector<std::size_t> read_meta(const Checkpoint& ckpt, const std::string& key) {
  const auto* e = ckpt.find("meta." + key);
  if (!e) throw FormatError("checkpoint has no 'meta." + key + "' entry");
  std::vector<std::size_t> out;
  for (float v : e->value.data()) {
    if (!(v >= 0) || v != std::floor(v) || v > 1e9f) {
      throw FormatError("checkpoint entry 'meta." + key + "' is not a count");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t read_meta_scalar(const Checkpoint& ckpt, const std::string& key) {
  const auto v = read_meta(ckpt, key);
  if (v.size() != 1) throw FormatError("checkpoint entry 'meta." + key + "' must be a scalar");
  return v[0];
}

void add_config(Checkpoint& ckpt, const ModelConfig& c) {
  ckpt.add("meta.format_version", meta_scalar(kCheckpointVersion));
  ckpt.add("meta.in_channels", meta_scalar(c.in_channels));
  ckpt.add("meta.stage_depths", meta_vector(c.stage_depths));
  ckpt.add("meta.stage_channels", meta_vector(c.stage_channels));
  ckpt.add("meta.depthwise_kernel", meta_scalar(c.depthwise_kernel));
  ckpt.add("meta.stem_patch", meta_scalar(c.stem_patch));
  ckpt.add("meta.num_classes", meta_scalar(c.num_classes));
  ckpt.add("meta.seg_channels", meta_scalar(c.seg_channels));
  ckpt.add("meta.heads", meta_vector({c.classification_head ? 1u : 0u,
                                      c.segmentation_head ? 1u : 0u}));
}

}  // namespace

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  const std::size_t version = read_meta_scalar(ckpt, "format_version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.in_channels = read_meta_scalar(ckpt, "in_channels");
  c.stage_depths = read_meta(ckpt, "stage_depths");
  c.stage_channels = read_meta(ckpt, "stage_channels");
  c.depthwise_kernel = read_meta_scalar(ckpt, "depthwise_kernel");
  c.stem_patch = read_meta_scalar(ckpt, "stem_patch");
  c.num_classes = read_meta_scalar(ckpt, "num_classes");
  c.seg_channels = read_meta_scalar(ckpt, "seg_channels");
  const auto heads = read_meta(ckpt, "heads");
  if (heads.size() != 2) throw FormatError("checkpoint entry 'meta.heads' must have 2 values");
  c.classification_head = heads[0] != 0;
  c.segmentation_head = heads[1] != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint configuration is invalid: ") + e.what());
  }
  return c;
}

Checkpoint save_checkpoint(const Model<float>& model) {
  Checkpoint ckpt;
  for (const auto& [name, t] : model.params) ckpt.add(name, t);
  add_config(ckpt, model.config);
  return ckpt;
}

void load_checkpoint(Model<float>& model, const Checkpoint& ckpt) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto* e : ckpt.parameters()) by_name.emplace(e->name, e);
  for (const auto& [name, t] : model.params) {
    auto it = by_name.find(name);
    if (it != by_name.end() && it->second->value.dims() != t.dims()) {
      throw ShapeError("checkpoint entry '" + name + "' has dims " +
                       to_string(it->second->value.dims()) + ", model expects " +
                       to_string(t.dims()));
    }
  }
  for (const auto& [name, t] : model.params) {
    if (!by_name.count(name)) throw FormatError("checkpoint is missing entry '" + name + "'");
  }
  for (const auto& [name, e] : by_name) {
    if (!model.params.contains(name)) {
      throw FormatError("checkpoint has unexpected entry '" + name + "'");
    }
  }
  for (auto& [name, t] : model.params) t = by_name.at(name)->value;
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig config = config_from_checkpoint(ckpt);
  Model<float> model{config, {}};
  for (const auto& spec : parameter_layout(config)) model.params.add(spec.name, Tensor(spec.dims));
  load_checkpoint(model, ckpt);
  return model;
}

// ---------------------------------------------------------------------------
// 2D -> 3D import.

std::string_view to_string(ImportRecord::Action action) {
  switch (action) {
    case ImportRecord::Action::inflated: return "inflated";
    case ImportRecord::Action::copied: return "copied";
    case ImportRecord::Action::initialized: return "initialized";
  }
  return "?";
}

ImportResult import_2d_checkpoint(const Checkpoint& ckpt2d, InflationMode mode,
                                  const ModelConfig& config, std::uint64_t seed) {
  const Model<float> init = build_model<float>(config, seed);

  std::string unmapped;
  for (const auto* e : ckpt2d.parameters()) {
    if (!init.params.contains(e->name)) unmapped += (unmapped.empty() ? "" : ", ") + e->name;
  }
  if (!unmapped.empty()) {
    throw MigrationError("2D checkpoint entries with no 3D counterpart: " + unmapped);
  }

  ImportResult result;
  for (const auto& [name, target] : init.params) {
    ImportRecord rec;
    rec.name = name;
    rec.target_dims = target.dims();
    const CheckpointEntry* src = ckpt2d.find(name);
    Tensor value;
    if (!src) {
      value = target;
      rec.action = ImportRecord::Action::initialized;
    } else {
      const Tensor& k = src->value;
      rec.source_dims = k.dims();
      rec.source_norm = l2_norm(k);
      if (k.dims() == target.dims()) {
        value = k;
        rec.action = ImportRecord::Action::copied;
      } else if (k.rank() == 4 && target.rank() == 5 &&
                 Shape(target.dims().begin(), target.dims().begin() + 4) == k.dims()) {
        value = inflate(k, InflationSpec{mode, target.dim(4)});
        rec.action = ImportRecord::Action::inflated;
      } else {
        throw ShapeError("2D entry '" + name + "' has dims " + to_string(k.dims()) +
                         ", which cannot map onto " + to_string(target.dims()));
      }
    }
    rec.target_norm = l2_norm(value);
    result.checkpoint.add(name, std::move(value));
    result.report.push_back(std::move(rec));
  }
  add_config(result.checkpoint, config);
  return result;
}

}  // namespace ct3d
