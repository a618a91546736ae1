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

#include "ct3d/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ct3d/error.hpp"

namespace ct3d {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct KeyDef {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, const std::string&, const fs::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
KeyDef size_key(std::string name, std::string doc, Get member) {
  return {std::move(name), std::move(doc),
          [member](RunConfig& c, const std::string& v, const fs::path&) { member(c) = to_size(v); },
          [member](const RunConfig& c) {
            return std::to_string(member(c));
          }};
}

template <typename Get>
KeyDef double_key(std::string name, std::string doc, Get member) {
  return {std::move(name), std::move(doc),
          [member](RunConfig& c, const std::string& v, const fs::path&) {
            member(c) = to_double(v);
          },
          [member](const RunConfig& c) { return fmt(member(c)); }};
}

template <typename Get>
KeyDef path_key(std::string name, std::string doc, Get member) {
  return {std::move(name), std::move(doc),
          [member](RunConfig& c, const std::string& v, const fs::path& base) {
            const fs::path p(v);
            member(c) = (p.empty() || p.is_absolute() || base.empty()) ? p : base / p;
          },
          [member](const RunConfig& c) { return member(c).string(); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> d;
    d.push_back({"mode", "severity (4 classes) or detection (2 classes)",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   if (v != "severity" && v != "detection") {
                     throw ConfigError("mode must be severity or detection, got '" + v + "'");
                   }
                   c.mode = v;
                 },
                 [](const RunConfig& c) { return c.mode; }});
    d.push_back(size_key("model.in_channels", "input channels", FIELD(c.model.in_channels)));
    d.push_back({"model.stage_depths", "blocks per stage",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   c.model.stage_depths = to_sizes(v);
                 },
                 [](const RunConfig& c) { return fmt(c.model.stage_depths); }});
    d.push_back({"model.stage_channels", "channels per stage",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   c.model.stage_channels = to_sizes(v);
                 },
                 [](const RunConfig& c) { return fmt(c.model.stage_channels); }});
    d.push_back(size_key("model.depthwise_kernel", "depthwise kernel extent (odd)",
                         FIELD(c.model.depthwise_kernel)));
    d.push_back(size_key("model.stem_patch", "stem patch extent and stride",
                         FIELD(c.model.stem_patch)));
    d.push_back(size_key("model.seg_channels", "segmentation decoder width",
                         FIELD(c.model.seg_channels)));
    d.push_back({"model.heads", "cls, seg or cls+seg",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   if (v != "cls" && v != "seg" && v != "cls+seg") {
                     throw ConfigError("model.heads must be cls, seg or cls+seg, got '" + v + "'");
                   }
                   c.model.classification_head = v != "seg";
                   c.model.segmentation_head = v != "cls";
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.classification_head && c.model.segmentation_head
                                          ? "cls+seg"
                                          : c.model.segmentation_head ? "seg" : "cls");
                 }});
    d.push_back(double_key("augment.flip_prob", "per-axis flip probability",
                           FIELD(c.augment.flip_prob)));
    d.push_back(double_key("augment.noise_prob", "Gaussian noise probability",
                           FIELD(c.augment.noise_prob)));
    d.push_back(double_key("augment.noise_sigma_min", "noise sigma lower bound",
                           FIELD(c.augment.noise_sigma_min)));
    d.push_back(double_key("augment.noise_sigma_max", "noise sigma upper bound",
                           FIELD(c.augment.noise_sigma_max)));
    d.push_back(double_key("augment.blur_prob", "Gaussian blur probability",
                           FIELD(c.augment.blur_prob)));
    d.push_back(double_key("augment.blur_sigma_min", "blur sigma lower bound",
                           FIELD(c.augment.blur_sigma_min)));
    d.push_back(double_key("augment.blur_sigma_max", "blur sigma upper bound",
                           FIELD(c.augment.blur_sigma_max)));
    d.push_back(double_key("augment.rotate_prob", "in-plane rotation probability",
                           FIELD(c.augment.rotate_prob)));
    d.push_back(double_key("augment.rotate_max_deg", "rotation angle bound in degrees",
                           FIELD(c.augment.rotate_max_deg)));
    d.push_back(double_key("augment.elastic_prob", "elastic deformation probability",
                           FIELD(c.augment.elastic_prob)));
    d.push_back(double_key("augment.elastic_alpha_min", "elastic alpha lower bound",
                           FIELD(c.augment.elastic_alpha_min)));
    d.push_back(double_key("augment.elastic_alpha_max", "elastic alpha upper bound",
                           FIELD(c.augment.elastic_alpha_max)));
    d.push_back(double_key("augment.elastic_sigma", "elastic field smoothing sigma (voxels)",
                           FIELD(c.augment.elastic_sigma)));
    d.push_back(double_key("augment.orient_prob", "90-degree reorientation probability",
                           FIELD(c.augment.orient_prob)));
    d.push_back(double_key("augment.crop_prob", "probability of a random crop of the pre-size "
                           "volume instead of the base volume", FIELD(c.augment.crop_prob)));
    d.push_back(size_key("augment.pre_size", "pre-crop resample size", FIELD(c.augment.pre_size)));
    d.push_back(size_key("augment.crop_size", "crop and model input size",
                         FIELD(c.augment.crop_size)));
    d.push_back(double_key("train.lr", "SGD learning rate", FIELD(c.train.lr)));
    d.push_back(double_key("train.momentum", "SGD momentum", FIELD(c.train.momentum)));
    d.push_back(size_key("train.steps", "optimizer steps per fold", FIELD(c.train.steps)));
    d.push_back(size_key("train.batch", "cases per step", FIELD(c.train.batch)));
    d.push_back(double_key("train.lambda", "segmentation loss weight", FIELD(c.train.lambda)));
    d.push_back(double_key("train.ema_decay", "EMA decay", FIELD(c.train.ema_decay)));
    d.push_back({"seed", "seed for initialization, folds, sampling and augmentation",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   std::uint64_t s = 0;
                   const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
                   if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
                     throw ConfigError("expected an unsigned integer, got '" + v + "'");
                   }
                   c.train.seed = s;
                   c.augment.seed = s;
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    d.push_back(size_key("folds.k", "number of cross-validation folds", FIELD(c.folds_k)));
    d.push_back({"inflation", "full, 1g or 2g; used when init_ckpt is a 2D checkpoint",
                 [](RunConfig& c, const std::string& v, const fs::path&) {
                   try {
                     c.inflation = parse_inflation_mode(v);
                   } catch (const ParameterError& e) {
                     throw ConfigError(e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.inflation)); }});
    d.push_back(path_key("labels", "labels TSV", FIELD(c.labels)));
    d.push_back(path_key("folds", "fold TSV; empty to split the labels", FIELD(c.folds)));
    d.push_back(path_key("out_dir", "output directory", FIELD(c.out_dir)));
    d.push_back(path_key("init_ckpt", "initial checkpoint; empty for random init",
                         FIELD(c.init_ckpt)));
    return d;
  }();
  return defs;
}

#undef FIELD

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const fs::path& base_dir) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    const std::string where = "config line " + std::to_string(no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const auto& defs = key_defs();
    auto it = std::find_if(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.name == key; });
    if (it == defs.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->set(c, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  c.model.num_classes = c.mode == "severity" ? 4 : 2;
  try {
    c.model.validate();
    c.augment.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  if (c.folds_k < 2) throw ConfigError("folds.k must be at least 2");
  if (c.train.batch == 0) throw ConfigError("train.batch must be positive");
  if (!(c.train.ema_decay >= 0 && c.train.ema_decay < 1)) {
    throw ConfigError("train.ema_decay must lie in [0, 1)");
  }
  if (!(c.train.lambda >= 0)) throw ConfigError("train.lambda must be non-negative");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& d : key_defs()) out += d.name + " = " + d.get(*this) + "\n";
  return out;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& d : key_defs()) k.push_back({d.name, d.doc});
    return k;
  }();
  return keys;
}

}  // namespace ct3d
