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

#include "ct3d/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ct3d/error.hpp"
#include "ct3d/file_io.hpp"
#include "ct3d/volume_io.hpp"

namespace ct3d {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Calls `fn(fields, line_no)` for every content line.
template <typename Fn>
void for_each_row(const fs::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fn(split(line, '\t'), no);
  }
}

[[noreturn]] void bad_line(const fs::path& path, std::size_t no, const std::string& msg) {
  throw FormatError(path.string() + ":" + std::to_string(no) + ": " + msg);
}

std::size_t parse_index(const std::string& s, const fs::path& path, std::size_t no) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    bad_line(path, no, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t no) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    bad_line(path, no, "expected a number, got '" + s + "'");
  }
  return v;
}

std::string resolve(const fs::path& base, const std::string& ref) {
  if (ref.empty()) return ref;
  const fs::path p(ref);
  return p.is_absolute() ? ref : (base / p).lexically_normal().string();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<LabeledCase> read_labels(const fs::path& path) {
  const fs::path base = path.parent_path();
  std::vector<LabeledCase> cases;
  std::set<std::string> ids;
  for_each_row(path, [&](const std::vector<std::string>& f, std::size_t no) {
    if (f.size() < 2 || f.size() > 4) bad_line(path, no, "expected 2 to 4 fields");
    if (f[0].empty()) bad_line(path, no, "empty case id");
    if (!ids.insert(f[0]).second) bad_line(path, no, "duplicate case id '" + f[0] + "'");
    LabeledCase c;
    c.case_id = f[0];
    c.label = parse_index(f[1], path, no);
    if (f.size() > 2) c.volume_ref = resolve(base, f[2]);
    if (f.size() > 3) c.mask_ref = resolve(base, f[3]);
    cases.push_back(std::move(c));
  });
  return cases;
}

void write_labels(const fs::path& path, const std::vector<LabeledCase>& cases) {
  std::ostringstream out;
  for (const auto& c : cases) {
    out << c.case_id << '\t' << c.label;
    if (!c.volume_ref.empty() || !c.mask_ref.empty()) out << '\t' << c.volume_ref;
    if (!c.mask_ref.empty()) out << '\t' << c.mask_ref;
    out << '\n';
  }
  write_text(path, out.str());
}

void write_folds(const fs::path& path, const FoldAssignment& folds,
                 const std::vector<LabeledCase>& cases) {
  std::ostringstream out;
  for (const auto& c : cases) {
    auto it = folds.fold_of.find(c.case_id);
    if (it == folds.fold_of.end()) throw ContractError("case '" + c.case_id + "' has no fold");
    out << c.case_id << '\t' << it->second << '\n';
  }
  write_text(path, out.str());
}

FoldAssignment read_folds(const fs::path& path) {
  FoldAssignment folds;
  folds.k = 0;
  for_each_row(path, [&](const std::vector<std::string>& f, std::size_t no) {
    if (f.size() != 2) bad_line(path, no, "expected case_id<TAB>fold");
    const std::size_t fold = parse_index(f[1], path, no);
    if (!folds.fold_of.emplace(f[0], fold).second) bad_line(path, no, "duplicate case id");
    folds.k = std::max(folds.k, fold + 1);
  });
  return folds;
}

std::string format_predictions(const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) {
    out << r.case_id << '\t' << r.predicted << '\t';
    for (std::size_t i = 0; i < r.probabilities.size(); ++i) {
      out << (i ? "," : "") << format_double(r.probabilities[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::vector<PredictionRow> rows;
  for_each_row(path, [&](const std::vector<std::string>& f, std::size_t no) {
    if (f.size() != 3) bad_line(path, no, "expected case_id<TAB>class<TAB>probabilities");
    PredictionRow r;
    r.case_id = f[0];
    r.predicted = parse_index(f[1], path, no);
    for (const auto& p : split(f[2], ',')) r.probabilities.push_back(parse_double(p, path, no));
    if (r.predicted >= r.probabilities.size()) bad_line(path, no, "class out of range");
    rows.push_back(std::move(r));
  });
  return rows;
}

std::string format_metrics(const Metrics& metrics) {
  std::ostringstream out;
  for (const auto& [name, value] : metrics) out << name << '\t' << format_double(value) << '\n';
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

std::uint64_t case_stream_id(const std::string& case_id) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(case_id.data()),
                           case_id.size()));
}

namespace {

Tensor binarized(Tensor t) {
  for (auto& v : t.data()) v = v >= 0.5f ? 1.0f : 0.0f;
  return t;
}

Tensor load_volume(const std::string& ref, const std::string& case_id) {
  if (ref.empty()) throw ParameterError("case '" + case_id + "' has no volume reference");
  Tensor v = ingest_case(ref).volume;
  if (v.rank() != 3) {
    throw ShapeError("case '" + case_id + "': expected an (X, Y, Z) volume, got " +
                     to_string(v.dims()));
  }
  return v;
}

}  // namespace

TrainingCase prepare_case(const LabeledCase& c, const AugmentPlan& plan,
                          const fs::path& cache_dir) {
  TrainingCase t;
  t.label = c.label;
  t.volume_id = case_stream_id(c.case_id);
  const auto r = precompute(load_volume(c.volume_ref, c.case_id), plan.pre_size, plan.crop_size,
                            cache_dir);
  t.pre = read_vox(r.pre_path);
  t.base = read_vox(r.base_path);
  if (!c.mask_ref.empty()) {
    const auto m = precompute(load_volume(c.mask_ref, c.case_id), plan.pre_size,
                              plan.crop_size, cache_dir);
    t.pre_mask = binarized(read_vox(m.pre_path));
    t.base_mask = binarized(read_vox(m.base_path));
  }
  return t;
}

Tensor load_base_volume(const LabeledCase& c, const AugmentPlan& plan,
                        const fs::path& cache_dir) {
  const Tensor v = load_volume(c.volume_ref, c.case_id);
  return read_vox(precompute(v, plan.pre_size, plan.crop_size, cache_dir).base_path);
}

}  // namespace ct3d
