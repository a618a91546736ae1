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

// ct3d command-line tool. Every failure ends with one line on stderr,
//   error: <kind>: <message>
// and exit status 2 (1 for a failing selftest).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "ct3d/checkpoint.hpp"
#include "ct3d/dataset.hpp"
#include "ct3d/error.hpp"
#include "ct3d/file_io.hpp"
#include "ct3d/run_config.hpp"
#include "ct3d/synthetic.hpp"
#include "ct3d/train.hpp"
#include "ct3d/volume_io.hpp"

namespace fs = std::filesystem;
using namespace ct3d;

namespace {

std::string dims_text(const Shape& d) { return d.empty() ? "-" : to_string(d); }

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string input, out;
  std::size_t pre = 256, crop = 224;
  std::string cache;
};

int run_ingest(const IngestArgs& a) {
  const IngestResult r = ingest_case(a.input);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  const fs::path out(a.out);
  fs::create_directories(out);
  write_vox(out / "volume.vox", r.volume);
  const fs::path cache = a.cache.empty() ? default_cache_dir() : fs::path(a.cache);
  const PrecomputeResult p = precompute(r.volume, a.pre, a.crop, cache);
  std::cerr << (p.cache_hit ? "cache hit " : "cache miss ") << p.key << "\n";
  const auto copy = [&](const fs::path& from, std::size_t n) {
    write_file_atomic(out / ("r" + std::to_string(n) + ".vox"), read_file_bytes(from));
  };
  copy(p.pre_path, a.pre);
  copy(p.base_path, a.crop);
  std::cout << "volume " << to_string(r.volume.dims()) << ", " << r.slice_files.size()
            << " slices kept, " << r.discarded.size() << " discarded\n";
  return 0;
}

// --- inflate ---------------------------------------------------------------

struct InflateArgs {
  std::string ckpt2d, mode, out, config;
  std::uint64_t seed = 0;
};

int run_inflate(const InflateArgs& a) {
  const ModelConfig config = a.config.empty() ? ModelConfig{} : RunConfig::load(a.config).model;
  const ImportResult r = import_2d_checkpoint(read_checkpoint(a.ckpt2d),
                                              parse_inflation_mode(a.mode), config, a.seed);
  write_checkpoint(a.out, r.checkpoint);
  std::printf("%-44s %-11s %-18s %-20s %12s %12s\n", "name", "action", "source", "target",
              "|src|", "|dst|");
  for (const auto& rec : r.report) {
    std::printf("%-44s %-11s %-18s %-20s %12.6g %12.6g\n", rec.name.c_str(),
                std::string(to_string(rec.action)).c_str(), dims_text(rec.source_dims).c_str(),
                dims_text(rec.target_dims).c_str(), rec.source_norm, rec.target_norm);
  }
  return 0;
}

// --- folds -----------------------------------------------------------------

struct FoldsArgs {
  std::string labels, out;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

int run_folds(const FoldsArgs& a) {
  const auto cases = read_labels(a.labels);
  const FoldAssignment folds = stratified_kfold(cases, a.k, a.seed);
  write_folds(a.out, folds, cases);
  std::map<std::string, std::size_t> label_of;
  for (const auto& c : cases) label_of[c.case_id] = c.label;
  for (std::size_t f = 0; f < a.k; ++f) {
    std::map<std::size_t, std::size_t> per_class;
    for (const auto& id : folds.members(f, cases)) ++per_class[label_of[id]];
    std::cout << "fold " << f << ":";
    for (const auto& [label, n] : per_class) std::cout << " class" << label << "=" << n;
    std::cout << "\n";
  }
  return 0;
}

// --- train -----------------------------------------------------------------

FoldAssignment folds_for(const RunConfig& cfg, const std::vector<LabeledCase>& cases) {
  if (!cfg.folds.empty()) return read_folds(cfg.folds);
  return stratified_kfold(cases, cfg.folds_k, cfg.train.seed);
}

/// 2D checkpoints carry no configuration snapshot; those are inflated.
Model<float> initial_model(const RunConfig& cfg) {
  if (cfg.init_ckpt.empty()) return build_model<float>(cfg.model, cfg.train.seed);
  const Checkpoint ckpt = read_checkpoint(cfg.init_ckpt);
  if (ckpt.find("meta.format_version") == nullptr) {
    const auto r = import_2d_checkpoint(ckpt, cfg.inflation, cfg.model, cfg.train.seed);
    return model_from_checkpoint(r.checkpoint);
  }
  Model<float> model = build_model<float>(cfg.model, cfg.train.seed);
  load_checkpoint(model, ckpt);
  return model;
}

struct TrainArgs {
  std::string config;
  std::size_t fold = 0;
};

int run_train(const TrainArgs& a) {
  const RunConfig cfg = RunConfig::load(a.config);
  if (cfg.labels.empty()) throw ConfigError("labels is not set in " + a.config);
  const auto cases = read_labels(cfg.labels);
  const FoldAssignment folds = folds_for(cfg, cases);
  if (a.fold >= folds.k) {
    throw ParameterError("fold " + std::to_string(a.fold) + " out of range for k = " +
                         std::to_string(folds.k));
  }
  const fs::path cache = default_cache_dir();
  std::vector<TrainingCase> train;
  for (const auto& c : cases) {
    auto it = folds.fold_of.find(c.case_id);
    if (it == folds.fold_of.end()) throw FormatError("case '" + c.case_id + "' has no fold");
    if (it->second != a.fold) train.push_back(prepare_case(c, cfg.augment, cache));
  }
  std::cerr << "fold " << a.fold << ": training on " << train.size() << " cases\n";

  TrainResult r = train_toy(initial_model(cfg), train, cfg.augment, cfg.train);
  const fs::path dir = cfg.out_dir / ("fold" + std::to_string(a.fold));
  fs::create_directories(dir);
  write_checkpoint(dir / "model.ntc", save_checkpoint(r.model));
  write_checkpoint(dir / "ema.ntc", save_checkpoint(Model<float>{r.model.config, r.ema.shadow}));
  std::ostringstream trace;
  trace << "step\tloss\n";
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", i, r.loss_trace[i]);
    trace << buf;
  }
  write_text(dir / "loss.tsv", trace.str());
  std::cout << dir.string() << "\n";
  return 0;
}

// --- predict / eval / pseudolabel -----------------------------------------

struct PredictArgs {
  std::string config, ckpts, cases, out;
};

int run_predict(const PredictArgs& a) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  std::vector<Model<float>> models;
  for (const auto& path : split_commas(a.ckpts)) {
    models.push_back(model_from_checkpoint(read_checkpoint(path)));
  }
  std::vector<const Model<float>*> members;
  for (const auto& m : models) members.push_back(&m);

  const fs::path cache = default_cache_dir();
  std::vector<PredictionRow> rows;
  for (const auto& c : read_labels(a.cases)) {
    const auto e = ensemble_predict(members, load_base_volume(c, cfg.augment, cache));
    rows.push_back({c.case_id, e.predicted, e.probabilities});
  }
  const std::string text = format_predictions(rows);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  return 0;
}

struct EvalArgs {
  std::string predictions, labels;
};

int run_eval(const EvalArgs& a) {
  std::map<std::string, std::size_t> truth;
  std::size_t num_classes = 0;
  for (const auto& c : read_labels(a.labels)) {
    truth[c.case_id] = c.label;
    num_classes = std::max(num_classes, c.label + 1);
  }
  std::vector<std::size_t> pred, label;
  for (const auto& row : read_predictions(a.predictions)) {
    auto it = truth.find(row.case_id);
    if (it == truth.end()) throw ContractError("no label for case '" + row.case_id + "'");
    num_classes = std::max({num_classes, row.predicted + 1, row.probabilities.size()});
    pred.push_back(row.predicted);
    label.push_back(it->second);
  }
  if (pred.empty()) throw ContractError("no predictions in " + a.predictions);
  const F1Report f1 = macro_f1(pred, label, num_classes);
  Metrics m{{"cases", static_cast<double>(pred.size())}, {"macro_f1", f1.macro}};
  for (std::size_t k = 0; k < f1.per_class.size(); ++k) {
    m.emplace_back("f1_class" + std::to_string(k), f1.per_class[k]);
  }
  std::cout << format_metrics(m);
  return 0;
}

struct PseudoArgs {
  std::string ckpt, cases, out, config;
};

int run_pseudolabel(const PseudoArgs& a) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  const Model<float> model = model_from_checkpoint(read_checkpoint(a.ckpt));
  const fs::path cache = default_cache_dir();
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<LabeledCase> listed;
  for (auto c : read_labels(a.cases)) {
    const Tensor mask = pseudo_label(model, load_base_volume(c, cfg.augment, cache));
    c.mask_ref = (out / (c.case_id + ".mask.vox")).string();
    write_vox(c.mask_ref, mask);
    listed.push_back(std::move(c));
  }
  write_labels(out / "labels.tsv", listed);
  std::cout << listed.size() << " masks written to " << out.string() << "\n";
  return 0;
}

// --- synth / config / selftest ---------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t count = 40, size = 32;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<LabeledCase> cases;
  const auto data = make_shape_dataset(a.count, a.size, a.seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case%04zu", i);
    write_vox(out / (std::string(id) + ".vox"), data[i].volume);
    write_vox(out / (std::string(id) + ".mask.vox"), data[i].mask);
    cases.push_back({id, data[i].label, std::string(id) + ".vox", std::string(id) + ".mask.vox"});
  }
  write_labels(out / "labels.tsv", cases);
  std::cout << cases.size() << " cases written to " << out.string() << "\n";
  return 0;
}

int run_config_keys() {
  const std::string defaults = RunConfig{}.to_text();
  std::istringstream lines(defaults);
  std::size_t i = 0;
  const auto& keys = config_keys();
  for (std::string line; std::getline(lines, line); ++i) {
    std::cout << "# " << (i < keys.size() ? keys[i].doc : "") << "\n" << line << "\n";
  }
  return 0;
}

int run_selftest(bool quick) {
  acceptance::Options opt;
  opt.quick = quick;
  int failed = 0;
  acceptance::run_all(opt, [&](const acceptance::CriterionResult& r) {
    std::cout << acceptance::format_result(r) << std::endl;
    failed += !r.passed;
  });
  if (failed) {
    std::cerr << "error: selftest: " << failed << " criteria failed\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ct3d: volumetric CT classification toolkit"};
  app.require_subcommand(1);
  int status = 0;

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Ingest a slice directory or VOX1 file and precompute");
  ingest->add_option("input", ia.input, "slice directory or VOX1 file")->required();
  ingest->add_option("out", ia.out, "output directory")->required();
  ingest->add_option("--pre", ia.pre, "pre-crop size")->capture_default_str();
  ingest->add_option("--crop", ia.crop, "base/crop size")->capture_default_str();
  ingest->add_option("--cache", ia.cache, "cache directory (default $CT3D_CACHE_DIR)");
  ingest->callback([&] { status = run_ingest(ia); });

  InflateArgs fa;
  auto* inflate = app.add_subcommand("inflate", "Inflate a 2D checkpoint to the 3D model");
  inflate->add_option("ckpt2d", fa.ckpt2d, "2D NTC1 checkpoint")->required();
  inflate->add_option("mode", fa.mode, "full, 1g or 2g")->required();
  inflate->add_option("out", fa.out, "3D NTC1 output")->required();
  inflate->add_option("--config", fa.config, "run config with the target model");
  inflate->add_option("--seed", fa.seed, "seed for parameters absent from the 2D model");
  inflate->callback([&] { status = run_inflate(fa); });

  FoldsArgs ka;
  auto* folds = app.add_subcommand("folds", "Stratified k-fold assignment");
  folds->add_option("labels", ka.labels, "labels TSV")->required();
  folds->add_option("out", ka.out, "folds TSV")->required();
  folds->add_option("--k", ka.k, "fold count")->capture_default_str();
  folds->add_option("--seed", ka.seed, "shuffle seed")->capture_default_str();
  folds->callback([&] { status = run_folds(ka); });

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one fold");
  train->add_option("--config", ta.config, "run config")->required();
  train->add_option("--fold", ta.fold, "held-out fold")->required();
  train->callback([&] { status = run_train(ta); });

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Softmax-mean ensemble prediction");
  predict->add_option("--config", pa.config, "run config (input sizes)");
  predict->add_option("--ckpts", pa.ckpts, "comma-separated checkpoints")->required();
  predict->add_option("cases", pa.cases, "case list TSV")->required();
  predict->add_option("--out", pa.out, "predictions TSV (default stdout)");
  predict->callback([&] { status = run_predict(pa); });

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Macro F1 of predictions against labels");
  eval->add_option("predictions", ea.predictions, "predictions TSV")->required();
  eval->add_option("labels", ea.labels, "labels TSV")->required();
  eval->callback([&] { status = run_eval(ea); });

  PseudoArgs sa;
  auto* pseudo = app.add_subcommand("pseudolabel", "Infection masks from a segmentation model");
  pseudo->add_option("--ckpt", sa.ckpt, "checkpoint with a segmentation head")->required();
  pseudo->add_option("cases", sa.cases, "case list TSV")->required();
  pseudo->add_option("out", sa.out, "output directory")->required();
  pseudo->add_option("--config", sa.config, "run config (input sizes)");
  pseudo->callback([&] { status = run_pseudolabel(sa); });

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a synthetic ball-versus-cube dataset");
  synth->add_option("out", ya.out, "output directory")->required();
  synth->add_option("--count", ya.count, "cases")->capture_default_str();
  synth->add_option("--size", ya.size, "volume side")->capture_default_str();
  synth->add_option("--seed", ya.seed, "seed")->capture_default_str();
  synth->callback([&] { status = run_synth(ya); });

  auto* config = app.add_subcommand("config", "Print every run config key with its default");
  config->callback([&] { status = run_config_keys(); });

  bool quick = false;
  auto* selftest = app.add_subcommand("selftest", "Run the oracle and invariant suite");
  selftest->add_flag("--quick", quick, "skip the full-size forward pass and training run");
  selftest->callback([&] { status = run_selftest(quick); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const ct3d::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return status;
}
