/**
 * Copyright 2026 The ofx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Command implementations behind the `ofx` tool. Each command takes its
// resolved arguments, writes its artifacts and human-readable output, and
// throws on error. Argument parsing lives in tools/ofx.cpp.

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ofx/dataset.hpp"
#include "ofx/eval.hpp"
#include "ofx/fcn.hpp"

namespace ofx {

namespace fs = std::filesystem;

/// Parses "HxW" (e.g. "120x160") into positive {height, width}.
inline std::pair<int, int> parse_size(const std::string& s) {
  static const std::regex pattern(R"(^\s*([0-9]{1,6})\s*[xX]\s*([0-9]{1,6})\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, pattern)) throw std::invalid_argument("size must look like HxW, got '" + s + "'");
  const int h = std::stoi(m[1]), w = std::stoi(m[2]);
  if (h < 1 || w < 1) throw std::invalid_argument("size must be positive, got '" + s + "'");
  return {h, w};
}

/// 1426636800 -> "1,426,636,800".
inline std::string group_digits(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

/// Compact scientific form for rates: 1e-4, 5e-5, 2.5e-3.
inline std::string short_sci(double v) {
  if (v == 0.0 || !std::isfinite(v)) return std::to_string(v);
  int e = static_cast<int>(std::floor(std::log10(std::abs(v))));
  double mant = v / std::pow(10.0, e);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", mant);
  if (std::string(buf) == "10") {
    ++e;
    std::snprintf(buf, sizeof buf, "1");
  }
  return std::string(buf) + "e" + std::to_string(e);
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed config " + path.string() + ": " + e.what());
  }
}

inline void log_resolved(const char* command, const nlohmann::json& config) {
  spdlog::info("{} resolved config: {}", command, config.dump());
}

// ingest

struct IngestArgs {
  fs::path src;
  fs::path out;
  int height = kCanonicalHeight;
  int width = kCanonicalWidth;
};

/// Returns the number of warnings (unpaired files).
inline std::size_t cmd_ingest(const IngestArgs& a, std::ostream& os) {
  log_resolved("ingest", {{"src", a.src.string()}, {"out", a.out.string()}, {"target_size", {a.height, a.width}}});
  const IngestResult r = ingest_directory(a.src, a.out, a.height, a.width);
  write_manifest(a.out / "manifest.csv", r.manifest);
  os << "ingested " << r.manifest.records.size() << " pairs into " << (a.out / "manifest.csv").string() << "\n";
  if (!r.unpaired.empty()) os << "skipped " << r.unpaired.size() << " unpaired files\n";
  return r.unpaired.size();
}

// augment

struct AugmentArgs {
  fs::path manifest;
  std::optional<fs::path> config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool visible_light = false;
};

inline DatasetConfig resolve_augment(const AugmentArgs& a) {
  DatasetConfig cfg = dataset_config_from_json(a.config ? read_json_file(*a.config) : nlohmann::json::object());
  if (a.out) cfg.output_dir = *a.out;
  if (a.seed) cfg.options.seed = *a.seed;
  if (a.jobs) cfg.options.jobs = *a.jobs;
  if (a.visible_light) cfg.options.visible_light_mode = true;
  return cfg;
}

inline std::size_t cmd_augment(const AugmentArgs& a, std::ostream& os) {
  const DatasetConfig cfg = resolve_augment(a);
  nlohmann::json resolved = to_json(cfg);
  resolved["jobs"] = cfg.options.jobs;
  resolved["manifest"] = a.manifest.string();
  log_resolved("augment", resolved);
  const Manifest sources = read_manifest(a.manifest);
  const BuildResult r = build_dataset(sources, cfg.options, cfg.output_dir);
  const fs::path out_manifest = cfg.output_dir / "manifest.csv";
  write_manifest(out_manifest, r.manifest);
  os << format_audit(audit_composition(r.manifest.records));
  os << "wrote " << r.manifest.records.size() << " records to " << out_manifest.string() << "\n";
  return static_cast<std::size_t>(r.warnings);
}

// split

struct SplitArgs {
  fs::path manifest;
  std::optional<fs::path> out;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

inline std::size_t cmd_split(const SplitArgs& a, std::ostream& os) {
  const fs::path out = a.out.value_or(a.manifest);
  log_resolved("split", {{"manifest", a.manifest.string()},
                         {"out", out.string()},
                         {"seed", a.seed},
                         {"ratios", {a.ratios.train, a.ratios.val, a.ratios.test}}});
  Manifest m = split_dataset(read_manifest(a.manifest), a.ratios, a.seed);
  std::map<Split, std::size_t> counts;
  for (const auto& r : m.records) ++counts[r.split];
  // Paths are relative to the manifest directory; rebase when writing elsewhere.
  const fs::path in_dir = fs::absolute(a.manifest).parent_path();
  const fs::path out_dir = fs::absolute(out).parent_path();
  if (in_dir != out_dir) {
    for (auto& r : m.records) {
      r.image_path = fs::relative(in_dir / r.image_path, out_dir).generic_string();
      r.mask_path = fs::relative(in_dir / r.mask_path, out_dir).generic_string();
    }
  }
  write_manifest(out, m);
  os << "train " << counts[Split::train] << ", val " << counts[Split::val] << ", test " << counts[Split::test]
     << " records -> " << out.string() << "\n";
  return 0;
}

// train / finetune

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<fs::path> from;
  bool finetune = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<std::uint64_t> max_steps;
};

inline constexpr double kTrainLearningRate = 1e-4;
inline constexpr double kFinetuneLearningRate = 5e-5;

/// Defaults, then the config's "seed" and "train" object, then flags.
inline TrainOptions resolve_train(const TrainArgs& a) {
  TrainOptions o;
  o.lr = a.finetune ? kFinetuneLearningRate : kTrainLearningRate;
  if (a.config) {
    const nlohmann::json j = read_json_file(*a.config);
    o.seed = j.value("seed", o.seed);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      o.lr = t.value(a.finetune ? "finetune_lr" : "lr", o.lr);
      o.beta1 = t.value("beta1", o.beta1);
      o.beta2 = t.value("beta2", o.beta2);
      o.epsilon = t.value("epsilon", o.epsilon);
      o.batch_size = t.value("batch_size", o.batch_size);
      o.max_epochs = t.value("max_epochs", o.max_epochs);
      o.patience = t.value("patience", o.patience);
      o.max_steps = t.value("max_steps", o.max_steps);
    }
  }
  if (a.seed) o.seed = *a.seed;
  if (a.lr) o.lr = *a.lr;
  if (a.batch_size) o.batch_size = *a.batch_size;
  if (a.max_epochs) o.max_epochs = *a.max_epochs;
  if (a.patience) o.patience = *a.patience;
  if (a.max_steps) o.max_steps = *a.max_steps;
  return o;
}

inline std::vector<TrainingSample<float>> load_split(const Manifest& m, Split split) {
  std::vector<TrainingSample<float>> out;
  for (const auto& r : m.records) {
    if (r.split == split) out.push_back(make_training_sample<float>(load_image(m.image_file(r)), load_mask(m.mask_file(r))));
  }
  return out;
}

inline std::size_t cmd_train(const TrainArgs& a, std::ostream& os) {
  if (a.finetune && !a.from) throw std::invalid_argument("finetune requires --from <checkpoint>");
  const TrainOptions o = resolve_train(a);
  log_resolved(a.finetune ? "finetune" : "train",
               {{"manifest", a.manifest.string()},
                {"out", a.out.string()},
                {"from", a.from ? a.from->string() : ""},
                {"seed", o.seed},
                {"lr", o.lr},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"epsilon", o.epsilon},
                {"batch_size", o.batch_size},
                {"max_epochs", o.max_epochs},
                {"patience", o.patience},
                {"max_steps", o.max_steps}});
  os << (a.finetune ? "finetune" : "train") << " lr " << short_sci(o.lr) << "\n";

  const Manifest m = read_manifest(a.manifest);
  const auto train_set = load_split(m, Split::train);
  if (train_set.empty()) throw std::invalid_argument("manifest has no train records; run `ofx split` first");
  const auto val_set = load_split(m, Split::val);
  std::size_t warnings = 0;
  if (val_set.empty()) {
    spdlog::warn("no validation records; selecting checkpoints on training loss");
    ++warnings;
  }

  NetworkParameters<float> init;
  if (a.from) {
    init = load_checkpoint(*a.from).params;
    if (init.specs() != canonical_network()) spdlog::info("starting from a non-canonical network layout");
    spdlog::info("loaded {} (parameter hash {:016x})", a.from->string(), parameter_hash(init));
  } else {
    init = glorot_uniform<float>(canonical_network(), o.seed);
  }

  fs::create_directories(a.out);
  const fs::path ckpt = a.out / "checkpoint.bin";
  const auto result = train(init, train_set, val_set, o, [&](const NetworkParameters<float>& p, const AdamState<float>& s) {
    save_checkpoint(ckpt, p, &s);
  });
  write_loss_csv(a.out / "loss.csv", result.history);
  char line[160];
  std::snprintf(line, sizeof line, "%zu steps over %d epochs, best %s loss %.6g at epoch %d%s\n",
                result.history.size(), result.epochs, val_set.empty() ? "train" : "val", result.best_loss,
                result.best_epoch + 1, result.early_stopped ? " (early stop)" : "");
  os << line << "checkpoint " << ckpt.string() << "\n";
  return warnings;
}

// eval

struct EvalArgs {
  fs::path manifest;
  fs::path checkpoint;
  SpectrumMode mode = SpectrumMode::nir;
  std::optional<double> threshold;
  /// Records to score: "train", "val", "test" or "all".
  std::string split = "test";
  std::optional<fs::path> out;
  int jobs = 1;
};

inline nlohmann::json cmd_eval(const EvalArgs& a, std::ostream& os) {
  const double threshold = a.threshold.value_or(default_threshold(a.mode));
  log_resolved("eval", {{"manifest", a.manifest.string()},
                        {"checkpoint", a.checkpoint.string()},
                        {"mode", a.mode == SpectrumMode::nir ? "nir" : "visible"},
                        {"threshold", threshold},
                        {"split", a.split},
                        {"jobs", a.jobs}});
  const Manifest m = read_manifest(a.manifest);
  std::vector<const ManifestRecord*> records;
  const bool all = a.split == "all";
  const Split wanted = all ? Split::unassigned : split_from_string(a.split);
  for (const auto& r : m.records) {
    if (all || r.split == wanted) records.push_back(&r);
  }
  if (records.empty()) throw std::invalid_argument("no records in split '" + a.split + "'");
  const NetworkParameters<float> params = load_checkpoint(a.checkpoint).params;

  std::vector<ImageMetrics> per_image(records.size());
  parallel_for(records.size(), a.jobs, [&](std::size_t i) {
    const ManifestRecord& r = *records[i];
    const Mask truth = load_mask(m.mask_file(r));
    const Mask pred = binarize(predict(params, load_image(m.image_file(r))), threshold);
    per_image[i] = metrics(confusion(pred, truth));
  });
  const nlohmann::json report = to_json(aggregate(std::move(per_image)));
  if (a.out) {
    std::ofstream out(*a.out);
    out << report.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write report " + a.out->string());
  }
  os << report.dump(2) << "\n";
  return report;
}

// complexity

inline ComplexityReport cmd_complexity(const std::string& input, std::ostream& os) {
  const auto [h, w] = parse_size(input);
  log_resolved("complexity", {{"input", {h, w}}});
  const ComplexityReport r = complexity(canonical_network(), h, w);
  char mb[32], mmac[32];
  std::snprintf(mb, sizeof mb, "%.2f", r.megabytes());
  std::snprintf(mmac, sizeof mmac, "%.2f", r.total_macs / 1e6);
  os << "layers: " << canonical_network().size() << "\n"
     << "parameters: " << group_digits(r.total_parameters) << "\n"
     << "parameter size: " << group_digits(r.parameter_bytes) << " B (" << mb << " MB)\n"
     << "MAC at " << h << "x" << w << ": " << group_digits(r.total_macs) << " (" << mmac << "M)\n";
  return r;
}

}  // namespace ofx
