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

// Dataset construction: ingest of frontal source pairs, the three-way
// augmentation workflow with its per-subset pass counts, composition audit
// and group-atomic train/val/test splitting.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ofx/image_io.hpp"
#include "ofx/manifest.hpp"
#include "ofx/plan.hpp"

namespace ofx {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Multipliers {
  int off_axis = 2;
  int unconstrained = 1;
  int off_axis_unconstrained = 2;
};

struct BuildOptions {
  std::uint64_t seed = 0;
  Multipliers multipliers;
  /// Visible-light sources already carry capture degradations: only the
  /// off-axis passes are run.
  bool visible_light_mode = false;
  int target_height = kCanonicalHeight;
  int target_width = kCanonicalWidth;
  int jobs = 1;
};

/// JSON config: {"seed", "multipliers": {"off_axis", "unconstrained",
/// "off_axis_unconstrained"}, "visible_light_mode", "output_dir",
/// "target_size": [h, w]}. Missing keys keep their defaults.
struct DatasetConfig {
  BuildOptions options;
  std::filesystem::path output_dir = "dataset";
};

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig cfg;
  BuildOptions& o = cfg.options;
  o.seed = j.value("seed", o.seed);
  if (j.contains("multipliers")) {
    const auto& m = j.at("multipliers");
    o.multipliers.off_axis = m.value("off_axis", o.multipliers.off_axis);
    o.multipliers.unconstrained = m.value("unconstrained", o.multipliers.unconstrained);
    o.multipliers.off_axis_unconstrained = m.value("off_axis_unconstrained", o.multipliers.off_axis_unconstrained);
  }
  o.visible_light_mode = j.value("visible_light_mode", o.visible_light_mode);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("target_size")) {
    const auto& t = j.at("target_size");
    if (!t.is_array() || t.size() != 2) throw std::invalid_argument("target_size must be [height, width]");
    o.target_height = t[0].get<int>();
    o.target_width = t[1].get<int>();
  }
  const Multipliers& m = o.multipliers;
  if (m.off_axis < 0 || m.unconstrained < 0 || m.off_axis_unconstrained < 0) {
    throw std::invalid_argument("multipliers must be non-negative");
  }
  if (o.target_height < 1 || o.target_width < 1) throw std::invalid_argument("target_size must be positive");
  return cfg;
}

inline nlohmann::json to_json(const DatasetConfig& cfg) {
  const BuildOptions& o = cfg.options;
  return {{"seed", o.seed},
          {"multipliers",
           {{"off_axis", o.multipliers.off_axis},
            {"unconstrained", o.multipliers.unconstrained},
            {"off_axis_unconstrained", o.multipliers.off_axis_unconstrained}}},
          {"visible_light_mode", o.visible_light_mode},
          {"output_dir", cfg.output_dir.string()},
          {"target_size", {o.target_height, o.target_width}}};
}

struct SampleSlot {
  std::string sample_id;
  Subset subset;
};

/// Output samples for one source, in manifest order: the original, then the
/// off-axis, unconstrained and combined passes.
inline std::vector<SampleSlot> sample_slots(const std::string& source_id, const BuildOptions& opt) {
  std::vector<SampleSlot> slots;
  slots.push_back({source_id + "__orig", Subset::original});
  for (int k = 0; k < opt.multipliers.off_axis; ++k) {
    slots.push_back({source_id + "__offaxis_" + std::to_string(k), Subset::off_axis});
  }
  if (!opt.visible_light_mode) {
    for (int k = 0; k < opt.multipliers.unconstrained; ++k) {
      slots.push_back({source_id + "__quality_" + std::to_string(k), Subset::unconstrained});
    }
    for (int k = 0; k < opt.multipliers.off_axis_unconstrained; ++k) {
      slots.push_back({source_id + "__combined_" + std::to_string(k), Subset::off_axis_unconstrained});
    }
  }
  return slots;
}

struct SourcePair {
  Image image;
  Mask mask;
};

/// Core of the workflow, independent of storage. `load(i)` returns source i
/// or nullopt to skip it; `emit(record, image, mask)` receives every output
/// sample (called from worker threads, one source per call sequence).
/// Returned records are ordered by source, then by slot, whatever `jobs` is.
template <typename LoadFn, typename EmitFn>
std::vector<ManifestRecord> build_samples(const std::vector<std::string>& source_ids, const BuildOptions& opt,
                                          LoadFn&& load, EmitFn&& emit) {
  std::vector<std::vector<ManifestRecord>> per_source(source_ids.size());
  parallel_for(source_ids.size(), opt.jobs, [&](std::size_t i) {
    std::optional<SourcePair> src = load(i);
    if (!src) return;
    if (!src->image.same_shape(opt.target_height, opt.target_width)) {
      src->image = resize(src->image, opt.target_height, opt.target_width, Interpolation::bilinear);
    }
    if (!src->mask.same_shape(opt.target_height, opt.target_width)) {
      src->mask = resize(src->mask, opt.target_height, opt.target_width);
    }
    for (const SampleSlot& slot : sample_slots(source_ids[i], opt)) {
      ManifestRecord rec;
      rec.sample_id = slot.sample_id;
      rec.source_id = source_ids[i];
      rec.subset = slot.subset;
      rec.plan = make_plan(opt.seed, slot.sample_id, slot.subset);
      auto [img, mask] = execute_plan(src->image, src->mask, rec.plan);
      rec.output_hash = output_hash(img, mask);
      emit(rec, img, mask);
      per_source[i].push_back(std::move(rec));
    }
  });
  std::vector<ManifestRecord> out;
  for (auto& v : per_source) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

struct BuildResult {
  Manifest manifest;
  int warnings = 0;
};

/// Augments every source pair of `sources` into `output_dir/{images,masks}`
/// and returns the output manifest (base_dir = output_dir). Sources with a
/// missing mask are skipped with a warning; unreadable files abort the build.
inline BuildResult build_dataset(const Manifest& sources, const BuildOptions& opt,
                                 const std::filesystem::path& output_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(output_dir / "images");
  fs::create_directories(output_dir / "masks");

  std::vector<std::string> ids;
  std::vector<const ManifestRecord*> recs;
  std::set<std::string> seen;
  for (const auto& r : sources.records) {
    if (!seen.insert(r.source_id).second) {
      throw std::invalid_argument("duplicate source id in source manifest: " + r.source_id);
    }
    ids.push_back(r.source_id);
    recs.push_back(&r);
  }

  std::atomic<int> warnings{0};
  auto load = [&](std::size_t i) -> std::optional<SourcePair> {
    const ManifestRecord& r = *recs[i];
    if (!fs::exists(sources.mask_file(r))) {
      spdlog::warn("source {} has no mask at {}; skipped", r.source_id, sources.mask_file(r).string());
      ++warnings;
      return std::nullopt;
    }
    Image image = load_image(sources.image_file(r));
    Mask mask = load_mask(sources.mask_file(r));
    return SourcePair{std::move(image), std::move(mask)};
  };
  auto emit = [&](ManifestRecord& rec, const Image& img, const Mask& mask) {
    rec.image_path = "images/" + rec.sample_id + ".png";
    rec.mask_path = "masks/" + rec.sample_id + ".png";
    save_image(output_dir / rec.image_path, img);
    save_mask(output_dir / rec.mask_path, mask);
  };

  BuildResult result;
  result.manifest.base_dir = output_dir;
  result.manifest.records = build_samples(ids, opt, load, emit);
  result.warnings = warnings.load();
  return result;
}

// Composition audit: one row per technique combination.

inline std::string technique_label(const StageFlags& f) {
  std::vector<std::string> parts;
  if (f.warped) parts.push_back("Warp");
  if (f.tilted) parts.push_back("Tilt");
  if (f.contrasted) parts.push_back("Contrast");
  if (f.blurred) parts.push_back("Blur");
  if (f.shadowed) parts.push_back("Shadows");
  if (parts.empty()) return "No augmentation";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += " & " + parts[i];
  return out;
}

struct TableRow {
  const char* label;
  double reference_percent;
  const char* subset;
};

/// Reference composition of the full workflow (approximate percentages).
inline constexpr std::array<TableRow, 12> kReferenceComposition{{
    {"Contrast & Blur", 8.5, "Unconstrained condition subset"},
    {"Contrast & Blur & Shadows", 8.5, "Unconstrained condition subset"},
    {"Warp", 8.5, "Off-axis subset"},
    {"Tilt", 16.5, "Off-axis subset"},
    {"Warp & Tilt", 8.5, "Off-axis subset"},
    {"Warp & Contrast & Blur", 4.0, "Off-axis & Unconstrained conditions subset"},
    {"Tilt & Contrast & Blur", 8.5, "Off-axis & Unconstrained conditions subset"},
    {"Tilt & Contrast & Blur & Shadows", 8.5, "Off-axis & Unconstrained conditions subset"},
    {"Warp & Contrast & Blur & Shadows", 4.0, "Off-axis & Unconstrained conditions subset"},
    {"Warp & Tilt & Contrast & Blur", 4.0, "Off-axis & Unconstrained conditions subset"},
    {"Warp & Tilt & Contrast & Blur & Shadows", 4.0, "Off-axis & Unconstrained conditions subset"},
    {"No augmentation", 16.5, "Original subset"},
}};

struct CompositionAudit {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_technique;
  std::map<Subset, std::size_t> by_subset;

  double percent(const std::string& label) const {
    auto it = by_technique.find(label);
    return total && it != by_technique.end() ? 100.0 * it->second / total : 0.0;
  }
  double percent(Subset s) const {
    auto it = by_subset.find(s);
    return total && it != by_subset.end() ? 100.0 * it->second / total : 0.0;
  }
};

inline CompositionAudit audit_composition(const std::vector<ManifestRecord>& records) {
  CompositionAudit a;
  a.total = records.size();
  for (const auto& r : records) {
    ++a.by_technique[technique_label(r.plan.flags)];
    ++a.by_subset[r.subset];
  }
  return a;
}

inline std::string format_audit(const CompositionAudit& a) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-42s %10s %9s %10s\n", "Augmentation Techniques", "count", "% images",
                "reference");
  os << line;
  std::size_t listed = 0;
  for (const auto& row : kReferenceComposition) {
    auto it = a.by_technique.find(row.label);
    const std::size_t n = it == a.by_technique.end() ? 0 : it->second;
    listed += n;
    std::snprintf(line, sizeof line, "%-42s %10zu %8.2f%% %9.1f%%\n", row.label, n, a.percent(row.label),
                  row.reference_percent);
    os << line;
  }
  if (listed != a.total) {
    std::snprintf(line, sizeof line, "%-42s %10zu\n", "(other combinations)", a.total - listed);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-42s %10zu\n", "Total", a.total);
  os << line;
  return os.str();
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.20;
  double test = 0.10;
};

/// Shuffles source groups with a seeded permutation and assigns whole groups
/// to train/val/test, so every variant of a source lands in one split.
inline Manifest split_dataset(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  if (manifest.records.empty()) throw std::invalid_argument("split_dataset: empty manifest");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: ratios must be non-negative and sum to 1");
  }
  std::set<std::string> unique;
  for (const auto& r : manifest.records) unique.insert(r.source_id);
  std::vector<std::string> groups(unique.begin(), unique.end());

  RandomStream rng(seed, "split", "permutation");
  for (std::size_t i = groups.size(); i > 1; --i) {
    std::swap(groups[i - 1], groups[rng.below(i)]);
  }
  const std::size_t n = groups.size();
  const std::size_t n_train = std::min(n, static_cast<std::size_t>(std::llround(n * ratios.train)));
  const std::size_t n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(n * ratios.val)));

  std::map<std::string, Split> assignment;
  for (std::size_t i = 0; i < n; ++i) {
    assignment[groups[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }
  Manifest out = manifest;
  for (auto& r : out.records) r.split = assignment.at(r.source_id);
  return out;
}

struct IngestResult {
  Manifest manifest;
  std::vector<std::string> unpaired;
};

/// Pairs `src/images/<stem>.{png,pgm}` with `src/masks/<stem>.{png,pgm}`,
/// resizes both to the target (image bilinear, mask nearest) and writes
/// PNGs plus an identity-plan manifest under `out`.
inline IngestResult ingest_directory(const std::filesystem::path& src, const std::filesystem::path& out,
                                     int target_height = kCanonicalHeight, int target_width = kCanonicalWidth) {
  namespace fs = std::filesystem;
  auto list = [](const fs::path& dir) {
    std::map<std::string, fs::path> files;
    if (!fs::is_directory(dir)) return files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && is_supported_image(e.path())) files[e.path().stem().string()] = e.path();
    }
    return files;
  };
  const auto images = list(src / "images");
  const auto masks = list(src / "masks");
  if (!fs::is_directory(src / "images")) throw std::invalid_argument("ingest: missing " + (src / "images").string());

  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  IngestResult result;
  result.manifest.base_dir = out;
  for (const auto& [stem, image_path] : images) {
    auto m = masks.find(stem);
    if (m == masks.end()) {
      result.unpaired.push_back(image_path.string());
      continue;
    }
    const Image img = resize(load_image(image_path), target_height, target_width, Interpolation::bilinear);
    const Mask mask = resize(load_mask(m->second), target_height, target_width);
    ManifestRecord rec;
    rec.sample_id = stem;
    rec.source_id = stem;
    rec.image_path = "images/" + stem + ".png";
    rec.mask_path = "masks/" + stem + ".png";
    rec.plan.sample_id = stem;
    rec.output_hash = output_hash(img, mask);
    save_image(out / rec.image_path, img);
    save_mask(out / rec.mask_path, mask);
    result.manifest.records.push_back(std::move(rec));
  }
  for (const auto& [stem, mask_path] : masks) {
    if (!images.count(stem)) result.unpaired.push_back(mask_path.string());
  }
  for (const auto& u : result.unpaired) spdlog::warn("unpaired file skipped: {}", u);
  return result;
}

}  // namespace ofx
