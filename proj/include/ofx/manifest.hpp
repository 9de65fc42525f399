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

// Dataset manifest: one CSV row per sample,
//   sample_id,source_id,image_path,mask_path,subset,split,plan_json
// Paths are stored relative to the manifest's directory.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ofx/plan.hpp"

namespace ofx {

enum class Split { unassigned, train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::unassigned: return "";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

inline Split split_from_string(const std::string& s) {
  if (s.empty()) return Split::unassigned;
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

struct ManifestRecord {
  std::string sample_id;
  std::string source_id;
  std::string image_path;
  std::string mask_path;
  Subset subset = Subset::original;
  Split split = Split::unassigned;
  AugmentationPlan plan;
  /// Hash of the quantized outputs, recorded in plan_json for replay checks.
  std::string output_hash;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::filesystem::path image_file(const ManifestRecord& r) const { return base_dir / r.image_path; }
  std::filesystem::path mask_file(const ManifestRecord& r) const { return base_dir / r.mask_path; }
};

inline constexpr const char* kManifestHeader = "sample_id,source_id,image_path,mask_path,subset,split,plan_json";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += '"';
  return out;
}

/// Splits one RFC 4180 record; quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quoted CSV field");
  return fields;
}

}  // namespace detail

inline std::string plan_json_string(const ManifestRecord& r) {
  nlohmann::json j = to_json(r.plan);
  if (!r.output_hash.empty()) j["output_hash"] = r.output_hash;
  return j.dump();
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot create manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : m.records) {
    out << detail::csv_field(r.sample_id) << ',' << detail::csv_field(r.source_id) << ','
        << detail::csv_field(r.image_path) << ',' << detail::csv_field(r.mask_path) << ',' << to_string(r.subset)
        << ',' << to_string(r.split) << ',' << detail::csv_field(plan_json_string(r)) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw std::runtime_error("unexpected manifest header in " + path.string());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 7) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields, got " +
                               std::to_string(f.size()));
    }
    ManifestRecord r;
    r.sample_id = f[0];
    r.source_id = f[1];
    r.image_path = f[2];
    r.mask_path = f[3];
    r.subset = subset_from_string(f[4]);
    r.split = split_from_string(f[5]);
    const auto j = nlohmann::json::parse(f[6]);
    r.plan = plan_from_json(j);
    if (j.contains("output_hash")) r.output_hash = j.at("output_hash").get<std::string>();
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace ofx
