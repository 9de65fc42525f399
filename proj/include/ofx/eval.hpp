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

// Thresholding of probability maps and the six segmentation metrics, with
// per-image mean and population standard deviation.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ofx/imaging.hpp"

namespace ofx {

enum class SpectrumMode { nir, visible };

inline double default_threshold(SpectrumMode mode) { return mode == SpectrumMode::nir ? 0.55 : 0.4; }

inline SpectrumMode mode_from_string(const std::string& s) {
  if (s == "nir") return SpectrumMode::nir;
  if (s == "visible") return SpectrumMode::visible;
  throw std::invalid_argument("unknown mode: " + s + " (expected nir or visible)");
}

/// Pixels strictly greater than the threshold become iris.
inline Mask binarize(const ProbabilityMap& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binarize: threshold must lie in (0, 1)");
  Mask out(prob.height(), prob.width());
  auto src = prob.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1 : 0;
  return out;
}

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Iris is the positive class.
inline ConfusionCounts confusion(const Mask& pred, const Mask& truth) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("confusion: prediction and truth dimensions differ");
  ConfusionCounts c;
  auto p = pred.pixels();
  auto t = truth.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i]) {
      p[i] ? ++c.tp : ++c.fn;
    } else {
      p[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

enum class Metric { accuracy, sensitivity, specificity, precision, npv, f1 };

inline constexpr std::array<Metric, 6> kAllMetrics{Metric::accuracy,  Metric::sensitivity, Metric::specificity,
                                                   Metric::precision, Metric::npv,         Metric::f1};

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::sensitivity: return "sensitivity";
    case Metric::specificity: return "specificity";
    case Metric::precision: return "precision";
    case Metric::npv: return "npv";
    case Metric::f1: return "f1";
  }
  return "?";
}

/// A metric value; nullopt marks a zero denominator.
using MetricValue = std::optional<double>;

struct ImageMetrics {
  std::array<MetricValue, 6> values;

  const MetricValue& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  MetricValue& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
};

inline ImageMetrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("metrics: empty confusion counts");
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> MetricValue {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  ImageMetrics m;
  m[Metric::accuracy] = ratio(c.tp + c.tn, c.total());
  m[Metric::sensitivity] = ratio(c.tp, c.tp + c.fn);
  m[Metric::specificity] = ratio(c.tn, c.tn + c.fp);
  m[Metric::precision] = ratio(c.tp, c.tp + c.fp);
  m[Metric::npv] = ratio(c.tn, c.tn + c.fn);
  const MetricValue& p = m[Metric::precision];
  const MetricValue& s = m[Metric::sensitivity];
  // Both components zero: the harmonic mean's limit, 0.
  if (p && s) m[Metric::f1] = *p + *s > 0.0 ? 2.0 * *p * *s / (*p + *s) : 0.0;
  return m;
}

struct MetricSummary {
  /// nullopt when every image is undefined for this metric.
  std::optional<double> mu;
  std::optional<double> sigma;
  std::size_t undefined_count = 0;
  std::size_t defined_count = 0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  std::array<MetricSummary, 6> summary;

  const MetricSummary& operator[](Metric m) const { return summary[static_cast<std::size_t>(m)]; }
};

/// Mean and population standard deviation over images with a defined value.
inline MetricsReport aggregate(std::vector<ImageMetrics> per_image) {
  if (per_image.empty()) throw std::invalid_argument("aggregate: no images");
  MetricsReport r;
  for (Metric m : kAllMetrics) {
    MetricSummary& s = r.summary[static_cast<std::size_t>(m)];
    double sum = 0.0;
    for (const auto& im : per_image) {
      if (im[m]) {
        sum += *im[m];
        ++s.defined_count;
      } else {
        ++s.undefined_count;
      }
    }
    if (s.defined_count == 0) continue;
    const double mu = sum / static_cast<double>(s.defined_count);
    double ss = 0.0;
    for (const auto& im : per_image) {
      if (im[m]) ss += (*im[m] - mu) * (*im[m] - mu);
    }
    s.mu = mu;
    s.sigma = std::sqrt(ss / static_cast<double>(s.defined_count));
  }
  r.per_image = std::move(per_image);
  return r;
}

/// {"<metric>": {"mu", "sigma", "undefined_count"}, ...}; mu and sigma are
/// null when the metric is undefined on every image.
inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const MetricSummary& s = r[m];
    j[to_string(m)] = {{"mu", s.mu ? nlohmann::json(*s.mu) : nlohmann::json(nullptr)},
                       {"sigma", s.sigma ? nlohmann::json(*s.sigma) : nlohmann::json(nullptr)},
                       {"undefined_count", s.undefined_count}};
  }
  return j;
}

/// Checks the report layout: all six metrics, mu/sigma in [0, 1] or null, a
/// non-negative integer undefined_count.
inline bool is_valid_report(const nlohmann::json& j) {
  if (!j.is_object()) return false;
  for (Metric m : kAllMetrics) {
    if (!j.contains(to_string(m))) return false;
    const auto& o = j.at(to_string(m));
    if (!o.is_object() || !o.contains("mu") || !o.contains("sigma") || !o.contains("undefined_count")) return false;
    for (const char* key : {"mu", "sigma"}) {
      const auto& v = o.at(key);
      if (v.is_null()) continue;
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) return false;
    }
    if (!o.at("undefined_count").is_number_unsigned()) return false;
  }
  return true;
}

}  // namespace ofx
