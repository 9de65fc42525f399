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

// Augmentation plans: the fully materialized random draws for one sample,
// their JSON provenance form, and replay.

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "ofx/augment_offaxis.hpp"
#include "ofx/augment_quality.hpp"
#include "ofx/image_io.hpp"
#include "ofx/random.hpp"

namespace ofx {

enum class Subset { original, unconstrained, off_axis, off_axis_unconstrained };

inline const char* to_string(Subset s) {
  switch (s) {
    case Subset::original: return "original";
    case Subset::unconstrained: return "unconstrained";
    case Subset::off_axis: return "off_axis";
    case Subset::off_axis_unconstrained: return "off_axis_unconstrained";
  }
  return "?";
}

inline Subset subset_from_string(const std::string& s) {
  if (s == "original") return Subset::original;
  if (s == "unconstrained") return Subset::unconstrained;
  if (s == "off_axis") return Subset::off_axis;
  if (s == "off_axis_unconstrained") return Subset::off_axis_unconstrained;
  throw std::invalid_argument("unknown subset: " + s);
}

struct StageFlags {
  bool warped = false;
  bool tilted = false;
  bool contrasted = false;
  bool blurred = false;
  bool shadowed = false;

  bool geometric() const { return warped || tilted; }
  bool quality() const { return contrasted || blurred || shadowed; }
  friend bool operator==(const StageFlags&, const StageFlags&) = default;
};

struct AugmentationPlan {
  std::string sample_id;
  Subset subset = Subset::original;
  StageFlags flags;
  std::optional<WarpDraws> warp;
  std::optional<TiltDraws> tilt;
  std::optional<QualityDraws> quality;

  friend bool operator==(const AugmentationPlan&, const AugmentationPlan&) = default;
};

/// Checks the workflow invariants tying flags, draws and subset together.
inline bool plan_is_consistent(const AugmentationPlan& p) {
  const StageFlags& f = p.flags;
  if (f.warped != p.warp.has_value() || f.tilted != p.tilt.has_value()) return false;
  if ((f.contrasted || f.blurred) != p.quality.has_value()) return false;
  if (p.quality && p.quality->apply_shadow != f.shadowed) return false;
  if (f.shadowed && !(f.contrasted && f.blurred)) return false;
  switch (p.subset) {
    case Subset::original: return !f.geometric() && !f.quality();
    case Subset::off_axis: return f.geometric() && !f.quality();
    case Subset::unconstrained: return f.contrasted && f.blurred && !f.geometric();
    case Subset::off_axis_unconstrained: return f.geometric() && f.contrasted && f.blurred;
  }
  return false;
}

struct OffAxisDraw {
  bool warped = false;
  bool tilted = false;
  std::optional<WarpDraws> warp;
  std::optional<TiltDraws> tilt;
};

/// Warp with probability 0.5; tilt always when not warped, otherwise with
/// probability 0.5. Event probabilities: warp-only 1/4, warp+tilt 1/4,
/// tilt-only 1/2.
inline OffAxisDraw draw_offaxis_plan(RandomStream& rng) {
  OffAxisDraw out;
  out.warped = rng.bernoulli(0.5);
  out.tilted = out.warped ? rng.bernoulli(0.5) : true;
  if (out.warped) {
    WarpDraws w;
    w.col_direction = rng.bernoulli(0.5) ? StretchDirection::toward_start : StretchDirection::toward_end;
    w.row_direction = rng.bernoulli(0.5) ? StretchDirection::toward_start : StretchDirection::toward_end;
    w.col_lambda = rng.uniform(2.0, 17.0);
    w.row_lambda = rng.uniform(2.0, 17.0);
    out.warp = w;
  }
  if (out.tilted) {
    TiltDraws t;
    if (rng.bernoulli(0.5)) {
      t.direction = TiltDirection::up_left;
      t.a = rng.uniform(0.15, 0.45);
      t.b = rng.uniform(0.15, 0.45);
      t.c = rng.uniform(0.9, 1.0);
      t.d = rng.uniform(0.0, 0.1);
    } else {
      t.direction = TiltDirection::up_right;
      t.a = rng.uniform(0.0, 0.1);
      t.b = rng.uniform(0.0, 0.1);
      t.c = rng.uniform(0.55, 1.0);
      t.d = rng.uniform(0.15, 0.45);
    }
    out.tilt = t;
  }
  return out;
}

/// Contrast and blur always; shadow with probability 0.5. Shadow draws are
/// only taken when the shadow is applied.
inline QualityDraws draw_quality_plan(RandomStream& rng) {
  constexpr double kPi = 3.14159265358979323846;
  QualityDraws q;
  q.contrast_offset_out = rng.uniform(-0.2, 0.3);
  q.contrast_offset_in = rng.uniform(0.0, 0.2);
  q.blur_length = rng.uniform(3.0, 7.0);
  q.blur_angle = rng.uniform(-kPi, kPi);
  q.apply_shadow = rng.bernoulli(0.5);
  if (q.apply_shadow) {
    q.shadow_sign = rng.sign();
    q.shadow_shift = rng.uniform(-0.3, 0.3);
    q.shadow_lift = rng.uniform(0.0, 0.1);
  }
  return q;
}

inline constexpr const char* kOffAxisStage = "off_axis";
inline constexpr const char* kQualityStage = "quality";

/// Materializes every draw for one sample. Each stage reads its own stream
/// derived from (seed, sample id, stage tag).
inline AugmentationPlan make_plan(std::uint64_t global_seed, const std::string& sample_id, Subset subset) {
  AugmentationPlan plan;
  plan.sample_id = sample_id;
  plan.subset = subset;
  const bool geometric = subset == Subset::off_axis || subset == Subset::off_axis_unconstrained;
  const bool quality = subset == Subset::unconstrained || subset == Subset::off_axis_unconstrained;
  if (geometric) {
    RandomStream rng(global_seed, sample_id, kOffAxisStage);
    OffAxisDraw d = draw_offaxis_plan(rng);
    plan.flags.warped = d.warped;
    plan.flags.tilted = d.tilted;
    plan.warp = d.warp;
    plan.tilt = d.tilt;
  }
  if (quality) {
    RandomStream rng(global_seed, sample_id, kQualityStage);
    plan.quality = draw_quality_plan(rng);
    plan.flags.contrasted = true;
    plan.flags.blurred = true;
    plan.flags.shadowed = plan.quality->apply_shadow;
  }
  return plan;
}

/// Geometric stages first (warp, then tilt), then contrast, blur, shadow.
/// Only the geometric stages touch the mask.
inline std::pair<Image, Mask> execute_plan(const Image& img, const Mask& mask, const AugmentationPlan& plan) {
  if (!plan_is_consistent(plan)) {
    throw std::invalid_argument("execute_plan: inconsistent plan for sample " + plan.sample_id);
  }
  if (!img.same_shape(mask)) throw std::invalid_argument("execute_plan: image and mask dimensions differ");
  Image out_img = img;
  Mask out_mask = mask;
  if (plan.flags.warped) std::tie(out_img, out_mask) = warp_sample(out_img, out_mask, *plan.warp);
  if (plan.flags.tilted) std::tie(out_img, out_mask) = apply_tilt(out_img, out_mask, *plan.tilt);
  if (plan.flags.contrasted) out_img = apply_contrast(out_img, out_mask, *plan.quality);
  if (plan.flags.blurred) out_img = apply_motion_blur(out_img, *plan.quality);
  if (plan.flags.shadowed) out_img = apply_shadow(out_img, *plan.quality);
  return {std::move(out_img), std::move(out_mask)};
}

/// Hash of what lands on disk: dimensions plus quantized image and mask bytes.
inline std::string output_hash(const Image& img, const Mask& mask) {
  const GrayBytes ib = to_bytes(img);
  const GrayBytes mb = to_bytes(mask);
  std::uint64_t h = fnv1a64(std::to_string(img.height()) + "x" + std::to_string(img.width()));
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(ib.data.data()), ib.data.size()), h);
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(mb.data.data()), mb.data.size()), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// JSON provenance. Every draw is written as a decimal literal that parses
// back to the identical double.

inline nlohmann::json to_json(const WarpDraws& w) {
  auto dir = [](StretchDirection d) { return d == StretchDirection::toward_start ? "toward_start" : "toward_end"; };
  return {{"col_lambda", w.col_lambda},
          {"row_lambda", w.row_lambda},
          {"col_direction", dir(w.col_direction)},
          {"row_direction", dir(w.row_direction)}};
}

inline nlohmann::json to_json(const TiltDraws& t) {
  return {{"direction", t.direction == TiltDirection::up_left ? "up_left" : "up_right"},
          {"a", t.a},
          {"b", t.b},
          {"c", t.c},
          {"d", t.d}};
}

inline nlohmann::json to_json(const QualityDraws& q) {
  nlohmann::json j = {{"contrast_offset_out", q.contrast_offset_out},
                      {"contrast_offset_in", q.contrast_offset_in},
                      {"blur_length", q.blur_length},
                      {"blur_angle", q.blur_angle},
                      {"apply_shadow", q.apply_shadow}};
  if (q.apply_shadow) {
    j["shadow_sign"] = q.shadow_sign;
    j["shadow_shift"] = q.shadow_shift;
    j["shadow_lift"] = q.shadow_lift;
  }
  return j;
}

inline nlohmann::json to_json(const AugmentationPlan& p) {
  nlohmann::json j;
  j["sample_id"] = p.sample_id;
  j["subset"] = to_string(p.subset);
  j["stages"] = {{"warped", p.flags.warped},
                 {"tilted", p.flags.tilted},
                 {"contrasted", p.flags.contrasted},
                 {"blurred", p.flags.blurred},
                 {"shadowed", p.flags.shadowed}};
  if (p.warp) j["warp"] = to_json(*p.warp);
  if (p.tilt) j["tilt"] = to_json(*p.tilt);
  if (p.quality) j["quality"] = to_json(*p.quality);
  return j;
}

inline WarpDraws warp_from_json(const nlohmann::json& j) {
  auto dir = [](const std::string& s) {
    if (s == "toward_start") return StretchDirection::toward_start;
    if (s == "toward_end") return StretchDirection::toward_end;
    throw std::invalid_argument("unknown stretch direction: " + s);
  };
  WarpDraws w;
  w.col_lambda = j.at("col_lambda").get<double>();
  w.row_lambda = j.at("row_lambda").get<double>();
  w.col_direction = dir(j.at("col_direction").get<std::string>());
  w.row_direction = dir(j.at("row_direction").get<std::string>());
  return w;
}

inline TiltDraws tilt_from_json(const nlohmann::json& j) {
  TiltDraws t;
  const auto dir = j.at("direction").get<std::string>();
  if (dir == "up_left") t.direction = TiltDirection::up_left;
  else if (dir == "up_right") t.direction = TiltDirection::up_right;
  else throw std::invalid_argument("unknown tilt direction: " + dir);
  t.a = j.at("a").get<double>();
  t.b = j.at("b").get<double>();
  t.c = j.at("c").get<double>();
  t.d = j.at("d").get<double>();
  return t;
}

inline QualityDraws quality_from_json(const nlohmann::json& j) {
  QualityDraws q;
  q.contrast_offset_out = j.at("contrast_offset_out").get<double>();
  q.contrast_offset_in = j.at("contrast_offset_in").get<double>();
  q.blur_length = j.at("blur_length").get<double>();
  q.blur_angle = j.at("blur_angle").get<double>();
  q.apply_shadow = j.at("apply_shadow").get<bool>();
  if (q.apply_shadow) {
    q.shadow_sign = j.at("shadow_sign").get<int>();
    q.shadow_shift = j.at("shadow_shift").get<double>();
    q.shadow_lift = j.at("shadow_lift").get<double>();
  }
  return q;
}

inline AugmentationPlan plan_from_json(const nlohmann::json& j) {
  AugmentationPlan p;
  p.sample_id = j.at("sample_id").get<std::string>();
  p.subset = subset_from_string(j.at("subset").get<std::string>());
  const auto& s = j.at("stages");
  p.flags = {s.at("warped").get<bool>(), s.at("tilted").get<bool>(), s.at("contrasted").get<bool>(),
             s.at("blurred").get<bool>(), s.at("shadowed").get<bool>()};
  if (j.contains("warp")) p.warp = warp_from_json(j.at("warp"));
  if (j.contains("tilt")) p.tilt = tilt_from_json(j.at("tilt"));
  if (j.contains("quality")) p.quality = quality_from_json(j.at("quality"));
  if (!plan_is_consistent(p)) throw std::invalid_argument("plan JSON violates workflow invariants: " + p.sample_id);
  return p;
}

}  // namespace ofx
