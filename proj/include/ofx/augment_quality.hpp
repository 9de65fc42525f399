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

// Capture-quality degradations: region-wise contrast mapping, linear motion
// blur and a column-wise shadow ramp. None of these move the iris, so the
// mask is never touched here.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ofx/imaging.hpp"

namespace ofx {

struct QualityDraws {
  double contrast_offset_out = 0.0;  // U(-0.2, 0.3)
  double contrast_offset_in = 0.0;   // U(0, 0.2)
  double blur_length = 3.0;          // U(3, 7) pixels
  double blur_angle = 0.0;           // U(-pi, pi)
  bool apply_shadow = false;
  int shadow_sign = 1;               // {-1, +1}
  double shadow_shift = 0.0;         // U(-0.3, 0.3)
  double shadow_lift = 0.0;          // U(0, 0.1)

  friend bool operator==(const QualityDraws&, const QualityDraws&) = default;
};

enum class Region { inside_iris, outside_iris };

struct ToneCurve {
  Region region = Region::outside_iris;
  double offset = 0.0;
};

/// Maps an intensity through the region's tanh curve. The tanh term is
/// normalized by the fixed affine map [-tanh(1.5), tanh(1.5)] -> [0, 1];
/// the offset is added before normalization and the result clamped after.
inline double tone_map(double x, const ToneCurve& curve) {
  static const double half_range = std::tanh(1.5);
  x = clamp_intensity(x);
  const double v = curve.region == Region::outside_iris ? std::tanh(3.0 * (x / 255.0 - 0.5)) + curve.offset
                                                        : std::tanh(3.0 * (x / 255.0 - 0.45)) - curve.offset;
  const double norm = std::clamp((v + half_range) / (2.0 * half_range), 0.0, 1.0);
  return norm * 255.0;
}

inline Image apply_contrast(const Image& img, const Mask& mask, const QualityDraws& draws) {
  if (!img.same_shape(mask)) {
    throw std::invalid_argument("apply_contrast: image and mask dimensions differ");
  }
  const ToneCurve inside{Region::inside_iris, draws.contrast_offset_in};
  const ToneCurve outside{Region::outside_iris, draws.contrast_offset_out};
  Image out(img.height(), img.width());
  auto src = img.pixels();
  auto m = mask.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = tone_map(src[i], m[i] ? inside : outside);
  return out;
}

/// Rasterized line of round(length) cells through the kernel center, unit
/// weights, normalized to sum 1. The line spans round(length) cells along its
/// dominant axis; angle is measured with rows growing downward.
inline Kernel motion_blur_kernel(double length, double angle) {
  if (!(length >= 1.0)) {
    throw std::invalid_argument("motion blur length must be >= 1");
  }
  const int cells = static_cast<int>(std::floor(length + 0.5));
  const int radius = (cells + 1) / 2;
  const int size = 2 * radius + 1;

  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  const double dominant = std::max(std::abs(cs), std::abs(sn));
  const double dx = cs / dominant;
  const double dy = sn / dominant;

  std::vector<double> taps(static_cast<std::size_t>(size) * size, 0.0);
  // One cell per step along the dominant axis; half-pixel steps would add
  // staircase cells on diagonals.
  const double half = (cells - 1) / 2.0;
  for (int k = 0; k < cells; ++k) {
    const double u = -half + k;
    const int col = static_cast<int>(std::floor(u * dx + 0.5)) + radius;
    const int row = static_cast<int>(std::floor(u * dy + 0.5)) + radius;
    taps[static_cast<std::size_t>(row) * size + col] = 1.0;
  }
  double total = 0.0;
  for (double t : taps) total += t;
  for (double& t : taps) t /= total;
  return Kernel(size, size, std::move(taps));
}

inline Image apply_motion_blur(const Image& img, const QualityDraws& draws) {
  Image out = convolve(img, motion_blur_kernel(draws.blur_length, draws.blur_angle), Padding::edge_clamp);
  clamp_intensities(out);
  return out;
}

/// Per-column multiplicative shadow coefficients, min-max normalized tanh ramp
/// plus lift, clamped to [0, 1.1].
inline std::vector<double> shadow_profile(int width, const QualityDraws& draws) {
  if (width < 2) {
    throw std::invalid_argument("shadow_profile needs width >= 2");
  }
  std::vector<double> coeff(width);
  for (int c = 0; c < width; ++c) {
    const double x = static_cast<double>(c) / (width - 1);
    coeff[c] = std::tanh(2.0 * draws.shadow_sign * (x - 0.5 + draws.shadow_shift));
  }
  const auto [lo_it, hi_it] = std::minmax_element(coeff.begin(), coeff.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  for (double& v : coeff) {
    const double norm = span > 0.0 ? (v - lo) / span : 0.0;
    v = std::clamp(norm + draws.shadow_lift, 0.0, 1.1);
  }
  return coeff;
}

inline Image apply_shadow(const Image& img, const QualityDraws& draws) {
  const std::vector<double> coeff = shadow_profile(img.width(), draws);
  Image out(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) out(r, c) = clamp_intensity(img(r, c) * coeff[c]);
  }
  return out;
}

}  // namespace ofx
