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
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ofx/augment_quality.hpp"
#include "ofx/random.hpp"

namespace ofx {
namespace {

constexpr double kPi = std::numbers::pi;

double stddev(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / v.size());
}

TEST(ToneMap, OutsideCurveFixedPoints) {
  const ToneCurve out0{Region::outside_iris, 0.0};
  EXPECT_NEAR(tone_map(127.5, out0), 127.5, 1e-9);
  EXPECT_NEAR(tone_map(0.0, out0), 0.0, 1e-9);
  EXPECT_NEAR(tone_map(255.0, out0), 255.0, 1e-9);
}

TEST(ToneMap, PositiveOffsetSaturatesAtTop) {
  // (tanh(1.5) + 0.3 + tanh(1.5)) / (2 tanh(1.5)) ~= 1.166 > 1.
  EXPECT_DOUBLE_EQ(tone_map(255.0, {Region::outside_iris, 0.3}), 255.0);
  EXPECT_GT(tone_map(100.0, {Region::outside_iris, 0.3}), tone_map(100.0, {Region::outside_iris, 0.0}));
  EXPECT_LT(tone_map(100.0, {Region::outside_iris, -0.2}), tone_map(100.0, {Region::outside_iris, 0.0}));
}

TEST(ToneMap, InsideCurveMidpoint) {
  EXPECT_NEAR(tone_map(0.45 * 255.0, {Region::inside_iris, 0.0}), 127.5, 1e-9);
  // The inside offset darkens.
  EXPECT_LT(tone_map(114.75, {Region::inside_iris, 0.1}), 127.5);
}

TEST(ToneMap, NonDecreasingOnAllIntensitiesForAnyOffset) {
  RandomStream rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const ToneCurve out{Region::outside_iris, rng.uniform(-0.2, 0.3)};
    const ToneCurve in{Region::inside_iris, rng.uniform(0.0, 0.2)};
    for (int x = 1; x < 256; ++x) {
      EXPECT_GE(tone_map(x, out), tone_map(x - 1, out));
      EXPECT_GE(tone_map(x, in), tone_map(x - 1, in));
    }
  }
}

TEST(ToneMap, ZeroOffsetCoversFullRangeAndSteepensMidTones) {
  // The analytic-range normalization keeps the [0, 255] range but the tanh
  // is steeper than identity in the middle (slope 3 / (2 tanh 1.5) ~ 1.66),
  // so a uniform histogram is spread, not compressed.
  const ToneCurve out0{Region::outside_iris, 0.0};
  std::vector<double> in, mapped;
  for (int x = 0; x < 256; ++x) {
    in.push_back(x);
    mapped.push_back(tone_map(x, out0));
  }
  EXPECT_NEAR(mapped.front(), 0.0, 1e-9);
  EXPECT_NEAR(mapped.back(), 255.0, 1e-9);
  EXPECT_NEAR(stddev(in), 73.900, 1e-3);
  EXPECT_NEAR(stddev(mapped), 88.890, 1e-3);
  const double slope = (tone_map(128.0, out0) - tone_map(127.0, out0));
  EXPECT_NEAR(slope, 3.0 / (2.0 * std::tanh(1.5)), 1e-3);
}

TEST(ApplyContrast, AllIrisConstantImage) {
  const Image img(4, 5, 114.75);
  const Mask mask(4, 5, 1);
  const Image out = apply_contrast(img, mask, QualityDraws{});
  for (double v : out.pixels()) EXPECT_NEAR(v, 127.5, 1e-9);
}

TEST(ApplyContrast, EmptyMaskUsesOutsideCurveOnly) {
  RandomStream rng(2);
  Image img(6, 6);
  for (double& v : img.pixels()) v = rng.uniform(0, 255);
  QualityDraws d;
  d.contrast_offset_out = 0.12;
  d.contrast_offset_in = 0.19;
  const Image out = apply_contrast(img, Mask(6, 6, 0), d);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.pixels()[i], tone_map(img.pixels()[i], {Region::outside_iris, 0.12}));
  }
}

TEST(ApplyContrast, MatchesPerPixelOracleOnTwoRegionImage) {
  RandomStream rng(9);
  Image img(16, 20);
  Mask mask(16, 20);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 20; ++c) {
      const bool iris = (r - 8) * (r - 8) + (c - 10) * (c - 10) < 30;
      mask(r, c) = iris;
      img(r, c) = iris ? rng.uniform(40, 110) : rng.uniform(120, 230);
    }
  }
  QualityDraws d;
  d.contrast_offset_out = rng.uniform(-0.2, 0.3);
  d.contrast_offset_in = rng.uniform(0.0, 0.2);
  const Image out = apply_contrast(img, mask, d);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 20; ++c) {
      const double x = img(r, c) / 255.0;
      const double t = std::tanh(1.5);
      const double v = mask(r, c) ? std::tanh(3 * (x - 0.45)) - d.contrast_offset_in
                                  : std::tanh(3 * (x - 0.5)) + d.contrast_offset_out;
      const double expected = std::min(1.0, std::max(0.0, (v + t) / (2 * t))) * 255.0;
      EXPECT_NEAR(out(r, c), expected, 1e-9);
    }
  }
}

TEST(ApplyContrast, DimensionMismatchThrows) {
  EXPECT_THROW(apply_contrast(Image(3, 3), Mask(3, 4), QualityDraws{}), std::invalid_argument);
}

std::vector<std::pair<int, int>> nonzero_taps(const Kernel& k) {
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < k.height; ++r)
    for (int c = 0; c < k.width; ++c)
      if (k.at(r, c) != 0.0) cells.emplace_back(r - k.height / 2, c - k.width / 2);
  return cells;
}

TEST(MotionBlurKernel, HorizontalLengthThree) {
  const Kernel k = motion_blur_kernel(3.0, 0.0);
  EXPECT_EQ(k.height, 5);
  EXPECT_EQ(nonzero_taps(k), (std::vector<std::pair<int, int>>{{0, -1}, {0, 0}, {0, 1}}));
  for (auto [dr, dc] : nonzero_taps(k)) EXPECT_DOUBLE_EQ(k.at(dr + 2, dc + 2), 1.0 / 3.0);
}

TEST(MotionBlurKernel, VerticalLengthThree) {
  const Kernel k = motion_blur_kernel(3.0, kPi / 2);
  EXPECT_EQ(nonzero_taps(k), (std::vector<std::pair<int, int>>{{-1, 0}, {0, 0}, {1, 0}}));
}

TEST(MotionBlurKernel, DiagonalLengthFive) {
  const Kernel k = motion_blur_kernel(5.0, kPi / 4);
  const auto cells = nonzero_taps(k);
  ASSERT_EQ(cells.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(cells[i], std::make_pair(i - 2, i - 2));
  for (auto [dr, dc] : cells) EXPECT_DOUBLE_EQ(k.at(dr + k.height / 2, dc + k.width / 2), 0.2);
}

TEST(MotionBlurKernel, AnyDrawIsOddNormalizedAndHasRoundedLengthTaps) {
  RandomStream rng(4);
  for (int i = 0; i < 500; ++i) {
    const double len = rng.uniform(3, 7);
    const Kernel k = motion_blur_kernel(len, rng.uniform(-kPi, kPi));
    EXPECT_EQ(k.height % 2, 1);
    EXPECT_NEAR(k.sum(), 1.0, 1e-9);
    EXPECT_EQ(nonzero_taps(k).size(), static_cast<std::size_t>(std::floor(len + 0.5)));
  }
}

TEST(MotionBlurKernel, RejectsShortLength) { EXPECT_THROW(motion_blur_kernel(0.5, 0.0), std::invalid_argument); }

TEST(ApplyMotionBlur, ConstantImageUnchanged) {
  const Image img(10, 12, 77.0);
  QualityDraws d;
  d.blur_length = 6.3;
  d.blur_angle = 1.1;
  const Image out = apply_motion_blur(img, d);
  for (double v : out.pixels()) EXPECT_NEAR(v, 77.0, 1e-9);
}

TEST(ApplyMotionBlur, ImpulseSpreadsToThreePixels) {
  Image img(7, 7, 0.0);
  img(3, 3) = 255.0;
  QualityDraws d;
  d.blur_length = 3.0;
  d.blur_angle = 0.0;
  const Image out = apply_motion_blur(img, d);
  EXPECT_NEAR(out(3, 2), 85.0, 1e-9);
  EXPECT_NEAR(out(3, 3), 85.0, 1e-9);
  EXPECT_NEAR(out(3, 4), 85.0, 1e-9);
  EXPECT_NEAR(out(3, 1) + out(3, 5) + out(2, 3) + out(4, 3), 0.0, 1e-12);
}

TEST(ApplyMotionBlur, StepEdgeBecomesFivePixelRamp) {
  Image img(3, 12, 0.0);
  for (int r = 0; r < 3; ++r)
    for (int c = 6; c < 12; ++c) img(r, c) = 255.0;
  QualityDraws d;
  d.blur_length = 5.0;
  const Image out = apply_motion_blur(img, d);
  const double expected[12] = {0, 0, 0, 0, 51, 102, 153, 204, 255, 255, 255, 255};
  for (int c = 0; c < 12; ++c) EXPECT_NEAR(out(1, c), expected[c], 1e-9) << c;
}

TEST(ShadowProfile, SymmetricThreeColumns) {
  QualityDraws d;
  d.apply_shadow = true;
  const auto p = shadow_profile(3, d);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0], 0.0, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
  EXPECT_NEAR(p[2], 1.0, 1e-12);
}

TEST(ShadowProfile, NegativeSignMirrors) {
  QualityDraws pos, neg;
  pos.shadow_shift = neg.shadow_shift = 0.0;
  neg.shadow_sign = -1;
  const auto a = shadow_profile(11, pos);
  const auto b = shadow_profile(11, neg);
  for (int i = 0; i < 11; ++i) EXPECT_NEAR(a[i], b[10 - i], 1e-12);
}

TEST(ShadowProfile, ShiftMovesMidpointUp) {
  QualityDraws d;
  d.shadow_shift = 0.3;
  const auto p = shadow_profile(3, d);
  EXPECT_NEAR(p.front(), 0.0, 1e-12);
  EXPECT_NEAR(p.back(), 1.0, 1e-12);
  // (tanh(0.6) - tanh(-0.4)) / (tanh(1.6) - tanh(-0.4))
  const double expected = (std::tanh(0.6) - std::tanh(-0.4)) / (std::tanh(1.6) - std::tanh(-0.4));
  EXPECT_NEAR(p[1], expected, 1e-12);
  EXPECT_GT(p[1], 0.5);
}

TEST(ShadowProfile, RangeAndMonotonicityOverRandomDraws) {
  RandomStream rng(31);
  for (int i = 0; i < 1000; ++i) {
    QualityDraws d;
    d.shadow_sign = rng.sign();
    d.shadow_shift = rng.uniform(-0.3, 0.3);
    d.shadow_lift = rng.uniform(0.0, 0.1);
    const auto p = shadow_profile(160, d);
    for (std::size_t c = 0; c < p.size(); ++c) {
      EXPECT_GE(p[c], 0.0);
      EXPECT_LE(p[c], 1.1);
      if (c > 0) {
        if (d.shadow_sign > 0) EXPECT_GE(p[c], p[c - 1]);
        else EXPECT_LE(p[c], p[c - 1]);
      }
    }
  }
}

TEST(ShadowProfile, RejectsNarrowWidth) { EXPECT_THROW(shadow_profile(1, QualityDraws{}), std::invalid_argument); }

TEST(ApplyShadow, UnitAndZeroCoefficients) {
  QualityDraws d;
  const Image img(4, 3, 128.0);
  const Image out = apply_shadow(img, d);
  for (int r = 0; r < 4; ++r) {
    EXPECT_NEAR(out(r, 0), 0.0, 1e-12);
    EXPECT_NEAR(out(r, 1), 64.0, 1e-12);
    EXPECT_NEAR(out(r, 2), 128.0, 1e-12);
  }
}

TEST(ApplyShadow, LiftAboveOneIsClampedToWhite) {
  QualityDraws d;
  d.shadow_lift = 0.1;
  const Image img(2, 5, 250.0);
  const Image out = apply_shadow(img, d);
  EXPECT_DOUBLE_EQ(out(0, 4), 255.0);
}

TEST(QualityReplay, SameDrawsGiveBitIdenticalOutput) {
  RandomStream rng(77);
  Image img(20, 24);
  Mask mask(20, 24);
  for (double& v : img.pixels()) v = rng.uniform(0, 255);
  for (auto& v : mask.pixels()) v = rng.bernoulli(0.3);
  QualityDraws d{0.1, 0.05, 5.4, -2.0, true, -1, 0.2, 0.07};
  auto run = [&] { return apply_shadow(apply_motion_blur(apply_contrast(img, mask, d), d), d); };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace ofx
