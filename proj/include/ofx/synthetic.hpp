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

// Seeded synthetic eye images: bright sclera/skin background, a mid-gray
// iris disk and a dark pupil. The mask marks the iris annulus.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "ofx/imaging.hpp"
#include "ofx/random.hpp"

namespace ofx {

struct SyntheticEye {
  Image image;
  Mask mask;
};

struct EyeGeometry {
  double center_row = 0;
  double center_col = 0;
  double iris_radius = 0;
  double pupil_radius = 0;
  double background = 200;
  double iris = 110;
  double pupil = 25;
};

inline SyntheticEye render_eye(int height, int width, const EyeGeometry& g, double noise_amplitude = 0.0,
                               RandomStream* rng = nullptr) {
  SyntheticEye out{Image(height, width), Mask(height, width)};
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double dy = r + 0.5 - g.center_row;
      const double dx = c + 0.5 - g.center_col;
      const double d = std::sqrt(dx * dx + dy * dy);
      double v = g.background;
      if (d <= g.pupil_radius) {
        v = g.pupil;
      } else if (d <= g.iris_radius) {
        v = g.iris;
        out.mask(r, c) = 1;
      }
      if (rng && noise_amplitude > 0) v += rng->uniform(-noise_amplitude, noise_amplitude);
      out.image(r, c) = clamp_intensity(v);
    }
  }
  return out;
}

/// Draws a random but fully visible eye for `sample_id`.
inline SyntheticEye synthetic_eye(std::uint64_t seed, const std::string& sample_id, int height = kCanonicalHeight,
                                  int width = kCanonicalWidth) {
  RandomStream rng(seed, sample_id, "synthetic");
  const double extent = std::min(height, width);
  EyeGeometry g;
  g.iris_radius = rng.uniform(0.22, 0.38) * extent;
  g.pupil_radius = g.iris_radius * rng.uniform(0.25, 0.5);
  g.center_row = rng.uniform(g.iris_radius + 1, height - g.iris_radius - 1);
  g.center_col = rng.uniform(g.iris_radius + 1, width - g.iris_radius - 1);
  g.background = rng.uniform(170, 230);
  g.iris = rng.uniform(90, 140);
  g.pupil = rng.uniform(10, 40);
  return render_eye(height, width, g, 8.0, &rng);
}

}  // namespace ofx
