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

// Off-axis, near-perspective geometry: monotone column/row re-positioning
// followed by a contracting resize, and a projective tilt of the two top
// corners. Image and mask always share one geometric path.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ofx/imaging.hpp"

namespace ofx {

/// Raised when a transform's geometry collapses (collinear target corners).
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StretchDirection { toward_start, toward_end };
enum class Axis { columns, rows };

struct WarpDraws {
  double col_lambda = 1.0;  // U(2, 17)
  double row_lambda = 1.0;  // U(2, 17)
  StretchDirection col_direction = StretchDirection::toward_end;
  StretchDirection row_direction = StretchDirection::toward_end;

  friend bool operator==(const WarpDraws&, const WarpDraws&) = default;
};

/// 1-based target positions y[1..s] of every source line on the stretched
/// canvas. positions[j] holds y[j + 1].
struct ColumnMap {
  std::vector<int> positions;

  int length() const { return static_cast<int>(positions.size()); }
  int extent() const { return positions.back(); }
};

/// Linear increment schedule between lambda and 1/lambda (toward_start) or
/// between 1 and lambda (toward_end), cumulative-summed and rounded half up.
/// Collisions are pushed one position forward so the map stays strictly
/// increasing.
inline ColumnMap build_axis_map(int s, double lambda, StretchDirection direction) {
  if (s < 2) throw std::invalid_argument("build_axis_map: axis length must be >= 2");
  if (!(lambda >= 1.0)) throw std::invalid_argument("build_axis_map: lambda must be >= 1");

  const double denom = static_cast<double>(s - 1);
  auto increment = [&](int t) {
    if (direction == StretchDirection::toward_start) return ((1.0 / lambda) - lambda) / denom * t + lambda;
    return (lambda - 1.0) / denom * t + 1.0;
  };

  ColumnMap map;
  map.positions.resize(s);
  map.positions[0] = 1;
  double a = 1.0;
  for (int j = 1; j < s; ++j) {
    a += increment(j);
    int y = static_cast<int>(std::floor(a + 0.5));
    if (y <= map.positions[j - 1]) y = map.positions[j - 1] + 1;
    map.positions[j] = y;
  }
  return map;
}

namespace detail {

template <typename T, typename Tag>
Grid<T, Tag> transpose(const Grid<T, Tag>& g) {
  Grid<T, Tag> out(g.width(), g.height());
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) out(c, r) = g(r, c);
  return out;
}

inline void check_map(const ColumnMap& map, int extent) {
  if (map.length() != extent) {
    throw std::invalid_argument("stretch: map length " + std::to_string(map.length()) +
                                " does not match image extent " + std::to_string(extent));
  }
}

inline Image stretch_columns_canvas(const Image& img, const ColumnMap& map) {
  check_map(map, img.width());
  const auto& y = map.positions;
  Image canvas(img.height(), map.extent());
  for (int r = 0; r < img.height(); ++r) {
    for (int j = 0; j < map.length(); ++j) {
      canvas(r, y[j] - 1) = img(r, j);
      if (j + 1 == map.length()) break;
      const int p0 = y[j];
      const int p1 = y[j + 1];
      const double span = p1 - p0;
      for (int i = p0 + 1; i < p1; ++i) {
        canvas(r, i - 1) = (img(r, j) * (p1 - i) + img(r, j + 1) * (i - p0)) / span;
      }
    }
  }
  return canvas;
}

inline Mask stretch_columns_canvas(const Mask& mask, const ColumnMap& map) {
  check_map(map, mask.width());
  const auto& y = map.positions;
  Mask canvas(mask.height(), map.extent());
  for (int r = 0; r < mask.height(); ++r) {
    for (int j = 0; j < map.length(); ++j) {
      canvas(r, y[j] - 1) = mask(r, j);
      if (j + 1 == map.length()) break;
      const int p0 = y[j];
      const int p1 = y[j + 1];
      for (int i = p0 + 1; i < p1; ++i) {
        canvas(r, i - 1) = (i - p0) <= (p1 - i) ? mask(r, j) : mask(r, j + 1);
      }
    }
  }
  return canvas;
}

}  // namespace detail

/// The stretched canvas before the contracting resize. Gap lines between two
/// placed lines are the inverse-distance blend of their neighbours.
inline Image stretch_canvas(const Image& img, const ColumnMap& map, Axis axis) {
  if (axis == Axis::columns) return detail::stretch_columns_canvas(img, map);
  return detail::transpose(detail::stretch_columns_canvas(detail::transpose(img), map));
}

/// Mask variant: gaps take the nearer placed line (ties go to the earlier one).
inline Mask stretch_canvas(const Mask& mask, const ColumnMap& map, Axis axis) {
  if (axis == Axis::columns) return detail::stretch_columns_canvas(mask, map);
  return detail::transpose(detail::stretch_columns_canvas(detail::transpose(mask), map));
}

/// Stretch onto the canvas, then contract back to the original extent with
/// bicubic interpolation.
inline Image stretch_axis(const Image& img, const ColumnMap& map, Axis axis) {
  const Image canvas = stretch_canvas(img, map, axis);
  return resize(canvas, img.height(), img.width(), Interpolation::bicubic);
}

inline Mask stretch_axis(const Mask& mask, const ColumnMap& map, Axis axis) {
  const Mask canvas = stretch_canvas(mask, map, axis);
  return resize(canvas, mask.height(), mask.width());
}

inline Image warp_image(const Image& img, const WarpDraws& draws) {
  const Image cols = stretch_axis(img, build_axis_map(img.width(), draws.col_lambda, draws.col_direction), Axis::columns);
  return stretch_axis(cols, build_axis_map(img.height(), draws.row_lambda, draws.row_direction), Axis::rows);
}

inline Mask warp_mask(const Mask& mask, const WarpDraws& draws) {
  const Mask cols =
      stretch_axis(mask, build_axis_map(mask.width(), draws.col_lambda, draws.col_direction), Axis::columns);
  return stretch_axis(cols, build_axis_map(mask.height(), draws.row_lambda, draws.row_direction), Axis::rows);
}

/// Columns first, then rows; the mask follows the same maps.
inline std::pair<Image, Mask> warp_sample(const Image& img, const Mask& mask, const WarpDraws& draws) {
  if (!img.same_shape(mask)) throw std::invalid_argument("warp_sample: image and mask dimensions differ");
  return {warp_image(img, draws), warp_mask(mask, draws)};
}

enum class TiltDirection { up_left, up_right };

/// New positions of the top-left (a, b) and top-right (c, d) corners in
/// normalized coordinates: origin top-left, x rightward, y downward. Bottom
/// corners stay pinned.
struct TiltDraws {
  TiltDirection direction = TiltDirection::up_left;
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;

  friend bool operator==(const TiltDraws&, const TiltDraws&) = default;
};

struct Homography {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();

  Eigen::Vector2d apply(double x, double y) const {
    const Eigen::Vector3d p = matrix * Eigen::Vector3d(x, y, 1.0);
    return {p.x() / p.z(), p.y() / p.z()};
  }
};

/// Homography taking the unit square TL(0,0), TR(1,0), BR(1,1), BL(0,1) to
/// (a,b), (c,d), (1,1), (0,1), from the usual 8-unknown linear system.
inline Homography tilt_homography(const TiltDraws& draws) {
  const double src[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const double dst[4][2] = {{draws.a, draws.b}, {draws.c, draws.d}, {1, 1}, {0, 1}};

  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        const double cross = (dst[j][0] - dst[i][0]) * (dst[k][1] - dst[i][1]) -
                             (dst[j][1] - dst[i][1]) * (dst[k][0] - dst[i][0]);
        if (std::abs(cross) < 1e-12) throw DegenerateGeometry("tilt target quad has collinear corners");
      }
    }
  }

  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> rhs;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1];
    const double u = dst[i][0], v = dst[i][1];
    A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    rhs(2 * i) = u;
    rhs(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(rhs);

  Homography H;
  H.matrix << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  if (!(std::abs(H.matrix.determinant()) > 1e-12)) throw DegenerateGeometry("tilt homography is singular");
  return H;
}

/// Inverse-maps every destination pixel center through H^-1 and samples the
/// nearest source pixel. Pixels whose preimage leaves the unit square are
/// marked in the returned void map.
template <typename T, typename Tag>
std::pair<Grid<T, Tag>, VoidMap> projective_sample(const Grid<T, Tag>& src, const Homography& H) {
  const Eigen::Matrix3d inv = H.matrix.inverse();
  const int h = src.height();
  const int w = src.width();
  Grid<T, Tag> out(h, w);
  VoidMap voids(h, w, 0);
  for (int r = 0; r < h; ++r) {
    const double v = (r + 0.5) / h;
    for (int c = 0; c < w; ++c) {
      const double u = (c + 0.5) / w;
      const Eigen::Vector3d p = inv * Eigen::Vector3d(u, v, 1.0);
      bool inside = p.z() > 0.0;
      double us = 0.0, vs = 0.0;
      if (inside) {
        us = p.x() / p.z();
        vs = p.y() / p.z();
        inside = us >= 0.0 && us <= 1.0 && vs >= 0.0 && vs <= 1.0;
      }
      if (!inside) {
        voids(r, c) = 1;
        continue;
      }
      const int sc = std::min(static_cast<int>(std::floor(us * w)), w - 1);
      const int sr = std::min(static_cast<int>(std::floor(vs * h)), h - 1);
      out(r, c) = src(sr, sc);
    }
  }
  return {std::move(out), std::move(voids)};
}

/// Void pixels take the nearest valid value along their column and along
/// their row; where both exist the two are averaged. Pixels whose row and
/// column are both entirely void are resolved by repeating the pass with the
/// newly filled pixels counted as valid. No smoothing.
inline Image extend_voids(const Image& img, const VoidMap& voids) {
  if (!img.same_shape(voids)) throw std::invalid_argument("fill_voids: void map dimensions differ");
  if (std::all_of(voids.pixels().begin(), voids.pixels().end(), [](std::uint8_t v) { return v != 0; })) {
    throw std::invalid_argument("fill_voids: every pixel is void");
  }
  const int h = img.height();
  const int w = img.width();
  Image out = img;
  VoidMap pending = voids;

  constexpr int kNone = -1;
  while (std::any_of(pending.pixels().begin(), pending.pixels().end(), [](std::uint8_t v) { return v != 0; })) {
    Image col_val(h, w, 0.0), row_val(h, w, 0.0);
    VoidMap col_has(h, w, 0), row_has(h, w, 0);

    // Nearest valid pixel per line: scan forward and backward, keep the closer
    // (ties go to the earlier index).
    auto nearest = [&](int n, auto valid_at, auto value_at, auto store) {
      std::vector<int> before(n, kNone), after(n, kNone);
      int last = kNone;
      for (int i = 0; i < n; ++i) {
        if (valid_at(i)) last = i;
        before[i] = last;
      }
      last = kNone;
      for (int i = n - 1; i >= 0; --i) {
        if (valid_at(i)) last = i;
        after[i] = last;
      }
      for (int i = 0; i < n; ++i) {
        if (valid_at(i)) continue;
        int pick = kNone;
        if (before[i] != kNone && after[i] != kNone) {
          pick = (i - before[i]) <= (after[i] - i) ? before[i] : after[i];
        } else if (before[i] != kNone) {
          pick = before[i];
        } else if (after[i] != kNone) {
          pick = after[i];
        }
        if (pick != kNone) store(i, value_at(pick));
      }
    };

    for (int c = 0; c < w; ++c) {
      nearest(
          h, [&](int r) { return pending(r, c) == 0; }, [&](int r) { return out(r, c); },
          [&](int r, double v) {
            col_val(r, c) = v;
            col_has(r, c) = 1;
          });
    }
    for (int r = 0; r < h; ++r) {
      nearest(
          w, [&](int c) { return pending(r, c) == 0; }, [&](int c) { return out(r, c); },
          [&](int c, double v) {
            row_val(r, c) = v;
            row_has(r, c) = 1;
          });
    }

    VoidMap next = pending;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!pending(r, c)) continue;
        if (col_has(r, c) && row_has(r, c)) {
          out(r, c) = 0.5 * (col_val(r, c) + row_val(r, c));
        } else if (col_has(r, c)) {
          out(r, c) = col_val(r, c);
        } else if (row_has(r, c)) {
          out(r, c) = row_val(r, c);
        } else {
          continue;
        }
        next(r, c) = 0;
      }
    }
    pending = std::move(next);
  }
  return out;
}

/// extend_voids followed by a 3x3, sigma 2 Gaussian applied to the void
/// pixels only (edge-clamped; valid pixels keep their values).
inline Image fill_voids(const Image& img, const VoidMap& voids) {
  const Image filled = extend_voids(img, voids);
  const Image smooth = convolve(filled, gaussian_kernel(3, 2.0), Padding::edge_clamp);
  Image out = filled;
  auto v = voids.pixels();
  auto s = smooth.pixels();
  auto o = out.pixels();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (v[i]) o[i] = s[i];
  }
  return out;
}

inline Image tilt_image(const Image& img, const TiltDraws& draws) {
  auto [sampled, voids] = projective_sample(img, tilt_homography(draws));
  const bool any_void = std::any_of(voids.pixels().begin(), voids.pixels().end(), [](std::uint8_t v) { return v != 0; });
  return any_void ? fill_voids(sampled, voids) : sampled;
}

/// Mask voids are black.
inline Mask tilt_mask(const Mask& mask, const TiltDraws& draws) {
  auto [sampled, voids] = projective_sample(mask, tilt_homography(draws));
  auto s = sampled.pixels();
  auto v = voids.pixels();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = v[i] ? 0 : (s[i] ? 1 : 0);
  return sampled;
}

inline std::pair<Image, Mask> apply_tilt(const Image& img, const Mask& mask, const TiltDraws& draws) {
  if (!img.same_shape(mask)) throw std::invalid_argument("apply_tilt: image and mask dimensions differ");
  return {tilt_image(img, draws), tilt_mask(mask, draws)};
}

}  // namespace ofx
