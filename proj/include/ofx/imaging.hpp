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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ofx {

inline constexpr int kCanonicalHeight = 120;
inline constexpr int kCanonicalWidth = 160;

struct ImageTag {};
struct MaskTag {};
struct VoidTag {};
struct ProbabilityTag {};

/// Row-major 2-D grid. The tag keeps images, masks and void maps apart at
/// compile time even when they share a pixel type.
template <typename T, typename Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{}) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw std::invalid_argument("grid dimensions must be positive, got " + std::to_string(height) + "x" +
                                  std::to_string(width));
    }
    pixels_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }
  Grid(int height, int width, std::vector<T> pixels) : Grid(height, width) {
    if (pixels.size() != pixels_.size()) {
      throw std::invalid_argument("pixel buffer size does not match grid dimensions");
    }
    pixels_ = std::move(pixels);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  T& operator()(int row, int col) { return pixels_[index(row, col)]; }
  const T& operator()(int row, int col) const { return pixels_[index(row, col)]; }

  std::span<T> pixels() & { return pixels_; }
  std::span<const T> pixels() const& { return pixels_; }
  // A span over a temporary grid would dangle.
  std::span<const T> pixels() const&& = delete;

  bool same_shape(int h, int w) const { return h == height_ && w == width_; }
  template <typename U, typename OtherTag>
  bool same_shape(const Grid<U, OtherTag>& other) const {
    return same_shape(other.height(), other.width());
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> pixels_;
};

/// Intensities are real-valued in [0, 255]; quantization happens only at file I/O.
using Image = Grid<double, ImageTag>;
/// Binary segmentation map, 1 = iris.
using Mask = Grid<std::uint8_t, MaskTag>;
/// Marks pixels that received no source sample during a geometric transform.
using VoidMap = Grid<std::uint8_t, VoidTag>;
/// Per-pixel iris probability in [0, 1], as produced by the network.
using ProbabilityMap = Grid<double, ProbabilityTag>;

inline double clamp_intensity(double v) { return std::clamp(v, 0.0, 255.0); }

inline void clamp_intensities(Image& img) {
  for (double& v : img.pixels()) v = clamp_intensity(v);
}

inline bool is_binary(const Mask& mask) {
  return std::all_of(mask.pixels().begin(), mask.pixels().end(), [](std::uint8_t v) { return v <= 1; });
}

template <typename Tag>
Grid<std::uint8_t, MaskTag> binarize_at_half(const Grid<double, Tag>& grid) {
  Mask out(grid.height(), grid.width());
  auto src = grid.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= 0.5 ? 1 : 0;
  return out;
}

struct Kernel {
  int height = 1;
  int width = 1;
  std::vector<double> taps{1.0};

  Kernel() = default;
  Kernel(int h, int w, std::vector<double> t) : height(h), width(w), taps(std::move(t)) {
    if (h < 1 || w < 1 || h % 2 == 0 || w % 2 == 0) {
      throw std::invalid_argument("kernel dimensions must be odd, got " + std::to_string(h) + "x" +
                                  std::to_string(w));
    }
    if (taps.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
      throw std::invalid_argument("kernel tap count does not match dimensions");
    }
  }

  double at(int row, int col) const { return taps[static_cast<std::size_t>(row) * width + col]; }
  double sum() const {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
  }
};

enum class Interpolation { bilinear, bicubic, nearest };
enum class Padding { zero, edge_clamp };

namespace detail {

// Catmull-Rom (a = -0.5).
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Taps {
  int index[4];
  double weight[4];
  int count;
};

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

inline Taps sample_taps(int dst, int src_extent, double scale, Interpolation method) {
  Taps taps{};
  const double src = (dst + 0.5) * scale - 0.5;
  switch (method) {
    case Interpolation::nearest: {
      taps.count = 1;
      taps.index[0] = clamp_index(static_cast<int>(std::floor(src + 0.5)), src_extent);
      taps.weight[0] = 1.0;
      break;
    }
    case Interpolation::bilinear: {
      const double base = std::floor(src);
      const double frac = src - base;
      const int i0 = static_cast<int>(base);
      taps.count = 2;
      taps.index[0] = clamp_index(i0, src_extent);
      taps.index[1] = clamp_index(i0 + 1, src_extent);
      taps.weight[0] = 1.0 - frac;
      taps.weight[1] = frac;
      break;
    }
    case Interpolation::bicubic: {
      const double base = std::floor(src);
      const double frac = src - base;
      const int i0 = static_cast<int>(base);
      taps.count = 4;
      for (int k = 0; k < 4; ++k) {
        taps.index[k] = clamp_index(i0 - 1 + k, src_extent);
        taps.weight[k] = cubic_weight(frac - (k - 1));
      }
      break;
    }
  }
  return taps;
}

template <typename T, typename Tag>
Grid<double, Tag> resize_real(const Grid<T, Tag>& img, int out_h, int out_w, Interpolation method) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize target must be at least 1x1");
  }
  const double sy = static_cast<double>(img.height()) / out_h;
  const double sx = static_cast<double>(img.width()) / out_w;
  std::vector<Taps> col_taps(out_w);
  for (int c = 0; c < out_w; ++c) col_taps[c] = sample_taps(c, img.width(), sx, method);

  Grid<double, Tag> out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const Taps rt = sample_taps(r, img.height(), sy, method);
    for (int c = 0; c < out_w; ++c) {
      const Taps& ct = col_taps[c];
      double acc = 0.0;
      for (int i = 0; i < rt.count; ++i) {
        double row_acc = 0.0;
        for (int j = 0; j < ct.count; ++j) {
          row_acc += ct.weight[j] * static_cast<double>(img(rt.index[i], ct.index[j]));
        }
        acc += rt.weight[i] * row_acc;
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Resamples with pixel-center alignment: src = (dst + 0.5) * scale - 0.5,
/// edge-clamped. Output intensities are clamped to [0, 255].
inline Image resize(const Image& img, int out_h, int out_w, Interpolation method) {
  Image out = detail::resize_real(img, out_h, out_w, method);
  clamp_intensities(out);
  return out;
}

/// Masks always go through nearest-neighbour and are re-binarized at 0.5.
inline Mask resize(const Mask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize target must be at least 1x1");
  }
  Mask out(out_h, out_w);
  const double sy = static_cast<double>(mask.height()) / out_h;
  const double sx = static_cast<double>(mask.width()) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const int sr = detail::sample_taps(r, mask.height(), sy, Interpolation::nearest).index[0];
    for (int c = 0; c < out_w; ++c) {
      const int sc = detail::sample_taps(c, mask.width(), sx, Interpolation::nearest).index[0];
      out(r, c) = mask(sr, sc) >= 1 ? 1 : 0;
    }
  }
  return out;
}

/// Same-size 2-D correlation. The kernel is anchored at its center tap.
inline Image convolve(const Image& img, const Kernel& k, Padding padding) {
  if (k.height % 2 == 0 || k.width % 2 == 0) {
    throw std::invalid_argument("kernel dimensions must be odd");
  }
  const int ry = k.height / 2;
  const int rx = k.width / 2;
  Image out(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < k.height; ++i) {
        int sr = r + i - ry;
        const bool row_out = sr < 0 || sr >= img.height();
        if (row_out && padding == Padding::zero) continue;
        sr = detail::clamp_index(sr, img.height());
        for (int j = 0; j < k.width; ++j) {
          int sc = c + j - rx;
          const bool col_out = sc < 0 || sc >= img.width();
          if (col_out && padding == Padding::zero) continue;
          sc = detail::clamp_index(sc, img.width());
          acc += k.at(i, j) * img(sr, sc);
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

/// Normalized Gaussian sampled at integer offsets around the center.
inline Kernel gaussian_kernel(int size = 3, double sigma = 2.0) {
  if (size < 1 || size % 2 == 0 || !(sigma > 0.0)) {
    throw std::invalid_argument("gaussian kernel needs an odd size and positive sigma");
  }
  const int r = size / 2;
  std::vector<double> taps;
  taps.reserve(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      taps.push_back(w);
      total += w;
    }
  }
  for (double& t : taps) t /= total;
  return Kernel(size, size, std::move(taps));
}

}  // namespace ofx
