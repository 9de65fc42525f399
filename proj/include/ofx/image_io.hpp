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

// 8-bit single-channel PNG and binary PGM (P5) reading/writing.
// Quantization to bytes happens here and nowhere else.

#include <png.h>

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ofx/imaging.hpp"

namespace ofx {

/// Raised for unreadable, truncated or malformed image files.
class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayBytes {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;
};

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(clamp_intensity(v)));
}

inline GrayBytes to_bytes(const Image& img) {
  GrayBytes out{img.height(), img.width(), {}};
  out.data.reserve(img.size());
  for (double v : img.pixels()) out.data.push_back(quantize(v));
  return out;
}

inline GrayBytes to_bytes(const Mask& mask) {
  GrayBytes out{mask.height(), mask.width(), {}};
  out.data.reserve(mask.size());
  for (std::uint8_t v : mask.pixels()) out.data.push_back(v ? 255 : 0);
  return out;
}

inline Image image_from_bytes(const GrayBytes& g) {
  std::vector<double> px(g.data.begin(), g.data.end());
  return Image(g.height, g.width, std::move(px));
}

/// {0, 255} -> {0, 1}, thresholded at 128.
inline Mask mask_from_bytes(const GrayBytes& g) {
  std::vector<std::uint8_t> px(g.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = g.data[i] >= 128 ? 1 : 0;
  return Mask(g.height, g.width, std::move(px));
}

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

}  // namespace detail

inline GrayBytes read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw ImageIoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayBytes out{static_cast<int>(image.height), static_cast<int>(image.width), {}};
  out.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const GrayBytes& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

inline GrayBytes read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());

  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };

  if (next_token() != "P5") throw ImageIoError("not a binary PGM (P5): " + path.string());
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ImageIoError("malformed PGM header: " + path.string());
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw ImageIoError("unsupported PGM header: " + path.string());
  }
  GrayBytes out{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height)};
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.data.size())) {
    throw ImageIoError("truncated PGM: " + path.string());
  }
  if (maxval != 255) {
    for (auto& v : out.data) v = static_cast<std::uint8_t>(std::lround(255.0 * std::min<int>(v, maxval) / maxval));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const GrayBytes& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot create " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw ImageIoError("write failed: " + path.string());
}

inline bool is_supported_image(const std::filesystem::path& p) {
  const std::string ext = detail::lower_extension(p);
  return ext == ".png" || ext == ".pgm";
}

inline GrayBytes read_gray(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw ImageIoError("unsupported image extension: " + path.string());
}

inline void write_gray(const std::filesystem::path& path, const GrayBytes& img) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pgm") return write_pgm(path, img);
  throw ImageIoError("unsupported image extension: " + path.string());
}

inline Image load_image(const std::filesystem::path& path) { return image_from_bytes(read_gray(path)); }
inline Mask load_mask(const std::filesystem::path& path) { return mask_from_bytes(read_gray(path)); }
inline void save_image(const std::filesystem::path& path, const Image& img) { write_gray(path, to_bytes(img)); }
inline void save_mask(const std::filesystem::path& path, const Mask& mask) { write_gray(path, to_bytes(mask)); }

}  // namespace ofx
