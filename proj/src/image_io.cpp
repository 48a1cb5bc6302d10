/*
 * Copyright 2026 The UCTransNet-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "uctransnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "uctransnet/errors.hpp"

namespace uct {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

void check_image(const RawImage& img, const std::filesystem::path& path) {
  if (img.height == 0 || img.width == 0) throw DataError(path.string() + ": image has zero extent");
  if (img.channels != 1 && img.channels != 3) throw DataError(path.string() + ": only gray or RGB images are supported");
  if (img.max_value != 255 && img.max_value != 65535) throw DataError(path.string() + ": max value must be 255 or 65535");
  if (img.pixels.size() != img.height * img.width * img.channels) {
    throw DataError(path.string() + ": pixel buffer does not match extents");
  }
}

// --- Netpbm --------------------------------------------------------------

std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok += static_cast<char>(ch);
  }
  return tok;
}

RawImage read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const auto magic = next_token(in);
  RawImage img;
  bool ascii;
  if (magic == "P5" || magic == "P2") {
    img.channels = 1;
    ascii = magic == "P2";
  } else if (magic == "P6" || magic == "P3") {
    img.channels = 3;
    ascii = magic == "P3";
  } else {
    throw DataError(path.string() + ": not a PGM/PPM file (magic '" + magic + "')");
  }
  try {
    img.width = std::stoul(next_token(in));
    img.height = std::stoul(next_token(in));
    img.max_value = static_cast<std::uint32_t>(std::stoul(next_token(in)));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed header");
  }
  // Any maxval up to 255 is stored in one byte; rescale to the 8/16-bit range.
  const std::uint32_t raw_max = img.max_value;
  if (raw_max == 0 || raw_max > 65535) throw DataError(path.string() + ": invalid max value");
  const bool wide = raw_max > 255;
  const std::size_t n = img.height * img.width * img.channels;
  img.pixels.resize(n);
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      auto tok = next_token(in);
      if (tok.empty()) throw DataError(path.string() + ": truncated pixel data");
      img.pixels[i] = static_cast<std::uint16_t>(std::stoul(tok));
    }
  } else {
    const std::size_t bytes = n * (wide ? 2 : 1);
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) throw DataError(path.string() + ": truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = wide ? static_cast<std::uint16_t>(buf[2 * i] << 8 | buf[2 * i + 1]) : buf[i];
    }
  }
  img.max_value = wide ? 65535 : 255;
  if (raw_max != img.max_value) {
    for (auto& p : img.pixels) {
      if (p > raw_max) throw DataError(path.string() + ": sample exceeds max value");
      p = static_cast<std::uint16_t>((static_cast<std::uint32_t>(p) * img.max_value + raw_max / 2) / raw_max);
    }
  }
  return img;
}

void write_netpbm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n" << img.max_value << "\n";
  std::vector<unsigned char> buf;
  const bool wide = img.max_value > 255;
  buf.reserve(img.pixels.size() * (wide ? 2 : 1));
  for (auto p : img.pixels) {
    if (wide) buf.push_back(static_cast<unsigned char>(p >> 8));
    buf.push_back(static_cast<unsigned char>(p & 0xff));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("short write to " + path.string());
}

// --- PNG -----------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

RawImage read_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  RawImage img;
  std::vector<unsigned char> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian rows
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  img.max_value = out_depth == 16 ? 65535 : 255;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (std::size_t r = 0; r < img.height; ++r) rows[r] = data.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (img.channels != 1 && img.channels != 3) throw DataError(path.string() + ": unsupported PNG channel layout");
  const std::size_t n = img.height * img.width * img.channels;
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = out_depth == 16 ? static_cast<std::uint16_t>(data[2 * i] | data[2 * i + 1] << 8) : data[i];
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RawImage& img) {
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  const bool wide = img.max_value > 255;
  const std::size_t rowbytes = img.width * img.channels * (wide ? 2 : 1);
  std::vector<unsigned char> data(rowbytes * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (wide) {
      data[2 * i] = static_cast<unsigned char>(img.pixels[i] >> 8);
      data[2 * i + 1] = static_cast<unsigned char>(img.pixels[i] & 0xff);
    } else {
      data[i] = static_cast<unsigned char>(img.pixels[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t r = 0; r < img.height; ++r) rows[r] = data.data() + r * rowbytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), wide ? 16 : 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

RawImage read_image(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  RawImage img;
  if (ext == ".png") {
    img = read_png(path);
  } else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    img = read_netpbm(path);
  } else {
    throw DataError(path.string() + ": unsupported image extension '" + ext + "'");
  }
  check_image(img, path);
  return img;
}

void write_image(const std::filesystem::path& path, const RawImage& image) {
  check_image(image, path);
  const auto ext = lower_ext(path);
  if (ext == ".png") {
    write_png(path, image);
  } else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    write_netpbm(path, image);
  } else {
    throw DataError(path.string() + ": unsupported image extension '" + ext + "'");
  }
}

}  // namespace uct
