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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace uct {

// Decoded raster with interleaved channels (1 = gray, 3 = RGB), row-major.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::uint32_t max_value = 255;  // 255 or 65535
  std::vector<std::uint16_t> pixels;

  std::uint16_t at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
};

// Dispatches on the extension: .png, .pgm/.ppm (binary P5/P6 and ASCII
// P2/P3). PNG palettes and alpha are expanded/stripped to gray or RGB.
RawImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RawImage& image);

}  // namespace uct
