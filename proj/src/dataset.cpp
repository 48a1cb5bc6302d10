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

#include "uctransnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "uctransnet/errors.hpp"
#include "uctransnet/image_io.hpp"

namespace uct {

namespace fs = std::filesystem;

void validate_sample(const Sample& s, std::size_t num_classes) {
  if (s.image.rank() != 3) throw DataError(s.id + ": image must be CxHxW, got " + shape_str(s.image.shape()));
  if (s.image.dim(1) != s.mask.height() || s.image.dim(2) != s.mask.width()) {
    throw DataError(s.id + ": image " + std::to_string(s.image.dim(1)) + "x" + std::to_string(s.image.dim(2)) +
                    " and mask " + extent_str(s.mask) + " differ in size");
  }
  for (int v : s.mask.labels()) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
      throw DataError(s.id + ": mask label " + std::to_string(v) + " outside 0.." + std::to_string(num_classes - 1));
    }
  }
}

namespace {

struct PairPaths {
  fs::path image, mask;
};

// "<id>.img.png" -> ("<id>", "img")
bool split_name(const fs::path& p, std::string& id, std::string& role) {
  const auto stem = p.stem().string();
  const auto dot = stem.rfind('.');
  if (dot == std::string::npos) return false;
  id = stem.substr(0, dot);
  role = stem.substr(dot + 1);
  return !id.empty() && (role == "img" || role == "mask");
}

}  // namespace

Dataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  if (options.binarize && options.num_classes != 2) throw ConfigError("binarize requires num_classes = 2");
  std::map<std::string, PairPaths> pairs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string id, role;
    if (!split_name(entry.path(), id, role)) continue;
    auto& slot = role == "img" ? pairs[id].image : pairs[id].mask;
    if (!slot.empty()) throw DataError("sample '" + id + "' has two " + role + " files");
    slot = entry.path();
  }
  Dataset out;
  for (const auto& [id, paths] : pairs) {
    if (paths.mask.empty()) throw DataError("sample '" + id + "' has an image but no mask");
    if (paths.image.empty()) throw DataError("sample '" + id + "' has a mask but no image");
    const auto img = read_image(paths.image);
    const auto msk = read_image(paths.mask);
    if (msk.channels != 1) throw DataError("sample '" + id + "': mask must be single-channel");
    if (img.height != msk.height || img.width != msk.width) {
      throw DataError("sample '" + id + "': image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                      " and mask " + std::to_string(msk.height) + "x" + std::to_string(msk.width) + " differ in size");
    }
    Sample s;
    s.id = id;
    s.image = Tensor<float>({img.channels, img.height, img.width});
    const float scale = 1.0f / static_cast<float>(img.max_value);
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t x = 0; x < img.width; ++x)
          s.image[(c * img.height + r) * img.width + x] = static_cast<float>(img.at(r, x, c)) * scale;
    s.mask = LabelMap(msk.height, msk.width);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      const int v = msk.pixels[i];
      s.mask[i] = options.binarize ? (v != 0 ? 1 : 0) : v;
    }
    validate_sample(s, options.num_classes);
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const Dataset& data, const fs::path& dir, const std::string& ext) {
  fs::create_directories(dir);
  for (const auto& s : data) {
    RawImage img;
    img.channels = s.image.dim(0);
    img.height = s.image.dim(1);
    img.width = s.image.dim(2);
    img.pixels.resize(img.channels * img.height * img.width);
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t x = 0; x < img.width; ++x) {
          const float v = std::clamp(s.image[(c * img.height + r) * img.width + x], 0.0f, 1.0f);
          img.pixels[(r * img.width + x) * img.channels + c] = static_cast<std::uint16_t>(std::lround(v * 255.0f));
        }
    write_image(dir / (s.id + ".img" + ext), img);
    RawImage msk;
    msk.height = s.mask.height();
    msk.width = s.mask.width();
    msk.pixels.assign(s.mask.labels().begin(), s.mask.labels().end());
    write_image(dir / (s.id + ".mask" + ext), msk);
  }
}

Dataset generate_synthetic(const SyntheticOptions& o) {
  if (o.count == 0 || o.size < 8) throw ConfigError("synthetic data needs count >= 1 and size >= 8");
  if (o.channels == 0) throw ConfigError("synthetic data needs at least one channel");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const double n = static_cast<double>(o.size);
  Dataset out;
  const int width = static_cast<int>(std::to_string(o.count - 1).size());
  for (std::size_t k = 0; k < o.count; ++k) {
    Sample s;
    std::string num = std::to_string(k);
    s.id = "synth_" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    s.mask = LabelMap(o.size, o.size);
    // Per-shape intensity map; later shapes paint over earlier ones.
    std::vector<double> fg(o.size * o.size, -1.0);
    const int shapes = 1 + static_cast<int>(unit(rng) * 5.0) % 5;
    double cy = 0, cx = 0, level = 0;
    for (int i = 0; i < shapes; ++i) {
      const bool ellipse = unit(rng) < 0.5;
      cy = n * (0.15 + 0.7 * unit(rng));
      cx = n * (0.15 + 0.7 * unit(rng));
      const double ry = n * (0.06 + 0.12 * unit(rng)), rx = n * (0.06 + 0.12 * unit(rng));
      level = 0.6 + 0.3 * unit(rng);
      for (std::size_t r = 0; r < o.size; ++r) {
        for (std::size_t c = 0; c < o.size; ++c) {
          const double dy = (static_cast<double>(r) + 0.5 - cy) / ry, dx = (static_cast<double>(c) + 0.5 - cx) / rx;
          const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
          if (inside) {
            s.mask.at(r, c) = 1;
            fg[r * o.size + c] = level;
          }
        }
      }
    }
    if (s.mask.count(1) == 0) {
      // Tiny images can miss every pixel centre; keep the last shape's centre.
      const auto r = static_cast<std::size_t>(cy), c = static_cast<std::size_t>(cx);
      s.mask.at(r, c) = 1;
      fg[r * o.size + c] = level;
    }
    const double background = 0.1 + 0.2 * unit(rng);
    s.image = Tensor<float>({o.channels, o.size, o.size});
    for (std::size_t ch = 0; ch < o.channels; ++ch) {
      for (std::size_t i = 0; i < o.size * o.size; ++i) {
        const double base = fg[i] >= 0 ? fg[i] : background;
        s.image[ch * o.size * o.size + i] = static_cast<float>(std::clamp(base + noise(rng), 0.0, 1.0));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Split split_dataset(const Dataset& data, double held_out_fraction) {
  if (held_out_fraction < 0.0 || held_out_fraction >= 1.0) {
    throw ConfigError("held-out fraction must be in [0, 1), got " + std::to_string(held_out_fraction));
  }
  const auto held = static_cast<std::size_t>(std::floor(static_cast<double>(data.size()) * held_out_fraction));
  Split s;
  s.train.assign(data.begin(), data.end() - static_cast<std::ptrdiff_t>(held));
  s.held_out.assign(data.end() - static_cast<std::ptrdiff_t>(held), data.end());
  if (s.train.empty()) throw ConfigError("held-out fraction leaves no training samples");
  return s;
}

double foreground_fraction(const Sample& s) {
  std::size_t fg = 0;
  for (int v : s.mask.labels()) fg += v != 0;
  return static_cast<double>(fg) / static_cast<double>(s.mask.size());
}

}  // namespace uct
