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
#include <string>
#include <vector>

#include "uctransnet/label_map.hpp"
#include "uctransnet/tensor.hpp"

namespace uct {

// One image/mask pair. The image is C×H×W with values in [0,1]; the mask
// holds class indices.
struct Sample {
  std::string id;
  Tensor<float> image;
  LabelMap mask;

  std::size_t height() const { return mask.height(); }
  std::size_t width() const { return mask.width(); }
};

using Dataset = std::vector<Sample>;

// Throws DataError unless the image and mask extents agree and every label
// is below num_classes.
void validate_sample(const Sample& s, std::size_t num_classes);

struct LoadOptions {
  std::size_t num_classes = 2;
  // Maps any nonzero mask value to 1 (for 0/255 masks). Requires 2 classes.
  bool binarize = false;
};

// Reads `<id>.img.{png,pgm,ppm}` / `<id>.mask.{png,pgm}` pairs from `dir`,
// sorted by id. RGB masks are rejected; images are scaled to [0,1].
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

// Writes the pairs back out in the same convention (`ext` is ".png" or
// ".pgm"). Images are quantised to 8 bits.
void save_dataset(const Dataset& data, const std::filesystem::path& dir, const std::string& ext = ".png");

struct SyntheticOptions {
  std::size_t count = 16;
  std::size_t size = 64;
  std::uint64_t seed = 1;
  std::size_t channels = 1;
};

// Noisy background with 1-5 random filled ellipses or rectangles; the mask
// is the exact union of the shape interiors. Deterministic per seed.
Dataset generate_synthetic(const SyntheticOptions& options);

// Deterministic split: the first `train` samples, the rest held out.
struct Split {
  Dataset train;
  Dataset held_out;
};
Split split_dataset(const Dataset& data, double held_out_fraction);

double foreground_fraction(const Sample& s);

}  // namespace uct
