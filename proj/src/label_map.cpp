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

#include "uctransnet/label_map.hpp"

#include <algorithm>

#include "uctransnet/errors.hpp"

namespace uct {

LabelMap::LabelMap(std::size_t height, std::size_t width, int fill)
    : height_(height), width_(width), labels_(height * width, fill) {}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<int> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height * width) {
    throw DimensionError("label map " + std::to_string(height) + "x" + std::to_string(width) + " given " +
                         std::to_string(labels_.size()) + " labels");
  }
}

LabelMap LabelMap::binary(int cls) const {
  LabelMap out(height_, width_);
  for (std::size_t i = 0; i < labels_.size(); ++i) out.labels_[i] = labels_[i] == cls ? 1 : 0;
  return out;
}

std::size_t LabelMap::count(int cls) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), cls));
}

int LabelMap::max_label() const { return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end()); }

std::string extent_str(const LabelMap& m) { return std::to_string(m.height()) + "x" + std::to_string(m.width()); }

}  // namespace uct
