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
#include <string>
#include <vector>

namespace uct {

// H×W integer class labels, row-major. Binary masks use {0, 1}.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, int fill = 0);
  LabelMap(std::size_t height, std::size_t width, std::vector<int> labels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  int& at(std::size_t r, std::size_t c) { return labels_[r * width_ + c]; }
  int at(std::size_t r, std::size_t c) const { return labels_[r * width_ + c]; }
  int& operator[](std::size_t i) { return labels_[i]; }
  int operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  // 1 where the label equals `cls`, 0 elsewhere.
  LabelMap binary(int cls) const;
  std::size_t count(int cls) const;
  int max_label() const;

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<int> labels_;
};

std::string extent_str(const LabelMap& m);

}  // namespace uct
