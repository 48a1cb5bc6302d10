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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uctransnet/label_map.hpp"

namespace uct::metrics {

// Binary overlap scores; any nonzero label counts as foreground. Both masks
// empty scores 1.
double dice(const LabelMap& pred, const LabelMap& truth);
double iou(const LabelMap& pred, const LabelMap& truth);

// Foreground pixels with at least one 4-neighbour in the background; pixels
// outside the image count as background.
std::vector<std::pair<std::size_t, std::size_t>> boundary(const LabelMap& mask);

// Symmetric Hausdorff distance between the two boundary sets, in pixels.
// Throws UndefinedMetricError when either mask is empty.
double hausdorff(const LabelMap& pred, const LabelMap& truth);

struct ClassScores {
  int cls = 1;
  double dice = 0.0;
  double iou = 0.0;
  std::optional<double> hausdorff;  // mean over samples where it is defined
  std::size_t hausdorff_samples = 0;
};

// Per-class means over samples for the foreground classes 1..K-1, and their
// average. A Hausdorff value is missing, never zero, when undefined.
struct MetricsReport {
  std::size_t samples = 0;
  std::vector<ClassScores> per_class;
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  std::optional<double> mean_hausdorff;

  std::string to_csv() const;
  std::string to_table() const;
};

MetricsReport evaluate(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                       std::size_t num_classes);

// Fixed-precision text for CSV cells; missing values render as "".
std::string format_metric(double value);
std::string format_metric(const std::optional<double>& value);

}  // namespace uct::metrics
