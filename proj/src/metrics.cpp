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

#include "uctransnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "uctransnet/errors.hpp"

namespace uct::metrics {

namespace {

void require_same_extent(const LabelMap& a, const LabelMap& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": masks " + extent_str(a) + " and " + extent_str(b) + " differ in size");
  }
}

struct Overlap {
  std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(const LabelMap& pred, const LabelMap& truth, const char* what) {
  require_same_extent(pred, truth, what);
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    o.a += p;
    o.b += t;
    o.both += p && t;
  }
  return o;
}

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas), exact on integer grids.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Envelope over the finite samples only; z[0] = -inf stops the pop loop.
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (!any) {
      any = true;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    const double dq = static_cast<double>(q);
    double s;
    while (true) {
      const double dv = static_cast<double>(v[k]);
      s = ((f[q] + dq * dq) - (f[v[k]] + dv * dv)) / (2 * dq - 2 * dv);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (!any) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double dq = static_cast<double>(q);
    while (z[k + 1] < dq) ++k;
    const double dv = static_cast<double>(v[k]);
    d[q] = (dq - dv) * (dq - dv) + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest site.
std::vector<double> squared_distance_map(std::size_t h, std::size_t w,
                                         const std::vector<std::pair<std::size_t, std::size_t>>& sites) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w, inf);
  for (auto [r, c] : sites) grid[r * w + c] = 0.0;
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  // Columns first, then rows.
  f.resize(h);
  d.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = grid[r * w + c];
    edt_1d(f, d, v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = d[r];
  }
  f.resize(w);
  d.resize(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) f[c] = grid[r * w + c];
    edt_1d(f, d, v, z);
    for (std::size_t c = 0; c < w; ++c) grid[r * w + c] = d[c];
  }
  return grid;
}

double directed(const std::vector<std::pair<std::size_t, std::size_t>>& from, const std::vector<double>& to_map,
                std::size_t w) {
  double worst = 0.0;
  for (auto [r, c] : from) worst = std::max(worst, to_map[r * w + c]);
  return std::sqrt(worst);
}

}  // namespace

double dice(const LabelMap& pred, const LabelMap& truth) {
  const auto o = overlap(pred, truth, "dice");
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double iou(const LabelMap& pred, const LabelMap& truth) {
  const auto o = overlap(pred, truth, "iou");
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

std::vector<std::pair<std::size_t, std::size_t>> boundary(const LabelMap& mask) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t h = mask.height(), w = mask.width();
  auto fg = [&](long r, long c) {
    return r >= 0 && c >= 0 && r < static_cast<long>(h) && c < static_cast<long>(w) &&
           mask.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) != 0;
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (mask.at(r, c) == 0) continue;
      const long R = static_cast<long>(r), C = static_cast<long>(c);
      if (!fg(R - 1, C) || !fg(R + 1, C) || !fg(R, C - 1) || !fg(R, C + 1)) out.emplace_back(r, c);
    }
  }
  return out;
}

double hausdorff(const LabelMap& pred, const LabelMap& truth) {
  require_same_extent(pred, truth, "hausdorff");
  const auto a = boundary(pred), b = boundary(truth);
  if (a.empty() || b.empty()) {
    throw UndefinedMetricError(std::string("hausdorff: ") + (a.empty() ? "prediction" : "reference") +
                               " mask is empty");
  }
  const std::size_t h = pred.height(), w = pred.width();
  const auto to_b = squared_distance_map(h, w, b);
  const auto to_a = squared_distance_map(h, w, a);
  return std::max(directed(a, to_b, w), directed(b, to_a, w));
}

MetricsReport evaluate(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                       std::size_t num_classes) {
  if (predictions.size() != truths.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truths.size()) + " references");
  }
  if (num_classes < 2) throw ConfigError("evaluate: num_classes must be at least 2");
  MetricsReport report;
  report.samples = predictions.size();
  double hd_total = 0.0;
  std::size_t hd_classes = 0;
  for (int cls = 1; cls < static_cast<int>(num_classes); ++cls) {
    ClassScores s;
    s.cls = cls;
    double hd_sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const auto p = predictions[i].binary(cls), t = truths[i].binary(cls);
      s.dice += dice(p, t);
      s.iou += iou(p, t);
      try {
        hd_sum += hausdorff(p, t);
        ++s.hausdorff_samples;
      } catch (const UndefinedMetricError&) {
      }
    }
    if (report.samples) {
      s.dice /= static_cast<double>(report.samples);
      s.iou /= static_cast<double>(report.samples);
    }
    if (s.hausdorff_samples) {
      s.hausdorff = hd_sum / static_cast<double>(s.hausdorff_samples);
      hd_total += *s.hausdorff;
      ++hd_classes;
    }
    report.mean_dice += s.dice;
    report.mean_iou += s.iou;
    report.per_class.push_back(s);
  }
  const double k = static_cast<double>(report.per_class.size());
  report.mean_dice /= k;
  report.mean_iou /= k;
  if (hd_classes) report.mean_hausdorff = hd_total / static_cast<double>(hd_classes);
  return report;
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::string format_metric(const std::optional<double>& value) { return value ? format_metric(*value) : ""; }

std::string MetricsReport::to_csv() const {
  std::string s = "class,dice,iou,hd,hd_samples,samples\n";
  for (const auto& c : per_class) {
    s += std::to_string(c.cls) + "," + format_metric(c.dice) + "," + format_metric(c.iou) + "," +
         format_metric(c.hausdorff) + "," + std::to_string(c.hausdorff_samples) + "," + std::to_string(samples) + "\n";
  }
  s += "mean," + format_metric(mean_dice) + "," + format_metric(mean_iou) + "," + format_metric(mean_hausdorff) + ",," +
       std::to_string(samples) + "\n";
  return s;
}

std::string MetricsReport::to_table() const {
  auto hd = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string("n/a"); };
  char line[128];
  std::string s;
  std::snprintf(line, sizeof line, "%-8s %10s %10s %10s\n", "class", "Dice", "IoU", "HD");
  s += line;
  for (const auto& c : per_class) {
    std::snprintf(line, sizeof line, "%-8d %10.4f %10.4f %10s\n", c.cls, c.dice, c.iou, hd(c.hausdorff).c_str());
    s += line;
  }
  std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %10s\n", "mean", mean_dice, mean_iou,
                hd(mean_hausdorff).c_str());
  s += line;
  s += "samples: " + std::to_string(samples) + "\n";
  return s;
}

}  // namespace uct::metrics
