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
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "uctransnet/autograd.hpp"
#include "uctransnet/checkpoint.hpp"
#include "uctransnet/dataset.hpp"
#include "uctransnet/key_value.hpp"
#include "uctransnet/metrics.hpp"
#include "uctransnet/model_config.hpp"

namespace uct {

// --- loss -------------------------------------------------------------------

struct LossOptions {
  double w_ce = 0.5;
  double w_dice = 0.5;
  double dice_smooth = 1e-5;
  // Soft-Dice averages over classes 1..K-1 unless background is included.
  bool dice_include_background = false;
};

template <class T>
struct LossTerms {
  Var<T> total;
  Var<T> ce;    // mean pixel cross entropy
  Var<T> dice;  // 1 - mean soft-Dice
};

// w_ce·CE + w_dice·(1 − soft-Dice) for K×H×W logits against a label map.
template <class T>
LossTerms<T> combined_loss(Var<T> logits, const LabelMap& mask, const LossOptions& options = {});

// --- optimizer ----------------------------------------------------------------

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction; moments are created lazily per parameter name.
template <class T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  void step(ParamStore<T>& params);
  // Single-tensor update, shared with step().
  void update(const std::string& name, Tensor<T>& value, const Tensor<T>& grad);
  std::size_t steps() const noexcept { return steps_; }

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamOptions opt_;
  std::unordered_map<std::string, Moments> moments_;
  std::size_t steps_ = 0;
};

// --- augmentation -------------------------------------------------------------

Sample hflip(const Sample& s);
Sample vflip(const Sample& s);
// Rotates by k·90° counter-clockwise.
Sample rot90(const Sample& s, int k);

struct AugmentOptions {
  bool hflip = true;
  bool vflip = true;
  bool rotate = true;
};

// Identical spatial transform on image and mask. Odd quarter turns are
// only drawn for square samples so the extents never change.
Sample augment(const Sample& s, std::mt19937_64& rng, const AugmentOptions& options = {});

// --- training loop --------------------------------------------------------------

enum class Strategy { joint, pretrained };
std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;
  std::size_t max_iterations = 500;
  std::uint64_t seed = 1;
  double w_ce = 0.5;
  double w_dice = 0.5;
  double dice_smooth = 1e-5;
  bool dice_include_background = false;
  AugmentOptions augment{};
  Strategy strategy = Strategy::joint;
  std::string pretrain_checkpoint;
  // Validation metrics every n iterations (0 = never).
  std::size_t eval_every = 0;
  // Stop once validation mean Dice reaches this value (0 = run to the end).
  double target_dice = 0.0;

  void validate() const;
  LossOptions loss() const { return {w_ce, w_dice, dice_smooth, dice_include_background}; }
  KeyValues to_key_values() const;
  bool set(const std::string& key, const std::string& value);
};

struct LossRecord {
  std::size_t iteration = 0;
  double total = 0.0;
  double ce = 0.0;
  double dice = 0.0;
};

struct ValidationRecord {
  std::size_t iteration = 0;
  double dice = 0.0;
  double iou = 0.0;
};

struct PretrainReport {
  std::size_t matched = 0;            // U-Net tensors copied
  std::size_t unmatched = 0;          // target tensors left at their init (CTrans)
  std::size_t ignored_entries = 0;    // checkpoint entries outside the U-Net namespace
};

struct FitResult {
  std::vector<LossRecord> curve;
  std::vector<ValidationRecord> validation;
  std::optional<PretrainReport> pretrained;
};

// "iteration,loss_total,loss_ce,loss_dice" rows.
std::string loss_curve_csv(const std::vector<LossRecord>& curve);

using ProgressFn = std::function<void(const LossRecord&)>;

// Trains in place. Sample order, augmentation and initialisation follow
// the seed alone, so identical inputs give bitwise-identical curves. A
// non-finite value aborts with NumericError naming the iteration, sample
// and the loss term being computed.
template <class T>
FitResult fit(ParamStore<T>& params, const ModelConfig& cfg, const Dataset& train, const TrainConfig& tc,
              const Dataset* validation = nullptr, const ProgressFn& progress = {});

// Copies every "unet." tensor from a U-Net checkpoint by name. CTrans
// tensors are never matched. Throws CheckpointError (mismatch) naming the
// first U-Net tensor that is missing or has another shape.
template <class T>
PretrainReport load_pretrained_unet(ParamStore<T>& params, const Checkpoint& unet_checkpoint);

// --- inference ---------------------------------------------------------------

template <class T>
LabelMap predict_mask(ParamStore<T>& params, const ModelConfig& cfg, const Tensor<float>& image);

template <class T>
metrics::MetricsReport evaluate_model(ParamStore<T>& params, const ModelConfig& cfg, const Dataset& data);

}  // namespace uct
