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

#include "uctransnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"
#include "uctransnet/unet.hpp"

namespace uct {

// --- loss -------------------------------------------------------------------

template <class T>
LossTerms<T> combined_loss(Var<T> logits, const LabelMap& mask, const LossOptions& options) {
  if (logits.shape().size() != 3) throw DimensionError("combined_loss: logits must be KxHxW, got " + shape_str(logits.shape()));
  const std::size_t k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  if (mask.height() != h || mask.width() != w) {
    throw DimensionError("combined_loss: logits " + shape_str(logits.shape()) + " against mask " + extent_str(mask));
  }
  const std::size_t plane = h * w;
  Tensor<T> onehot({k, h, w}, T{0});
  std::vector<double> class_pixels(k, 0.0);
  for (std::size_t i = 0; i < plane; ++i) {
    const int label = mask[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DataError("mask label " + std::to_string(label) + " outside 0.." + std::to_string(k - 1));
    }
    onehot[static_cast<std::size_t>(label) * plane + i] = T{1};
    class_pixels[static_cast<std::size_t>(label)] += 1.0;
  }
  Graph<T>& g = logits.graph();
  auto y = g.constant(onehot);

  LossTerms<T> out;
  out.ce = ops::scale(ops::sum(ops::mul(ops::log_softmax(logits, 0), y)), T(-1.0 / static_cast<double>(plane)));

  auto prob = ops::softmax(logits, 0);
  const std::size_t first = options.dice_include_background ? 0 : 1;
  std::vector<Var<T>> per_class;
  const T eps = static_cast<T>(options.dice_smooth);
  for (std::size_t c = first; c < k; ++c) {
    auto pc = ops::slice(prob, 0, c, c + 1);
    auto yc = g.constant(Tensor<T>({1, h, w}, std::vector<T>(onehot.data().begin() + static_cast<std::ptrdiff_t>(c * plane),
                                                             onehot.data().begin() + static_cast<std::ptrdiff_t>((c + 1) * plane))));
    auto inter = ops::sum(ops::mul(pc, yc));
    auto denom = ops::add_scalar(ops::sum(pc), static_cast<T>(class_pixels[c]) + eps);
    per_class.push_back(ops::div(ops::add_scalar(ops::scale(inter, T{2}), eps), denom));
  }
  auto mean_dice = ops::scale(ops::sum(ops::concat(per_class, 0)), T(1.0 / static_cast<double>(per_class.size())));
  out.dice = ops::add_scalar(ops::scale(mean_dice, T{-1}), T{1});
  out.total = ops::add(ops::scale(out.ce, static_cast<T>(options.w_ce)), ops::scale(out.dice, static_cast<T>(options.w_dice)));
  return out;
}

// --- optimizer ----------------------------------------------------------------

template <class T>
void Adam<T>::update(const std::string& name, Tensor<T>& value, const Tensor<T>& grad) {
  if (value.size() != grad.size()) throw ContractError("adam: gradient size differs for '" + name + "'");
  auto& mo = moments_[name];
  if (mo.m.empty()) {
    mo.m.assign(value.size(), 0.0);
    mo.v.assign(value.size(), 0.0);
  }
  ++mo.t;
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(mo.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(mo.t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double gi = static_cast<double>(grad[i]);
    mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * gi;
    mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * gi * gi;
    const double mhat = mo.m[i] / c1, vhat = mo.v[i] / c2;
    value[i] = static_cast<T>(static_cast<double>(value[i]) - opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.eps));
  }
}

template <class T>
void Adam<T>::step(ParamStore<T>& params) {
  for (auto& p : params) update(p.name, p.value, p.grad);
  ++steps_;
}

// --- augmentation -------------------------------------------------------------

namespace {

// Applies `src_of(r, c) -> (r', c')` to image and mask alike, producing a
// sample of extent out_h × out_w.
template <class Map>
Sample remap(const Sample& s, std::size_t out_h, std::size_t out_w, Map src_of) {
  Sample out;
  out.id = s.id;
  const std::size_t ch = s.image.dim(0), w = s.width(), h = s.height();
  out.image = Tensor<float>({ch, out_h, out_w});
  out.mask = LabelMap(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      const auto [sr, sc] = src_of(r, c);
      out.mask.at(r, c) = s.mask.at(sr, sc);
      for (std::size_t k = 0; k < ch; ++k) out.image[(k * out_h + r) * out_w + c] = s.image[(k * h + sr) * w + sc];
    }
  }
  return out;
}

}  // namespace

Sample hflip(const Sample& s) {
  const std::size_t w = s.width();
  return remap(s, s.height(), w, [w](std::size_t r, std::size_t c) { return std::pair{r, w - 1 - c}; });
}

Sample vflip(const Sample& s) {
  const std::size_t h = s.height();
  return remap(s, h, s.width(), [h](std::size_t r, std::size_t c) { return std::pair{h - 1 - r, c}; });
}

Sample rot90(const Sample& s, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return s;
  Sample cur = s;
  for (int i = 0; i < k; ++i) {
    // Counter-clockwise: out(r, c) = in(c, W-1-r), out is W×H.
    const std::size_t w = cur.width();
    cur = remap(cur, w, cur.height(), [w](std::size_t r, std::size_t c) { return std::pair{c, w - 1 - r}; });
  }
  return cur;
}

Sample augment(const Sample& s, std::mt19937_64& rng, const AugmentOptions& options) {
  // Draws happen in a fixed order regardless of which flags are set, so
  // toggling one transform does not shift the others' random stream.
  std::uniform_int_distribution<int> coin(0, 1), quarter(0, 3);
  const bool h = coin(rng) == 1, v = coin(rng) == 1;
  int k = quarter(rng);
  if (s.height() != s.width()) k &= 2;
  Sample out = s;
  if (options.hflip && h) out = hflip(out);
  if (options.vflip && v) out = vflip(out);
  if (options.rotate && k) out = rot90(out, k);
  return out;
}

// --- config -------------------------------------------------------------------

std::string to_string(Strategy s) { return s == Strategy::joint ? "joint" : "pretrained"; }

Strategy parse_strategy(const std::string& text) {
  if (text == "joint") return Strategy::joint;
  if (text == "pretrained") return Strategy::pretrained;
  throw ConfigError("unknown strategy '" + text + "' (expected joint or pretrained)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (w_ce < 0.0 || w_dice < 0.0 || std::abs(w_ce + w_dice - 1.0) > 1e-12) {
    throw ConfigError("loss weights must be non-negative and sum to 1, got w_ce=" + format_real(w_ce) +
                      " w_dice=" + format_real(w_dice));
  }
  if (!(dice_smooth > 0.0)) throw ConfigError("dice_smooth must be positive");
  if (target_dice < 0.0 || target_dice > 1.0) throw ConfigError("target_dice must be in [0, 1]");
  if (strategy == Strategy::pretrained && pretrain_checkpoint.empty()) {
    throw ConfigError("strategy pretrained needs pretrain_checkpoint");
  }
}

KeyValues TrainConfig::to_key_values() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"learning_rate", format_real(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"max_iterations", std::to_string(max_iterations)},
      {"seed", std::to_string(seed)},
      {"w_ce", format_real(w_ce)},
      {"w_dice", format_real(w_dice)},
      {"dice_smooth", format_real(dice_smooth)},
      {"dice_include_background", b(dice_include_background)},
      {"augment_hflip", b(augment.hflip)},
      {"augment_vflip", b(augment.vflip)},
      {"augment_rotate", b(augment.rotate)},
      {"strategy", to_string(strategy)},
      {"pretrain_checkpoint", pretrain_checkpoint},
      {"eval_every", std::to_string(eval_every)},
      {"target_dice", format_real(target_dice)},
  };
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "learning_rate" || key == "lr") {
    learning_rate = parse_real(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_size(key, value);
  } else if (key == "max_iterations" || key == "iterations") {
    max_iterations = parse_size(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "w_ce") {
    w_ce = parse_real(key, value);
  } else if (key == "w_dice") {
    w_dice = parse_real(key, value);
  } else if (key == "dice_smooth") {
    dice_smooth = parse_real(key, value);
  } else if (key == "dice_include_background") {
    dice_include_background = parse_bool(key, value);
  } else if (key == "augment") {
    augment.hflip = augment.vflip = augment.rotate = parse_bool(key, value);
  } else if (key == "augment_hflip") {
    augment.hflip = parse_bool(key, value);
  } else if (key == "augment_vflip") {
    augment.vflip = parse_bool(key, value);
  } else if (key == "augment_rotate") {
    augment.rotate = parse_bool(key, value);
  } else if (key == "strategy") {
    strategy = parse_strategy(trim(value));
  } else if (key == "pretrain_checkpoint") {
    pretrain_checkpoint = trim(value);
  } else if (key == "eval_every") {
    eval_every = parse_size(key, value);
  } else if (key == "target_dice") {
    target_dice = parse_real(key, value);
  } else {
    return false;
  }
  return true;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::string s = "iteration,loss_total,loss_ce,loss_dice\n";
  char line[160];
  for (const auto& r : curve) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", r.iteration, r.total, r.ce, r.dice);
    s += line;
  }
  return s;
}

// --- training loop --------------------------------------------------------------

template <class T>
PretrainReport load_pretrained_unet(ParamStore<T>& params, const Checkpoint& ckpt) {
  using Kind = CheckpointError::Kind;
  PretrainReport report;
  // Validate everything before touching any tensor.
  for (auto& p : params) {
    if (!is_unet_parameter(p.name)) continue;
    const auto* e = ckpt.find(p.name);
    if (!e) throw CheckpointError(Kind::mismatch, "pretrained checkpoint lacks U-Net tensor '" + p.name + "'");
    if (e->shape() != p.value.shape()) {
      throw CheckpointError(Kind::mismatch, "U-Net tensor '" + p.name + "' is " + shape_str(p.value.shape()) +
                                                " in the model but " + shape_str(e->shape()) + " in the checkpoint");
    }
  }
  for (auto& p : params) {
    if (is_unet_parameter(p.name)) {
      p.value = ckpt.find(p.name)->template as<T>();
      ++report.matched;
    } else {
      ++report.unmatched;
    }
  }
  for (const auto& e : ckpt.entries) report.ignored_entries += !is_unet_parameter(e.name);
  return report;
}

template <class T>
FitResult fit(ParamStore<T>& params, const ModelConfig& cfg, const Dataset& train, const TrainConfig& tc,
              const Dataset* validation, const ProgressFn& progress) {
  tc.validate();
  cfg.validate();
  if (train.empty()) throw DataError("fit: empty training set");
  for (const auto& s : train) validate_sample(s, cfg.num_classes);

  FitResult result;
  if (tc.strategy == Strategy::pretrained) {
    result.pretrained = load_pretrained_unet(params, load_checkpoint(tc.pretrain_checkpoint));
  }

  std::mt19937_64 rng(tc.seed);
  Adam<T> adam({tc.learning_rate, 0.9, 0.999, 1e-8});
  const LossOptions lo = tc.loss();
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size();
  const T inv_batch = static_cast<T>(1.0 / static_cast<double>(tc.batch_size));

  for (std::size_t it = 1; it <= tc.max_iterations; ++it) {
    params.zero_grad();
    LossRecord rec;
    rec.iteration = it;
    for (std::size_t b = 0; b < tc.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample sample = augment(train[order[cursor++]], rng, tc.augment);
      const char* stage = "forward pass";
      try {
        Graph<T> g;
        auto logits = forward(params, cfg, g.constant(sample.image.template cast<T>()));
        stage = "loss";
        auto terms = combined_loss(logits, sample.mask, lo);
        rec.ce += static_cast<double>(terms.ce.value()[0]);
        rec.dice += static_cast<double>(terms.dice.value()[0]);
        rec.total += static_cast<double>(terms.total.value()[0]);
        stage = "backward pass";
        g.backward(ops::scale(terms.total, inv_batch));
      } catch (const NumericError& e) {
        throw NumericError("training diverged at iteration " + std::to_string(it) + " on sample '" + sample.id +
                           "' during the " + stage + ": " + e.what());
      }
    }
    rec.total /= static_cast<double>(tc.batch_size);
    rec.ce /= static_cast<double>(tc.batch_size);
    rec.dice /= static_cast<double>(tc.batch_size);
    for (const auto& p : params) {
      if (!p.grad.all_finite()) {
        throw NumericError("training diverged at iteration " + std::to_string(it) + ": non-finite gradient in '" +
                           p.name + "' (ce term " + format_real(rec.ce) + ", dice term " + format_real(rec.dice) + ")");
      }
    }
    adam.step(params);
    result.curve.push_back(rec);
    if (progress) progress(rec);
    if (validation && !validation->empty() && tc.eval_every && it % tc.eval_every == 0) {
      const auto m = evaluate_model(params, cfg, *validation);
      result.validation.push_back({it, m.mean_dice, m.mean_iou});
      if (tc.target_dice > 0.0 && m.mean_dice >= tc.target_dice) break;
    }
  }
  return result;
}

// --- inference ---------------------------------------------------------------

template <class T>
LabelMap predict_mask(ParamStore<T>& params, const ModelConfig& cfg, const Tensor<float>& image) {
  const auto logits = predict_logits(params, cfg, image.template cast<T>());
  const std::size_t k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  LabelMap out(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[c * h * w + i] > logits[best * h * w + i]) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

template <class T>
metrics::MetricsReport evaluate_model(ParamStore<T>& params, const ModelConfig& cfg, const Dataset& data) {
  std::vector<LabelMap> preds, truths;
  for (const auto& s : data) {
    preds.push_back(predict_mask(params, cfg, s.image));
    truths.push_back(s.mask);
  }
  return metrics::evaluate(preds, truths, cfg.num_classes);
}

#define UCT_INSTANTIATE_TRAINING(T)                                                                         \
  template LossTerms<T> combined_loss(Var<T>, const LabelMap&, const LossOptions&);                         \
  template class Adam<T>;                                                                                   \
  template FitResult fit(ParamStore<T>&, const ModelConfig&, const Dataset&, const TrainConfig&,            \
                         const Dataset*, const ProgressFn&);                                                \
  template PretrainReport load_pretrained_unet(ParamStore<T>&, const Checkpoint&);                          \
  template LabelMap predict_mask(ParamStore<T>&, const ModelConfig&, const Tensor<float>&);                 \
  template metrics::MetricsReport evaluate_model(ParamStore<T>&, const ModelConfig&, const Dataset&);

UCT_INSTANTIATE_TRAINING(float)
UCT_INSTANTIATE_TRAINING(double)

}  // namespace uct
