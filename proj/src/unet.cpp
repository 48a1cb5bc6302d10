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

#include "uctransnet/unet.hpp"

#include "uctransnet/cca.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/init.hpp"
#include "uctransnet/ops.hpp"

namespace uct {

namespace {

std::string enc_prefix(int level) { return "unet.enc" + std::to_string(level) + "."; }
std::string dec_prefix(int level) { return "unet.dec" + std::to_string(level) + "."; }
const std::string kBottleneck = "unet.bottleneck.";

template <class T>
void add_conv_block(ParamFactory<T>& f, const std::string& prefix, std::size_t in, std::size_t out) {
  f.kaiming(prefix + "conv1.weight", {out, in, 3, 3}, in * 9);
  f.ones(prefix + "norm1.gain", {out});
  f.zeros(prefix + "norm1.offset", {out});
  f.kaiming(prefix + "conv2.weight", {out, out, 3, 3}, out * 9);
  f.ones(prefix + "norm2.gain", {out});
  f.zeros(prefix + "norm2.offset", {out});
}

// (conv3×3 → per-channel instance norm → ReLU) × 2. Conv biases are omitted
// because the norm removes them.
template <class T>
Var<T> conv_block(ParamStore<T>& params, const std::string& prefix, Var<T> x) {
  Graph<T>& g = x.graph();
  for (const char* stage : {"1", "2"}) {
    const std::string s(stage);
    x = ops::conv2d(x, g.param(params.get(prefix + "conv" + s + ".weight")), std::nullopt, 1);
    const std::size_t plane = x.dim(1) * x.dim(2);
    // A 1×1 map has no spatial statistics to normalise.
    if (plane > 1) x = ops::standardize(x, plane);
    x = ops::scale_along(x, g.param(params.get(prefix + "norm" + s + ".gain")), 0);
    x = ops::bias_add(x, g.param(params.get(prefix + "norm" + s + ".offset")), 0);
    x = ops::relu(x);
  }
  return x;
}

}  // namespace

bool is_unet_parameter(std::string_view name) { return name.starts_with("unet."); }

template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<T> store;
  ParamFactory<T> f(store, seed);
  std::size_t in = cfg.in_channels;
  for (int l = 1; l <= 4; ++l) {
    add_conv_block(f, enc_prefix(l), in, cfg.channels_at(l));
    in = cfg.channels_at(l);
  }
  add_conv_block(f, kBottleneck, in, cfg.bottleneck_channels());
  std::size_t below = cfg.bottleneck_channels();
  for (int l = 4; l >= 1; --l) {
    const std::size_t c = cfg.channels_at(l);
    f.kaiming(dec_prefix(l) + "up.weight", {c, below, 3, 3}, below * 9);
    f.zeros(dec_prefix(l) + "up.bias", {c});
    add_conv_block(f, dec_prefix(l), cfg.has_skip(l) ? 2 * c : c, c);
    below = c;
  }
  f.kaiming("unet.head.weight", {cfg.num_classes, cfg.channels[0], 1, 1}, cfg.channels[0]);
  f.zeros("unet.head.bias", {cfg.num_classes});

  if (cfg.uses_ctrans()) {
    if (cfg.use_cct) cct::add_params(f, cfg);
    if (cfg.use_cca) cca::add_params(f, cfg);
  }
  return store;
}

std::size_t parameter_count(const ModelConfig& cfg) { return init_params<float>(cfg, 0).element_count(); }

template <class T>
EncoderFeatures<T> encode(ParamStore<T>& params, const ModelConfig& cfg, Var<T> image) {
  const auto& s = image.shape();
  if (s.size() != 3 || s[0] != cfg.in_channels) {
    throw ConfigError("encode: expected image with " + std::to_string(cfg.in_channels) + " channels, got " +
                      shape_str(s));
  }
  if (s[1] % 16 != 0 || s[2] % 16 != 0) {
    throw ConfigError("encode: spatial extents " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                      " must be divisible by 16");
  }
  EncoderFeatures<T> out;
  Var<T> x = image;
  for (int l = 1; l <= 4; ++l) {
    if (l > 1) x = ops::max_pool2d(x, 2);
    x = conv_block(params, enc_prefix(l), x);
    out.levels[static_cast<std::size_t>(l - 1)] = x;
  }
  out.bottleneck = conv_block(params, kBottleneck, ops::max_pool2d(x, 2));
  return out;
}

template <class T>
Var<T> decode(ParamStore<T>& params, const ModelConfig& cfg, Var<T> bottleneck,
              const std::array<std::optional<Var<T>>, 4>& skips, const SkipGate<T>& gate) {
  Graph<T>& g = bottleneck.graph();
  Var<T> x = bottleneck;
  for (int l = 4; l >= 1; --l) {
    const auto p = dec_prefix(l);
    auto up = ops::conv2d(ops::upsample_nearest(x, 2), g.param(params.get(p + "up.weight")),
                          g.param(params.get(p + "up.bias")), 1);
    const auto& skip = skips[static_cast<std::size_t>(l - 1)];
    if (skip.has_value() != cfg.has_skip(l)) {
      throw FusionError("decode: level " + std::to_string(l) + (skip ? " received a skip the config removes"
                                                                     : " expects a skip but none was given"));
    }
    if (skip) {
      if (skip->shape() != up.shape()) {
        throw FusionError("decode: skip at level " + std::to_string(l) + " has shape " + shape_str(skip->shape()) +
                          ", decoder expects " + shape_str(up.shape()));
      }
      auto s = gate ? gate(l, *skip, up) : *skip;
      x = conv_block(params, p, ops::concat(std::vector<Var<T>>{s, up}, 0));
    } else {
      x = conv_block(params, p, up);
    }
  }
  return ops::conv2d(x, g.param(params.get("unet.head.weight")), g.param(params.get("unet.head.bias")), 0);
}

template <class T>
Var<T> forward(ParamStore<T>& params, const ModelConfig& cfg, Var<T> image, ForwardMode mode, ForwardTrace<T>* trace) {
  auto enc = encode(params, cfg, image);
  std::array<std::optional<Var<T>>, 4> skips;

  if (mode == ForwardMode::plain) {
    for (int l = 1; l <= 4; ++l) {
      const auto m = cfg.skip[static_cast<std::size_t>(l - 1)];
      if (m == SkipMode::ctrans) throw ConfigError("plain forward cannot route level " + std::to_string(l) + " through CTrans");
      if (m == SkipMode::copy) skips[static_cast<std::size_t>(l - 1)] = enc.levels[static_cast<std::size_t>(l - 1)];
    }
    return decode(params, cfg, enc.bottleneck, skips);
  }

  if (cfg.use_cct && (image.dim(1) != cfg.height || image.dim(2) != cfg.width)) {
    throw ConfigError("uctransnet forward: image " + shape_str(image.shape()) + " does not match configured " +
                      std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  auto fused = cfg.use_cct ? cct::cct_forward(params, cfg, enc.levels, trace ? &trace->attention : nullptr)
                           : enc.levels;
  for (int l = 1; l <= 4; ++l) {
    if (cfg.has_skip(l)) skips[static_cast<std::size_t>(l - 1)] = fused[static_cast<std::size_t>(l - 1)];
  }
  SkipGate<T> gate;
  if (cfg.use_cca) {
    gate = [&params, &cfg, trace](int level, Var<T> skip, Var<T> up) {
      Graph<T>& g = skip.graph();
      Tensor<T> mask;
      auto gated = cca::cca_gate(skip, up, g.param(params.get(cca::l1_name(level))),
                                 g.param(params.get(cca::l2_name(level))), cfg.cca_relu, trace ? &mask : nullptr);
      if (trace) trace->cca_masks[static_cast<std::size_t>(level - 1)] = std::move(mask);
      return gated;
    };
  }
  return decode(params, cfg, enc.bottleneck, skips, gate);
}

template <class T>
Tensor<T> predict_logits(ParamStore<T>& params, const ModelConfig& cfg, const Tensor<T>& image, ForwardTrace<T>* trace) {
  Graph<T> g;
  return forward(params, cfg, g.constant(image), trace).value();
}

#define UCT_INSTANTIATE_UNET(T)                                                                              \
  template ParamStore<T> init_params<T>(const ModelConfig&, std::uint64_t);                                 \
  template EncoderFeatures<T> encode(ParamStore<T>&, const ModelConfig&, Var<T>);                           \
  template Var<T> decode(ParamStore<T>&, const ModelConfig&, Var<T>, const std::array<std::optional<Var<T>>, 4>&, \
                         const SkipGate<T>&);                                                               \
  template Var<T> forward(ParamStore<T>&, const ModelConfig&, Var<T>, ForwardMode, ForwardTrace<T>*);       \
  template Tensor<T> predict_logits(ParamStore<T>&, const ModelConfig&, const Tensor<T>&, ForwardTrace<T>*);

UCT_INSTANTIATE_UNET(float)
UCT_INSTANTIATE_UNET(double)

}  // namespace uct
