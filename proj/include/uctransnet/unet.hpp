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

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

#include "uctransnet/autograd.hpp"
#include "uctransnet/cct.hpp"
#include "uctransnet/model_config.hpp"

namespace uct {

template <class T>
struct EncoderFeatures {
  std::array<Var<T>, 4> levels;  // E_1..E_4
  Var<T> bottleneck;
};

// Optional introspection filled by forward().
template <class T>
struct ForwardTrace {
  cct::AttentionTrace<T> attention;
  std::array<std::optional<Tensor<T>>, 4> cca_masks;
};

// Full parameter set for `cfg`: U-Net tensors under "unet.", CCT under
// "cct.", CCA under "cca.". CTrans tensors exist only in uctransnet mode.
template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

std::size_t parameter_count(const ModelConfig& cfg);
bool is_unet_parameter(std::string_view name);

// Four conv blocks with 2×2 max-pooling between them, plus the bottleneck
// block at H/16 with 2·C_4 channels.
template <class T>
EncoderFeatures<T> encode(ParamStore<T>& params, const ModelConfig& cfg, Var<T> image);

// Called per level with the skip feature and the upsampled decoder feature;
// returns the tensor concatenated in front of `up`.
template <class T>
using SkipGate = std::function<Var<T>(int level, Var<T> skip, Var<T> up)>;

// Decoder from the bottleneck up to full-resolution logits. Absent skips drop
// the concatenation and the following block takes C_i inputs instead of 2·C_i.
template <class T>
Var<T> decode(ParamStore<T>& params, const ModelConfig& cfg, Var<T> bottleneck,
              const std::array<std::optional<Var<T>>, 4>& skips, const SkipGate<T>& gate = {});

template <class T>
Var<T> forward(ParamStore<T>& params, const ModelConfig& cfg, Var<T> image, ForwardMode mode,
               ForwardTrace<T>* trace = nullptr);

template <class T>
Var<T> forward(ParamStore<T>& params, const ModelConfig& cfg, Var<T> image, ForwardTrace<T>* trace = nullptr) {
  return forward(params, cfg, image, cfg.mode, trace);
}

// Inference helper: fresh graph, logits tensor out.
template <class T>
Tensor<T> predict_logits(ParamStore<T>& params, const ModelConfig& cfg, const Tensor<T>& image,
                         ForwardTrace<T>* trace = nullptr);

}  // namespace uct
