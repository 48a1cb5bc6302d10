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
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uctransnet/key_value.hpp"
#include "uctransnet/tensor.hpp"

namespace uct {

enum class SkipMode { copy, none, ctrans };
enum class ForwardMode { plain, uctransnet };

std::string to_string(SkipMode mode);
std::string to_string(ForwardMode mode);
SkipMode parse_skip_mode(const std::string& text);
ForwardMode parse_forward_mode(const std::string& text);

// Parses "1234", "2,3,4" or "{2,3,4}" into sorted unique levels in 1..4.
std::vector<int> parse_levels(const std::string& text);
std::string levels_str(const std::vector<int>& levels);

// Full architecture description. Levels are 1-based throughout, matching
// the encoder depth they refer to.
struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::array<std::size_t, 4> channels{16, 32, 64, 128};
  std::size_t height = 64;
  std::size_t width = 64;

  std::size_t patch_size = 8;
  std::size_t heads = 4;
  std::size_t cct_layers = 4;
  std::size_t mlp_ratio = 4;

  // Plain mode: copy/none per level. UCTransNet mode: `none` removes the
  // level, anything else routes it through CTrans.
  std::array<SkipMode, 4> skip{SkipMode::copy, SkipMode::copy, SkipMode::copy, SkipMode::copy};
  std::vector<int> query_levels{1, 2, 3, 4};
  std::vector<int> key_levels{1, 2, 3, 4};
  ForwardMode mode = ForwardMode::uctransnet;

  bool positional_embedding = true;
  bool use_cct = true;
  bool use_cca = true;
  bool cca_relu = false;

  DType dtype = DType::f32;

  std::size_t channels_at(int level) const { return channels.at(static_cast<std::size_t>(level - 1)); }
  std::size_t bottleneck_channels() const { return 2 * channels[3]; }
  std::size_t height_at(int level) const { return height >> (level - 1); }
  std::size_t width_at(int level) const { return width >> (level - 1); }
  // Level i uses patches of P / 2^(i-1) so all four grids coincide.
  std::size_t patch_at(int level) const { return patch_size >> (level - 1); }
  std::size_t grid_height() const { return height / patch_size; }
  std::size_t grid_width() const { return width / patch_size; }
  std::size_t token_count() const { return grid_height() * grid_width(); }
  // C_Σ: channel width of the concatenated key/value tokens.
  std::size_t key_channels() const;

  bool has_skip(int level) const { return skip.at(static_cast<std::size_t>(level - 1)) != SkipMode::none; }
  bool is_query_level(int level) const;
  bool is_key_level(int level) const;
  bool uses_ctrans() const { return mode == ForwardMode::uctransnet; }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  // Canonical key/value form; every field has exactly one key.
  KeyValues to_key_values() const;
  // Returns false for keys this struct does not own; throws ConfigError on
  // malformed values.
  bool set(const std::string& key, const std::string& value);
};

ModelConfig model_config_from(const KeyValues& kv);

}  // namespace uct
