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

#include "uctransnet/model_config.hpp"

#include <algorithm>
#include <cctype>

#include "uctransnet/errors.hpp"

namespace uct {

std::string to_string(SkipMode mode) {
  switch (mode) {
    case SkipMode::copy: return "copy";
    case SkipMode::none: return "none";
    case SkipMode::ctrans: return "ctrans";
  }
  return "?";
}

std::string to_string(ForwardMode mode) { return mode == ForwardMode::plain ? "plain" : "uctransnet"; }

SkipMode parse_skip_mode(const std::string& text) {
  if (text == "copy") return SkipMode::copy;
  if (text == "none") return SkipMode::none;
  if (text == "ctrans") return SkipMode::ctrans;
  throw ConfigError("unknown skip mode '" + text + "' (expected copy, none or ctrans)");
}

ForwardMode parse_forward_mode(const std::string& text) {
  if (text == "plain" || text == "unet") return ForwardMode::plain;
  if (text == "uctransnet") return ForwardMode::uctransnet;
  throw ConfigError("unknown model mode '" + text + "' (expected plain or uctransnet)");
}

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> levels;
  for (char c : text) {
    if (c >= '1' && c <= '4') {
      levels.push_back(c - '0');
    } else if (c == ',' || c == '{' || c == '}' || c == ' ' || c == 'Q' || c == 'K') {
      continue;
    } else {
      throw ConfigError("invalid level list '" + text + "' (levels are 1..4)");
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

std::string levels_str(const std::vector<int>& levels) {
  std::string s;
  for (int l : levels) s += static_cast<char>('0' + l);
  return s;
}

std::size_t ModelConfig::key_channels() const {
  std::size_t total = 0;
  for (int l : key_levels) total += channels_at(l);
  return total;
}

bool ModelConfig::is_query_level(int level) const {
  return std::find(query_levels.begin(), query_levels.end(), level) != query_levels.end();
}

bool ModelConfig::is_key_level(int level) const {
  return std::find(key_levels.begin(), key_levels.end(), level) != key_levels.end();
}

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (channels[0] == 0) throw ConfigError("channel ladder must be positive");
  for (std::size_t i = 1; i < 4; ++i) {
    if (channels[i] != 2 * channels[i - 1]) {
      throw ConfigError("channel ladder must double per level, got C" + std::to_string(i) + "=" +
                        std::to_string(channels[i - 1]) + " and C" + std::to_string(i + 1) + "=" +
                        std::to_string(channels[i]));
    }
  }
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be divisible by 16 (four 2x2 poolings)");
  }
  if (mode == ForwardMode::plain) {
    for (int l = 1; l <= 4; ++l) {
      if (skip[static_cast<std::size_t>(l - 1)] == SkipMode::ctrans) {
        throw ConfigError("skip mode ctrans at level " + std::to_string(l) + " requires uctransnet mode");
      }
    }
    return;
  }
  if (!use_cct) return;
  if (query_levels.empty()) throw ConfigError("query_levels must not be empty in uctransnet mode");
  if (key_levels.empty()) throw ConfigError("key_levels must not be empty in uctransnet mode");
  for (const auto* set : {&query_levels, &key_levels}) {
    for (int l : *set) {
      if (l < 1 || l > 4) throw ConfigError("level " + std::to_string(l) + " outside 1..4");
    }
  }
  if (heads == 0) throw ConfigError("heads must be positive");
  if (cct_layers == 0) throw ConfigError("cct_layers must be positive");
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
  if (patch_size == 0 || patch_size % 8 != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) + " must be a positive multiple of 8");
  }
  if (height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by patch_size " + std::to_string(patch_size));
  }
}

namespace {

std::string join_channels(const std::array<std::size_t, 4>& c) {
  return std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + "," + std::to_string(c[3]);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

}  // namespace

KeyValues ModelConfig::to_key_values() const {
  std::string skips;
  for (std::size_t i = 0; i < 4; ++i) skips += (i ? "," : "") + to_string(skip[i]);
  return {
      {"in_channels", std::to_string(in_channels)},
      {"num_classes", std::to_string(num_classes)},
      {"channels", join_channels(channels)},
      {"height", std::to_string(height)},
      {"width", std::to_string(width)},
      {"patch_size", std::to_string(patch_size)},
      {"heads", std::to_string(heads)},
      {"cct_layers", std::to_string(cct_layers)},
      {"mlp_ratio", std::to_string(mlp_ratio)},
      {"skip", skips},
      {"query_levels", levels_str(query_levels)},
      {"key_levels", levels_str(key_levels)},
      {"mode", to_string(mode)},
      {"positional_embedding", positional_embedding ? "true" : "false"},
      {"use_cct", use_cct ? "true" : "false"},
      {"use_cca", use_cca ? "true" : "false"},
      {"cca_relu", cca_relu ? "true" : "false"},
      {"dtype", to_string(dtype)},
  };
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "in_channels") {
    in_channels = parse_size(key, value);
  } else if (key == "num_classes") {
    num_classes = parse_size(key, value);
  } else if (key == "channels") {
    // Either the full ladder or just C1.
    auto parts = split_commas(value);
    if (parts.size() == 1) {
      const auto c1 = parse_size(key, parts[0]);
      channels = {c1, 2 * c1, 4 * c1, 8 * c1};
    } else if (parts.size() == 4) {
      for (std::size_t i = 0; i < 4; ++i) channels[i] = parse_size(key, parts[i]);
    } else {
      throw ConfigError("channels: expected C1 or four comma-separated widths, got '" + value + "'");
    }
  } else if (key == "height") {
    height = parse_size(key, value);
  } else if (key == "width") {
    width = parse_size(key, value);
  } else if (key == "size") {
    height = width = parse_size(key, value);
  } else if (key == "patch_size") {
    patch_size = parse_size(key, value);
  } else if (key == "heads") {
    heads = parse_size(key, value);
  } else if (key == "cct_layers") {
    cct_layers = parse_size(key, value);
  } else if (key == "mlp_ratio") {
    mlp_ratio = parse_size(key, value);
  } else if (key == "skip") {
    auto parts = split_commas(value);
    if (parts.size() == 1) parts.assign(4, parts[0]);
    if (parts.size() != 4) throw ConfigError("skip: expected one mode or four comma-separated modes");
    for (std::size_t i = 0; i < 4; ++i) skip[i] = parse_skip_mode(parts[i]);
  } else if (key == "query_levels") {
    query_levels = parse_levels(value);
  } else if (key == "key_levels") {
    key_levels = parse_levels(value);
  } else if (key == "mode") {
    mode = parse_forward_mode(trim(value));
  } else if (key == "positional_embedding") {
    positional_embedding = parse_bool(key, value);
  } else if (key == "use_cct") {
    use_cct = parse_bool(key, value);
  } else if (key == "use_cca") {
    use_cca = parse_bool(key, value);
  } else if (key == "cca_relu") {
    cca_relu = parse_bool(key, value);
  } else if (key == "dtype") {
    dtype = parse_dtype(trim(value));
  } else {
    return false;
  }
  return true;
}

ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig cfg;
  for (const auto& [k, v] : kv) {
    if (!cfg.set(k, v)) throw ConfigError("unknown model key '" + k + "'");
  }
  return cfg;
}

}  // namespace uct
