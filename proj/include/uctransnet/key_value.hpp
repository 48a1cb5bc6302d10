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
#include <string>
#include <utility>
#include <vector>

namespace uct {

// Ordered key/value list; the canonical text form of every config object.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string trim(const std::string& text);

// Value parsers used by config files and CLI overrides. Each throws
// ConfigError naming `key` when the text does not parse.
std::size_t parse_size(const std::string& key, const std::string& text);
std::uint64_t parse_u64(const std::string& key, const std::string& text);
double parse_real(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);

// Shortest text that parses back to the same double.
std::string format_real(double value);

// Parses `key = value` lines; blank lines and `#` comments are skipped.
// Later duplicates override earlier ones but keep the first position.
KeyValues parse_key_value_text(const std::string& text);
std::string key_value_text(const KeyValues& kv);

}  // namespace uct
