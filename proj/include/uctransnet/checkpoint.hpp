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
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "uctransnet/autograd.hpp"
#include "uctransnet/model_config.hpp"
#include "uctransnet/tensor.hpp"

namespace uct {

// On-disk layout, all integers little-endian:
//   "UCTN" | u32 version | u32 count |
//   count × (u32 name_len | name | u8 dtype | u8 rank | rank × u64 dim | payload) |
//   u32 CRC32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kConfigEntry[] = "meta.config";

struct CheckpointEntry {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;

  DType dtype() const { return tensor.index() == 0 ? DType::f32 : DType::f64; }
  const Shape& shape() const;
  // Converts to T when the stored dtype differs.
  template <class T>
  Tensor<T> as() const;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  template <class T>
  void add(std::string name, Tensor<T> tensor);

  // The model configuration echo, stored as the UTF-8 bytes of its
  // key/value text in an f64 entry.
  void set_config(const ModelConfig& cfg);
  std::optional<ModelConfig> config() const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
// Checks magic, then version, then CRC, then structure; each failure is a
// CheckpointError with its own kind.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class T>
Checkpoint make_checkpoint(const ParamStore<T>& params, const ModelConfig* cfg = nullptr);

template <class T>
void save_checkpoint(const ParamStore<T>& params, const ModelConfig& cfg, const std::filesystem::path& path) {
  save_checkpoint(make_checkpoint(params, &cfg), path);
}

// Copies every parameter from `ckpt`; names and shapes must match exactly.
// Entries under "meta." are ignored.
template <class T>
void restore_params(ParamStore<T>& params, const Checkpoint& ckpt);

}  // namespace uct
