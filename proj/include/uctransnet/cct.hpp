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
#include <optional>
#include <string>
#include <vector>

#include "uctransnet/autograd.hpp"
#include "uctransnet/init.hpp"
#include "uctransnet/model_config.hpp"

namespace uct::cct {

// Similarity matrices captured during a forward pass, indexed
// [layer][query position][head]; each is C_i × C_Σ, rows softmax-normalised.
template <class T>
struct AttentionTrace {
  std::vector<int> query_levels;
  std::vector<int> key_levels;
  std::vector<std::vector<std::vector<Tensor<T>>>> similarity;
};

// Canonical parameter names.
std::string query_name(std::size_t layer, std::size_t head, int level);
std::string key_name(std::size_t layer, std::size_t head);
std::string value_name(std::size_t layer, std::size_t head);
std::string position_name(int level);

template <class T>
void add_params(ParamFactory<T>& factory, const ModelConfig& cfg);

// Averages each patch×patch window of a C×H×W map into one token and lays the
// tokens out sequence-major: d × C. Adds `position` (d × C) when given.
template <class T>
Var<T> tokenize(Var<T> feature, std::size_t patch, std::optional<Var<T>> position = std::nullopt);

// Channel-axis concatenation in the given order: d × ΣC.
template <class T>
Var<T> concat_tokens(const std::vector<Var<T>>& tokens);

// One channel-wise cross-attention head.
//   Q = (T_i W_q)ᵀ  C_i×d,   K = (T_Σ W_k)ᵀ, V = (T_Σ W_v)ᵀ  C_Σ×d
//   M = softmax_row(instance_norm(Q Kᵀ / sqrt(C_Σ)))        C_i×C_Σ
//   returns M V                                             C_i×d
// `similarity`, when non-null, receives M.
template <class T>
Var<T> cross_attention_head(Var<T> tokens, Var<T> key_tokens, Var<T> w_query, Var<T> w_key, Var<T> w_value,
                            Tensor<T>* similarity = nullptr);

template <class T>
struct HeadWeights {
  Var<T> query;
  Var<T> key;
  Var<T> value;
};

template <class T>
struct MultiHeadOutput {
  Var<T> mca;    // C_i × d, mean of the heads
  Var<T> query;  // d × C_i, mean of the per-head projected queries
  std::vector<Tensor<T>> similarity;
};

// Heads are averaged, not concatenated.
template <class T>
MultiHeadOutput<T> multi_head_attention(Var<T> tokens, Var<T> key_tokens, const std::vector<HeadWeights<T>>& heads);

// Tokens per level; unset entries are levels outside query ∪ key.
template <class T>
using LevelTokens = std::array<std::optional<Var<T>>, 4>;

// One transformer layer over all query levels:
//   S_i = LN(T_i), S_Σ = LN(T_Σ)
//   O_i = MCA_i + MLP(LN(Q_i + MCA_i))
// Key-only levels are carried through unchanged.
template <class T>
LevelTokens<T> cct_layer(ParamStore<T>& params, const ModelConfig& cfg, std::size_t layer,
                         const LevelTokens<T>& tokens, AttentionTrace<T>* trace = nullptr);

// d × C tokens back to a C × H × W map: grid reshape, nearest upsampling by
// `patch`, 3×3 conv + ReLU.
template <class T>
Var<T> reconstruct(Var<T> tokens, std::size_t grid_h, std::size_t grid_w, std::size_t patch, Var<T> weight,
                   Var<T> bias);

// Tokenise → L layers → reconstruct. Levels outside query_levels are passed
// through as given.
template <class T>
std::array<Var<T>, 4> cct_forward(ParamStore<T>& params, const ModelConfig& cfg,
                                  const std::array<Var<T>, 4>& encoder, AttentionTrace<T>* trace = nullptr);

}  // namespace uct::cct
