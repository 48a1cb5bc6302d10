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

#include "uctransnet/cct.hpp"

#include <cmath>

#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"

namespace uct::cct {

namespace {

std::string level_str(int level) { return "level" + std::to_string(level); }

std::string layer_prefix(std::size_t layer) { return "cct.layer" + std::to_string(layer) + "."; }

std::vector<int> participating_levels(const ModelConfig& cfg) {
  std::vector<int> levels;
  for (int l = 1; l <= 4; ++l) {
    if (cfg.is_query_level(l) || cfg.is_key_level(l)) levels.push_back(l);
  }
  return levels;
}

template <class T>
Var<T> param(Graph<T>& g, ParamStore<T>& params, const std::string& name) {
  return g.param(params.get(name));
}

// Shared core: query/key/value already projected, sequence-major.
template <class T>
Var<T> attend(Var<T> q_rows, Var<T> k_rows, Var<T> v_rows, Tensor<T>* similarity) {
  const std::size_t key_channels = k_rows.dim(1);
  auto logits = ops::scale(ops::matmul(ops::transpose(q_rows), k_rows),
                           T{1} / std::sqrt(static_cast<T>(key_channels)));
  auto m = ops::softmax(ops::instance_norm(logits), 1);
  if (similarity) *similarity = m.value();
  return ops::matmul(m, ops::transpose(v_rows));
}

template <class T>
Var<T> mlp(Graph<T>& g, ParamStore<T>& params, const std::string& prefix, Var<T> x) {
  auto h = ops::bias_add(ops::matmul(x, param(g, params, prefix + "fc1.weight")), param(g, params, prefix + "fc1.bias"), 1);
  h = ops::gelu(h);
  return ops::bias_add(ops::matmul(h, param(g, params, prefix + "fc2.weight")), param(g, params, prefix + "fc2.bias"), 1);
}

template <class T>
Var<T> norm(Graph<T>& g, ParamStore<T>& params, const std::string& prefix, Var<T> x) {
  return ops::layer_norm(x, 1, param(g, params, prefix + ".gain"), param(g, params, prefix + ".offset"));
}

}  // namespace

std::string query_name(std::size_t layer, std::size_t head, int level) {
  return layer_prefix(layer) + "head" + std::to_string(head) + "." + level_str(level) + ".query";
}

std::string key_name(std::size_t layer, std::size_t head) {
  return layer_prefix(layer) + "head" + std::to_string(head) + ".key";
}

std::string value_name(std::size_t layer, std::size_t head) {
  return layer_prefix(layer) + "head" + std::to_string(head) + ".value";
}

std::string position_name(int level) { return "cct." + level_str(level) + ".position"; }

template <class T>
void add_params(ParamFactory<T>& f, const ModelConfig& cfg) {
  const std::size_t d = cfg.token_count();
  const std::size_t cs = cfg.key_channels();
  if (cfg.positional_embedding) {
    for (int l : participating_levels(cfg)) f.zeros(position_name(l), {d, cfg.channels_at(l)});
  }
  for (std::size_t layer = 0; layer < cfg.cct_layers; ++layer) {
    const auto lp = layer_prefix(layer);
    f.ones(lp + "kv_norm.gain", {cs});
    f.zeros(lp + "kv_norm.offset", {cs});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      for (int l : cfg.query_levels) {
        const std::size_t c = cfg.channels_at(l);
        f.xavier(query_name(layer, h, l), {c, c}, c, c);
      }
      f.xavier(key_name(layer, h), {cs, cs}, cs, cs);
      f.xavier(value_name(layer, h), {cs, cs}, cs, cs);
    }
    for (int l : cfg.query_levels) {
      const std::size_t c = cfg.channels_at(l);
      const std::size_t hidden = c * cfg.mlp_ratio;
      const auto p = lp + level_str(l) + ".";
      f.ones(p + "attn_norm.gain", {c});
      f.zeros(p + "attn_norm.offset", {c});
      f.ones(p + "mlp_norm.gain", {c});
      f.zeros(p + "mlp_norm.offset", {c});
      f.xavier(p + "mlp.fc1.weight", {c, hidden}, c, hidden);
      f.zeros(p + "mlp.fc1.bias", {hidden});
      f.xavier(p + "mlp.fc2.weight", {hidden, c}, hidden, c);
      f.zeros(p + "mlp.fc2.bias", {c});
    }
  }
  for (int l : cfg.query_levels) {
    const std::size_t c = cfg.channels_at(l);
    f.kaiming("cct." + level_str(l) + ".reconstruct.weight", {c, c, 3, 3}, c * 9);
    f.zeros("cct." + level_str(l) + ".reconstruct.bias", {c});
  }
}

template <class T>
Var<T> tokenize(Var<T> feature, std::size_t patch, std::optional<Var<T>> position) {
  if (feature.shape().size() != 3) throw DimensionError("tokenize: expected C×H×W, got " + shape_str(feature.shape()));
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("tokenize: patch " + std::to_string(patch) + " does not tile " + shape_str(feature.shape()));
  }
  auto pooled = patch == 1 ? feature : ops::avg_pool2d(feature, patch);
  const std::size_t d = (h / patch) * (w / patch);
  auto tokens = ops::transpose(ops::reshape(pooled, {c, d}));
  if (position) tokens = ops::add(tokens, *position);
  return tokens;
}

template <class T>
Var<T> concat_tokens(const std::vector<Var<T>>& tokens) {
  return ops::concat(tokens, 1);
}

template <class T>
Var<T> cross_attention_head(Var<T> tokens, Var<T> key_tokens, Var<T> w_query, Var<T> w_key, Var<T> w_value,
                            Tensor<T>* similarity) {
  if (tokens.shape().size() != 2 || key_tokens.shape().size() != 2 || tokens.dim(0) != key_tokens.dim(0)) {
    throw DimensionError("cross_attention_head: tokens " + shape_str(tokens.shape()) + " and key tokens " +
                         shape_str(key_tokens.shape()) + " must share the sequence length");
  }
  return attend(ops::matmul(tokens, w_query), ops::matmul(key_tokens, w_key), ops::matmul(key_tokens, w_value),
                similarity);
}

template <class T>
MultiHeadOutput<T> multi_head_attention(Var<T> tokens, Var<T> key_tokens, const std::vector<HeadWeights<T>>& heads) {
  if (heads.empty()) throw ConfigError("multi_head_attention: at least one head required");
  MultiHeadOutput<T> out;
  std::optional<Var<T>> ca_sum, q_sum;
  for (const auto& h : heads) {
    Tensor<T> sim;
    auto q_rows = ops::matmul(tokens, h.query);
    auto ca = attend(q_rows, ops::matmul(key_tokens, h.key), ops::matmul(key_tokens, h.value), &sim);
    out.similarity.push_back(std::move(sim));
    ca_sum = ca_sum ? ops::add(*ca_sum, ca) : ca;
    q_sum = q_sum ? ops::add(*q_sum, q_rows) : q_rows;
  }
  const T inv = T{1} / static_cast<T>(heads.size());
  out.mca = heads.size() == 1 ? *ca_sum : ops::scale(*ca_sum, inv);
  out.query = heads.size() == 1 ? *q_sum : ops::scale(*q_sum, inv);
  return out;
}

template <class T>
LevelTokens<T> cct_layer(ParamStore<T>& params, const ModelConfig& cfg, std::size_t layer,
                         const LevelTokens<T>& tokens, AttentionTrace<T>* trace) {
  std::vector<Var<T>> keys;
  for (int l : cfg.key_levels) {
    const auto& t = tokens[static_cast<std::size_t>(l - 1)];
    if (!t) throw ConfigError("cct_layer: key level " + std::to_string(l) + " has no tokens");
    keys.push_back(*t);
  }
  Graph<T>& g = keys.front().graph();
  const auto lp = layer_prefix(layer);
  auto key_tokens = norm(g, params, lp + "kv_norm", concat_tokens(keys));

  // Key/value projections are shared by every query level; compute them once.
  std::vector<Var<T>> k_rows, v_rows;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    k_rows.push_back(ops::matmul(key_tokens, param(g, params, key_name(layer, h))));
    v_rows.push_back(ops::matmul(key_tokens, param(g, params, value_name(layer, h))));
  }

  if (trace) trace->similarity.emplace_back();
  LevelTokens<T> out = tokens;
  for (int l : cfg.query_levels) {
    const auto& t = tokens[static_cast<std::size_t>(l - 1)];
    if (!t) throw ConfigError("cct_layer: query level " + std::to_string(l) + " has no tokens");
    const auto p = lp + level_str(l) + ".";
    auto s = norm(g, params, p + "attn_norm", *t);

    std::optional<Var<T>> ca_sum, q_sum;
    std::vector<Tensor<T>> sims;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      auto q_rows = ops::matmul(s, param(g, params, query_name(layer, h, l)));
      Tensor<T> sim;
      auto ca = attend(q_rows, k_rows[h], v_rows[h], trace ? &sim : nullptr);
      if (trace) sims.push_back(std::move(sim));
      ca_sum = ca_sum ? ops::add(*ca_sum, ca) : ca;
      q_sum = q_sum ? ops::add(*q_sum, q_rows) : q_rows;
    }
    const T inv = T{1} / static_cast<T>(cfg.heads);
    auto mca = ops::transpose(cfg.heads == 1 ? *ca_sum : ops::scale(*ca_sum, inv));
    auto q = cfg.heads == 1 ? *q_sum : ops::scale(*q_sum, inv);
    auto residual = ops::add(q, mca);
    out[static_cast<std::size_t>(l - 1)] = ops::add(mca, mlp(g, params, p + "mlp.", norm(g, params, p + "mlp_norm", residual)));
    if (trace) trace->similarity.back().push_back(std::move(sims));
  }
  return out;
}

template <class T>
Var<T> reconstruct(Var<T> tokens, std::size_t grid_h, std::size_t grid_w, std::size_t patch, Var<T> weight,
                   Var<T> bias) {
  if (tokens.shape().size() != 2 || tokens.dim(0) != grid_h * grid_w) {
    throw DimensionError("reconstruct: tokens " + shape_str(tokens.shape()) + " do not fill a " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  const std::size_t c = tokens.dim(1);
  auto map = ops::reshape(ops::transpose(tokens), {c, grid_h, grid_w});
  if (patch > 1) map = ops::upsample_nearest(map, patch);
  return ops::relu(ops::conv2d(map, weight, bias, 1));
}

template <class T>
std::array<Var<T>, 4> cct_forward(ParamStore<T>& params, const ModelConfig& cfg,
                                  const std::array<Var<T>, 4>& encoder, AttentionTrace<T>* trace) {
  if (cfg.query_levels.empty()) throw ConfigError("cct_forward: query_levels must not be empty");
  if (cfg.key_levels.empty()) throw ConfigError("cct_forward: key_levels must not be empty");
  Graph<T>& g = encoder[0].graph();

  LevelTokens<T> tokens;
  for (int l : participating_levels(cfg)) {
    const auto idx = static_cast<std::size_t>(l - 1);
    std::optional<Var<T>> pos;
    if (cfg.positional_embedding) pos = param(g, params, position_name(l));
    tokens[idx] = tokenize(encoder[idx], cfg.patch_at(l), pos);
  }
  if (trace) {
    trace->query_levels = cfg.query_levels;
    trace->key_levels = cfg.key_levels;
    trace->similarity.clear();
  }
  for (std::size_t layer = 0; layer < cfg.cct_layers; ++layer) {
    tokens = cct_layer(params, cfg, layer, tokens, trace);
  }

  std::array<Var<T>, 4> out = encoder;
  for (int l : cfg.query_levels) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const auto p = "cct." + level_str(l) + ".reconstruct.";
    out[idx] = reconstruct(*tokens[idx], cfg.grid_height(), cfg.grid_width(), cfg.patch_at(l),
                           param(g, params, p + "weight"), param(g, params, p + "bias"));
  }
  return out;
}

#define UCT_INSTANTIATE_CCT(T)                                                                                 \
  template void add_params(ParamFactory<T>&, const ModelConfig&);                                              \
  template Var<T> tokenize(Var<T>, std::size_t, std::optional<Var<T>>);                                        \
  template Var<T> concat_tokens(const std::vector<Var<T>>&);                                                   \
  template Var<T> cross_attention_head(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Tensor<T>*);                    \
  template MultiHeadOutput<T> multi_head_attention(Var<T>, Var<T>, const std::vector<HeadWeights<T>>&);        \
  template LevelTokens<T> cct_layer(ParamStore<T>&, const ModelConfig&, std::size_t, const LevelTokens<T>&,    \
                                    AttentionTrace<T>*);                                                       \
  template Var<T> reconstruct(Var<T>, std::size_t, std::size_t, std::size_t, Var<T>, Var<T>);                  \
  template std::array<Var<T>, 4> cct_forward(ParamStore<T>&, const ModelConfig&, const std::array<Var<T>, 4>&, \
                                             AttentionTrace<T>*);

UCT_INSTANTIATE_CCT(float)
UCT_INSTANTIATE_CCT(double)

}  // namespace uct::cct
