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

#include <random>

#include "attention_oracle.hpp"
#include "doctest.h"
#include "test_support.hpp"
#include "uctransnet/cct.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"
#include "uctransnet/unet.hpp"

using namespace uct;
using uct::testing::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  cfg.height = cfg.width = 32;
  cfg.patch_size = 8;
  cfg.heads = 2;
  cfg.cct_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("tokenize emits d tokens of C channels") {
  Graph<double> g;
  std::mt19937_64 rng(1);
  auto t = cct::tokenize(g.constant(random_tensor({5, 64, 64}, rng)), 8);
  CHECK(t.shape() == Shape{64, 5});

  // Input resolution 224 with P = 16.
  auto big = cct::tokenize(g.constant(Tensor<double>({1, 224, 224}, 1.0)), 16);
  CHECK(big.dim(0) == 196);

  // Token (r, c) of the grid is the mean of its patch.
  auto x = random_tensor({2, 4, 4}, rng);
  auto tok = cct::tokenize(g.constant(x), 2).value();
  double expect = (x.at({1, 2, 0}) + x.at({1, 2, 1}) + x.at({1, 3, 0}) + x.at({1, 3, 1})) / 4;
  CHECK(tok.at({2, 1}) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(cct::tokenize(g.constant(Tensor<double>({1, 12, 12})), 8), ConfigError);
}

TEST_CASE("token counts agree across the four levels") {
  for (std::size_t size : {16u, 32u, 64u, 128u}) {
    for (std::size_t patch : {8u, 16u}) {
      if (size % patch) continue;
      ModelConfig cfg = small_config();
      cfg.height = cfg.width = size;
      cfg.patch_size = patch;
      cfg.validate();
      Graph<double> g;
      std::array<std::size_t, 4> counts{};
      for (int l = 1; l <= 4; ++l) {
        auto feat = g.constant(Tensor<double>({cfg.channels_at(l), cfg.height_at(l), cfg.width_at(l)}, 0.5));
        counts[static_cast<std::size_t>(l - 1)] = cct::tokenize(feat, cfg.patch_at(l)).dim(0);
      }
      CAPTURE(size);
      CAPTURE(patch);
      CHECK(counts[0] == cfg.token_count());
      CHECK(counts[1] == counts[0]);
      CHECK(counts[2] == counts[0]);
      CHECK(counts[3] == counts[0]);
    }
  }
}

TEST_CASE("concat_tokens") {
  ModelConfig full_size;
  full_size.channels = {64, 128, 256, 512};
  CHECK(full_size.key_channels() == 960);

  Graph<double> g;
  std::mt19937_64 rng(2);
  std::vector<Var<double>> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(g.constant(random_tensor({4, 2}, rng)));
  auto all = cct::concat_tokens(parts);
  CHECK(all.shape() == Shape{4, 8});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ops::slice(all, 1, 2 * i, 2 * i + 2).value() == parts[i].value());
  }
}

TEST_CASE("cross_attention_head shapes and uniform case") {
  Graph<double> g;
  std::mt19937_64 rng(3);
  auto ti = g.constant(random_tensor({16, 4}, rng));
  auto ts = g.constant(random_tensor({16, 10}, rng));
  auto wq = g.constant(random_tensor({4, 4}, rng));
  auto wk = g.constant(random_tensor({10, 10}, rng));
  auto wv = g.constant(random_tensor({10, 10}, rng));
  Tensor<double> m;
  auto ca = cct::cross_attention_head(ti, ts, wq, wk, wv, &m);
  CHECK(m.shape() == Shape{4, 10});
  CHECK(ca.shape() == Shape{4, 16});

  // Zero queries: every logit equal, softmax uniform, rows = mean of V rows.
  auto zero_q = g.constant(Tensor<double>({4, 4}, 0.0));
  auto uniform = cct::cross_attention_head(ti, ts, zero_q, wk, wv).value();
  auto v = ops::matmul(ts, wv).value();  // d × C_Σ, i.e. Vᵀ
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 16; ++t) {
      double mean = 0;
      for (std::size_t j = 0; j < 10; ++j) mean += v.at({t, j});
      CHECK(uniform.at({c, t}) == doctest::Approx(mean / 10).epsilon(1e-12));
    }

  CHECK_THROWS_AS(cct::cross_attention_head(g.constant(Tensor<double>({8, 4})), ts, wq, wk, wv), DimensionError);
}

TEST_CASE("cross_attention_head matches the naive loop oracle") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = ext(rng), ci = ext(rng), cs = std::max(ci, ext(rng));
    auto ti = random_tensor({d, ci}, rng), ts = random_tensor({d, cs}, rng);
    auto wq = random_tensor({ci, ci}, rng), wk = random_tensor({cs, cs}, rng), wv = random_tensor({cs, cs}, rng);
    auto oracle = uct::testing::naive_cross_attention(ti.storage(), ts.storage(), wq.storage(), wk.storage(),
                                                      wv.storage(), d, ci, cs);
    Graph<double> g;
    Tensor<double> m;
    auto ca = cct::cross_attention_head(g.constant(ti), g.constant(ts), g.constant(wq), g.constant(wk),
                                        g.constant(wv), &m)
                  .value();
    if (ci * cs < 2) continue;
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(std::abs(ca[i] - oracle.output[i]) < 1e-6);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(m[i] - oracle.similarity[i]) < 1e-6);
  }
}

TEST_CASE("multi-head averaging degenerates to a single head") {
  Graph<double> g;
  std::mt19937_64 rng(5);
  auto ti = g.constant(random_tensor({6, 3}, rng));
  auto ts = g.constant(random_tensor({6, 7}, rng));
  cct::HeadWeights<double> h{g.constant(random_tensor({3, 3}, rng)), g.constant(random_tensor({7, 7}, rng)),
                             g.constant(random_tensor({7, 7}, rng))};
  auto single = cct::cross_attention_head(ti, ts, h.query, h.key, h.value).value();

  auto one = cct::multi_head_attention(ti, ts, std::vector{h});
  CHECK(one.mca.value() == single);

  auto shared = cct::multi_head_attention(ti, ts, std::vector{h, h, h, h});
  for (std::size_t i = 0; i < single.size(); ++i) CHECK(shared.mca.value()[i] == doctest::Approx(single[i]).epsilon(1e-12));
  CHECK(shared.similarity.size() == 4);

  // Distinct heads really are averaged.
  cct::HeadWeights<double> h2{g.constant(random_tensor({3, 3}, rng)), g.constant(random_tensor({7, 7}, rng)),
                              g.constant(random_tensor({7, 7}, rng))};
  auto second = cct::cross_attention_head(ti, ts, h2.query, h2.key, h2.value).value();
  auto pair = cct::multi_head_attention(ti, ts, std::vector{h, h2});
  for (std::size_t i = 0; i < single.size(); ++i) {
    CHECK(pair.mca.value()[i] == doctest::Approx((single[i] + second[i]) / 2).epsilon(1e-12));
  }
}

TEST_CASE("default head and layer counts") {
  ModelConfig cfg;
  CHECK(cfg.heads == 4);
  CHECK(cfg.cct_layers == 4);
}

TEST_CASE("cct_layer residual passthrough with a zeroed MLP output") {
  ModelConfig cfg = small_config();
  auto params = init_params<double>(cfg, 11);
  for (int l : cfg.query_levels) {
    const auto p = "cct.layer0.level" + std::to_string(l) + ".mlp.fc2.";
    params.get(p + "weight").value.fill(0.0);
    params.get(p + "bias").value.fill(0.0);
  }
  std::mt19937_64 rng(6);
  Graph<double> g;
  cct::LevelTokens<double> tokens;
  std::vector<Var<double>> keys;
  const std::size_t d = cfg.token_count();
  for (int l = 1; l <= 4; ++l) {
    tokens[static_cast<std::size_t>(l - 1)] = g.constant(random_tensor({d, cfg.channels_at(l)}, rng));
    keys.push_back(*tokens[static_cast<std::size_t>(l - 1)]);
  }
  auto out = cct::cct_layer(params, cfg, 0, tokens);

  auto ln = [&](const std::string& prefix, Var<double> x) {
    return ops::layer_norm(x, 1, g.param(params.get(prefix + ".gain")), g.param(params.get(prefix + ".offset")));
  };
  auto key_tokens = ln("cct.layer0.kv_norm", cct::concat_tokens(keys));
  for (int l = 1; l <= 4; ++l) {
    std::vector<cct::HeadWeights<double>> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      heads.push_back({g.param(params.get(cct::query_name(0, h, l))), g.param(params.get(cct::key_name(0, h))),
                       g.param(params.get(cct::value_name(0, h)))});
    }
    auto s = ln("cct.layer0.level" + std::to_string(l) + ".attn_norm", *tokens[static_cast<std::size_t>(l - 1)]);
    auto mca = ops::transpose(cct::multi_head_attention(s, key_tokens, heads).mca).value();
    const auto& o = out[static_cast<std::size_t>(l - 1)]->value();
    REQUIRE(o.shape() == mca.shape());
    for (std::size_t i = 0; i < o.size(); ++i) CHECK(o[i] == doctest::Approx(mca[i]).epsilon(1e-12));
  }
}

TEST_CASE("cct_layer keeps token shapes and carries key-only levels") {
  ModelConfig cfg = small_config();
  cfg.query_levels = {2, 3, 4};
  auto params = init_params<double>(cfg, 12);
  std::mt19937_64 rng(7);
  Graph<double> g;
  cct::LevelTokens<double> tokens;
  for (int l = 1; l <= 4; ++l) {
    tokens[static_cast<std::size_t>(l - 1)] = g.constant(random_tensor({cfg.token_count(), cfg.channels_at(l)}, rng));
  }
  auto cur = tokens;
  for (std::size_t layer = 0; layer < cfg.cct_layers; ++layer) {
    cur = cct::cct_layer(params, cfg, layer, cur);
    for (int l = 1; l <= 4; ++l) CHECK(cur[static_cast<std::size_t>(l - 1)]->shape() == tokens[static_cast<std::size_t>(l - 1)]->shape());
  }
  CHECK(cur[0]->id() == tokens[0]->id());
}

TEST_CASE("reconstruct maps tokens back to the level resolution") {
  std::mt19937_64 rng(8);
  ParamStore<double> store;
  auto& tok = store.add("tokens", random_tensor({64, 3}, rng));
  auto& w = store.add("w", random_tensor({3, 3, 3, 3}, rng));
  auto& b = store.add("b", random_tensor({3}, rng, 0.5, 1.0));
  Graph<double> g;
  auto map = cct::reconstruct(g.param(tok), 8, 8, 8, g.param(w), g.param(b));
  CHECK(map.shape() == Shape{3, 64, 64});
  g.backward(uct::testing::weighted_sum(map));
  double norm = 0;
  for (auto v : tok.grad.data()) norm += std::abs(v);
  CHECK(norm > 0.0);
}

TEST_CASE("cct_forward wiring") {
  ModelConfig cfg = small_config();
  std::mt19937_64 rng(9);
  SUBCASE("default queries and keys replace every level") {
    auto params = init_params<double>(cfg, 1);
    Graph<double> g;
    std::array<Var<double>, 4> enc;
    for (int l = 1; l <= 4; ++l) {
      enc[static_cast<std::size_t>(l - 1)] =
          g.constant(random_tensor({cfg.channels_at(l), cfg.height_at(l), cfg.width_at(l)}, rng));
    }
    cct::AttentionTrace<double> trace;
    auto out = cct::cct_forward(params, cfg, enc, &trace);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(out[i].shape() == enc[i].shape());
      CHECK(out[i].id() != enc[i].id());
    }
    REQUIRE(trace.similarity.size() == cfg.cct_layers);
    for (const auto& layer : trace.similarity) {
      REQUIRE(layer.size() == 4);
      for (const auto& level : layer) {
        REQUIRE(level.size() == cfg.heads);
        for (const auto& m : level) {
          CHECK(m.dim(1) == cfg.key_channels());
          for (std::size_t r = 0; r < m.dim(0); ++r) {
            double total = 0;
            for (std::size_t c = 0; c < m.dim(1); ++c) {
              CHECK(m.at({r, c}) >= 0.0);
              total += m.at({r, c});
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
          }
        }
      }
    }
  }
  SUBCASE("Q234 passes level 1 through") {
    cfg.query_levels = {2, 3, 4};
    auto params = init_params<double>(cfg, 1);
    Graph<double> g;
    std::array<Var<double>, 4> enc;
    for (int l = 1; l <= 4; ++l) {
      enc[static_cast<std::size_t>(l - 1)] =
          g.constant(random_tensor({cfg.channels_at(l), cfg.height_at(l), cfg.width_at(l)}, rng));
    }
    auto out = cct::cct_forward(params, cfg, enc);
    CHECK(out[0].id() == enc[0].id());
    CHECK(out[1].id() != enc[1].id());
  }
  SUBCASE("empty query set is a config error") {
    cfg.query_levels = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(init_params<double>(cfg, 1), ConfigError);
  }
}
