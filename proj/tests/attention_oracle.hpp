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

#include <cmath>
#include <vector>

namespace uct::testing {

// Naive loop evaluation of one channel-wise cross-attention head, written
// straight from the definition with no shared code:
//   Q[c][t] = Σ_k T[t][k] Wq[k][c]          (C_i × d)
//   K[j][t] = Σ_k S[t][k] Wk[k][j]          (C_Σ × d), V likewise
//   L[c][j] = Σ_t Q[c][t] K[j][t] / √C_Σ
//   N = (L − mean L) / √(var L + eps)       over the whole map
//   M[c][·] = softmax(N[c][·])
//   CA[c][t] = Σ_j M[c][j] V[j][t]
// Row-major flat vectors throughout.
struct AttentionOracle {
  std::vector<double> similarity;  // C_i × C_Σ
  std::vector<double> output;      // C_i × d
};

inline AttentionOracle naive_cross_attention(const std::vector<double>& tokens, const std::vector<double>& key_tokens,
                                             const std::vector<double>& wq, const std::vector<double>& wk,
                                             const std::vector<double>& wv, std::size_t d, std::size_t ci,
                                             std::size_t cs, double eps = 1e-5) {
  std::vector<double> q(ci * d, 0.0), k(cs * d, 0.0), v(cs * d, 0.0);
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t x = 0; x < ci; ++x) q[c * d + t] += tokens[t * ci + x] * wq[x * ci + c];
  for (std::size_t j = 0; j < cs; ++j)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t x = 0; x < cs; ++x) {
        k[j * d + t] += key_tokens[t * cs + x] * wk[x * cs + j];
        v[j * d + t] += key_tokens[t * cs + x] * wv[x * cs + j];
      }
  std::vector<double> logits(ci * cs, 0.0);
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t j = 0; j < cs; ++j) {
      for (std::size_t t = 0; t < d; ++t) logits[c * cs + j] += q[c * d + t] * k[j * d + t];
      logits[c * cs + j] /= std::sqrt(static_cast<double>(cs));
    }
  double mean = 0.0;
  for (double l : logits) mean += l;
  mean /= static_cast<double>(logits.size());
  double var = 0.0;
  for (double l : logits) var += (l - mean) * (l - mean);
  var /= static_cast<double>(logits.size());
  AttentionOracle out;
  out.similarity.resize(ci * cs);
  for (std::size_t c = 0; c < ci; ++c) {
    double total = 0.0;
    for (std::size_t j = 0; j < cs; ++j) {
      const double z = (logits[c * cs + j] - mean) / std::sqrt(var + eps);
      out.similarity[c * cs + j] = std::exp(z);
      total += out.similarity[c * cs + j];
    }
    for (std::size_t j = 0; j < cs; ++j) out.similarity[c * cs + j] /= total;
  }
  out.output.assign(ci * d, 0.0);
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t j = 0; j < cs; ++j) out.output[c * d + t] += out.similarity[c * cs + j] * v[j * d + t];
  return out;
}

}  // namespace uct::testing
