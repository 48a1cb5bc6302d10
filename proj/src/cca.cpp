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

#include "uctransnet/cca.hpp"

#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"

namespace uct::cca {

std::string l1_name(int level) { return "cca.level" + std::to_string(level) + ".l1"; }
std::string l2_name(int level) { return "cca.level" + std::to_string(level) + ".l2"; }

template <class T>
void add_params(ParamFactory<T>& f, const ModelConfig& cfg) {
  for (int l = 1; l <= 4; ++l) {
    if (!cfg.has_skip(l)) continue;
    const std::size_t c = cfg.channels_at(l);
    f.xavier(l1_name(l), {c, c}, c, c);
    f.xavier(l2_name(l), {c, c}, c, c);
  }
}

template <class T>
Var<T> cca_gate(Var<T> transformer_out, Var<T> decoder_up, Var<T> l1, Var<T> l2, bool insert_relu, Tensor<T>* mask) {
  if (transformer_out.shape() != decoder_up.shape() || transformer_out.shape().size() != 3) {
    throw FusionError("cca_gate: transformer branch " + shape_str(transformer_out.shape()) + " vs decoder branch " +
                      shape_str(decoder_up.shape()));
  }
  const std::size_t c = transformer_out.dim(0);
  if (l1.shape() != Shape{c, c} || l2.shape() != Shape{c, c}) {
    throw DimensionError("cca_gate: linear maps must be " + std::to_string(c) + "x" + std::to_string(c) + ", got " +
                         shape_str(l1.shape()) + " and " + shape_str(l2.shape()));
  }
  auto pooled_o = ops::reshape(ops::global_avg_pool(transformer_out), {c, 1});
  auto pooled_d = ops::reshape(ops::global_avg_pool(decoder_up), {c, 1});
  auto logits = ops::add(ops::matmul(l1, pooled_o), ops::matmul(l2, pooled_d));
  if (insert_relu) logits = ops::relu(logits);
  auto gate = ops::reshape(ops::sigmoid(logits), {c});
  if (mask) *mask = gate.value();
  return ops::scale_along(transformer_out, gate, 0);
}

template <class T>
Var<T> fuse(Var<T> gated, Var<T> decoder_up) {
  const auto& a = gated.shape();
  const auto& b = decoder_up.shape();
  if (a.size() != 3 || b.size() != 3 || a[1] != b[1] || a[2] != b[2]) {
    throw FusionError("fuse: cannot concatenate " + shape_str(a) + " with " + shape_str(b));
  }
  return ops::concat(std::vector<Var<T>>{gated, decoder_up}, 0);
}

#define UCT_INSTANTIATE_CCA(T)                                                     \
  template void add_params(ParamFactory<T>&, const ModelConfig&);                  \
  template Var<T> cca_gate(Var<T>, Var<T>, Var<T>, Var<T>, bool, Tensor<T>*);     \
  template Var<T> fuse(Var<T>, Var<T>);

UCT_INSTANTIATE_CCA(float)
UCT_INSTANTIATE_CCA(double)

}  // namespace uct::cca
