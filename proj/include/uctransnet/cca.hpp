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

#include <string>

#include "uctransnet/autograd.hpp"
#include "uctransnet/init.hpp"
#include "uctransnet/model_config.hpp"

namespace uct::cca {

std::string l1_name(int level);
std::string l2_name(int level);

template <class T>
void add_params(ParamFactory<T>& factory, const ModelConfig& cfg);

// Channel gate on the transformer branch:
//   M = L1·GAP(O) + L2·GAP(D)        (optionally ReLU'd when insert_relu)
//   Ô = sigmoid(M) ⊙ O               (broadcast per channel)
// `mask`, when non-null, receives sigmoid(M) as a C-vector.
template <class T>
Var<T> cca_gate(Var<T> transformer_out, Var<T> decoder_up, Var<T> l1, Var<T> l2, bool insert_relu = false,
                Tensor<T>* mask = nullptr);

// Channel concatenation [gated ; decoder_up].
template <class T>
Var<T> fuse(Var<T> gated, Var<T> decoder_up);

}  // namespace uct::cca
