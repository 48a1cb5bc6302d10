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

#include <cstdint>
#include <string>
#include <string_view>

#include "uctransnet/autograd.hpp"

namespace uct {

// Seed of one parameter tensor: a function of the run seed and the tensor's
// canonical name only, so the U-Net weights come out identical whether or
// not CTrans parameters are created alongside them.
std::uint64_t parameter_seed(std::uint64_t run_seed, std::string_view name);

// Registers named parameters with the initialisers used across the model:
// Kaiming-uniform for conv kernels, Xavier-uniform for linear/attention
// projections, ones/zeros for norm gains/offsets, zeros for biases and
// positional embeddings.
template <class T>
class ParamFactory {
 public:
  ParamFactory(ParamStore<T>& store, std::uint64_t seed) : store_(store), seed_(seed) {}

  void kaiming(const std::string& name, Shape shape, std::size_t fan_in);
  void xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out);
  void zeros(const std::string& name, Shape shape);
  void ones(const std::string& name, Shape shape);

 private:
  void uniform(const std::string& name, Shape shape, double bound);

  ParamStore<T>& store_;
  std::uint64_t seed_;
};

extern template class ParamFactory<float>;
extern template class ParamFactory<double>;

}  // namespace uct
