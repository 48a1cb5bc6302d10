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

#include "uctransnet/init.hpp"

#include <cmath>
#include <random>

namespace uct {

std::uint64_t parameter_seed(std::uint64_t run_seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  // splitmix64 finaliser over the combination
  std::uint64_t z = h ^ (run_seed + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class T>
void ParamFactory<T>::uniform(const std::string& name, Shape shape, double bound) {
  std::mt19937_64 rng(parameter_seed(seed_, name));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  store_.add(name, std::move(t));
}

template <class T>
void ParamFactory<T>::kaiming(const std::string& name, Shape shape, std::size_t fan_in) {
  uniform(name, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)));
}

template <class T>
void ParamFactory<T>::xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  uniform(name, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template <class T>
void ParamFactory<T>::zeros(const std::string& name, Shape shape) {
  store_.add(name, Tensor<T>(std::move(shape), T{0}));
}

template <class T>
void ParamFactory<T>::ones(const std::string& name, Shape shape) {
  store_.add(name, Tensor<T>(std::move(shape), T{1}));
}

template class ParamFactory<float>;
template class ParamFactory<double>;

}  // namespace uct
