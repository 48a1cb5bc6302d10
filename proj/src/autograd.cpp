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

#include "uctransnet/autograd.hpp"

#include "uctransnet/errors.hpp"

namespace uct {

namespace {

struct AdjointFault {
  std::string op;
  double scale = 1.0;
};

AdjointFault& fault() {
  static AdjointFault f;
  return f;
}

}  // namespace

void inject_adjoint_fault(std::string op, double scale) {
  fault() = {std::move(op), scale};
}

void clear_adjoint_fault() { fault() = {}; }

// ---------------------------------------------------------------------------
// ParamStore

template <class T>
Parameter<T>& ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor<T> grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

template <class T>
Parameter<T>* ParamStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
const Parameter<T>* ParamStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
Parameter<T>& ParamStore<T>::get(std::string_view name) {
  auto* p = find(name);
  if (!p) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return *p;
}

template <class T>
const Parameter<T>& ParamStore<T>::get(std::string_view name) const {
  auto* p = find(name);
  if (!p) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return *p;
}

template <class T>
std::size_t ParamStore<T>::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) {
      p.grad = Tensor<T>(p.value.shape());
    } else {
      p.grad.fill(T{0});
    }
  }
}

// ---------------------------------------------------------------------------
// Var

template <class T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

template <class T>
const Tensor<T>& Var<T>::grad() const {
  return graph_->grad(id_);
}

// ---------------------------------------------------------------------------
// Graph

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  if (!value.all_finite()) throw NumericError("constant input contains NaN/Inf");
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' contains NaN/Inf");
  Node n;
  n.op = "param";
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value,
                        std::initializer_list<Var<T>> inputs, Backward backward) {
  return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <class T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value,
                        const std::vector<Var<T>>& inputs, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError("op '" + std::string(op) + "' produced NaN/Inf");
  }
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.graph_ != this) throw ContractError("op '" + n.op + "' mixes variables from different graphs");
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
const Tensor<T>& Graph<T>::grad(std::size_t id) const {
  static const Tensor<T> kEmpty;
  const auto& n = nodes_[id];
  return n.grad.empty() ? kEmpty : n.grad;
}

template <class T>
Tensor<T>& Graph<T>::grad_buffer(Var<T> v) {
  auto& n = nodes_[v.id_];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <class T>
void Graph<T>::accumulate(Var<T> v, const Tensor<T>& delta) {
  auto& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (delta.size() != n.value.size()) {
    throw ContractError("adjoint of size " + std::to_string(delta.size()) + " pushed into node '" +
                        n.op + "' of shape " + shape_str(n.value.shape()));
  }
  auto& g = grad_buffer(v);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph_ != this) throw ContractError("backward seed belongs to a different graph");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward requires a scalar seed, got shape " +
                        shape_str(nodes_[loss.id_].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss)[0] = T{1};

  const auto& f = fault();
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.param->value.shape()) pg = Tensor<T>(n.param->value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      continue;
    }
    if (!n.backward) continue;
    if (!f.op.empty() && n.op == f.op) {
      for (auto& g : n.grad.storage()) g = static_cast<T>(g * f.scale);
    }
    n.backward(*this, n.grad, n.value);
  }
}

template <class T>
void Graph<T>::mix_kink(std::uint64_t value) noexcept {
  kink_ ^= value + 0x9e3779b97f4a7c15ULL + (kink_ << 6) + (kink_ >> 2);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Var<float>;
template class Var<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace uct
