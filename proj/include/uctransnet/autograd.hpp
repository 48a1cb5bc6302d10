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
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uctransnet/tensor.hpp"

namespace uct {

// A named learned tensor. `grad` is accumulated by Graph::backward and
// consumed by the optimizer.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Ordered collection of parameters with stable addresses. Iteration order is
// insertion order, which is also the checkpoint order.
template <class T>
class ParamStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value);

  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;
  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t element_count() const noexcept;
  void zero_grad();

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <class T>
class Var {
 public:
  Var() = default;

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t size() const { return value().size(); }
  const Tensor<T>& grad() const;

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of primitive applications. Nodes are appended in evaluation order,
// which is a topological order; backward() visits them in reverse, so the
// accumulation order is fixed and replays are bitwise reproducible.
template <class T>
class Graph {
 public:
  // Receives the adjoint and the value of the node it belongs to.
  using Backward = std::function<void(Graph&, const Tensor<T>& grad, const Tensor<T>& out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  // Leaf bound to a parameter. Repeated calls for the same parameter return
  // the same node.
  Var<T> param(Parameter<T>& p);

  // Appends an op result. `backward` receives the result's adjoint and value
  // and pushes adjoints into its inputs through accumulate(). Throws NumericError if `value`
  // holds NaN/Inf.
  Var<T> record(std::string_view op, Tensor<T> value,
                std::initializer_list<Var<T>> inputs, Backward backward);
  Var<T> record(std::string_view op, Tensor<T> value,
                const std::vector<Var<T>>& inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor<T>& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id()].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Adds `delta` into the adjoint of `v`; no-op when v needs no gradient.
  void accumulate(Var<T> v, const Tensor<T>& delta);
  // Mutable adjoint buffer of `v`, zero-initialised on first access.
  Tensor<T>& grad_buffer(Var<T> v);

  // Reverse-mode sweep from a scalar. Node adjoints are reset first, then
  // parameter leaves add their adjoint into Parameter::grad.
  void backward(Var<T> loss);

  // Running hash over non-smooth decisions (ReLU masks, max-pool argmax).
  // Finite-difference checks compare it to detect kink crossings.
  std::uint64_t kink_signature() const noexcept { return kink_; }
  void mix_kink(std::uint64_t value) noexcept;

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: element references survive push_back
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  std::uint64_t kink_ = 0xcbf29ce484222325ULL;
};

// Test hook: scales the adjoint entering every node whose op name matches.
// Used to demonstrate that gradient checking catches a corrupted primitive.
void inject_adjoint_fault(std::string op, double scale);
void clear_adjoint_fault();

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace uct
