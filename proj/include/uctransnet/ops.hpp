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

#include <cstddef>
#include <optional>
#include <type_traits>
#include <vector>

#include "uctransnet/autograd.hpp"

namespace uct::ops {

inline constexpr double kNormEps = 1e-5;

enum class Activation { relu, sigmoid, gelu };

// Elementwise, operands of identical shape.
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> div(Var<T> a, Var<T> b);
template <class T> Var<T> add_scalar(Var<T> a, T c);
template <class T> Var<T> scale(Var<T> a, T c);

// Broadcast a 1-D vector along `axis` of x: x + b and x * s.
template <class T> Var<T> bias_add(Var<T> x, Var<T> b, std::size_t axis);
template <class T> Var<T> scale_along(Var<T> x, Var<T> s, std::size_t axis);

// C = A·B for A: m×k, B: k×n.
template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> transpose(Var<T> a);
template <class T> Var<T> reshape(Var<T> a, Shape shape);
template <class T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
template <class T> Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end);

// Max-subtracted softmax along `axis`.
template <class T> Var<T> softmax(Var<T> x, std::size_t axis);
template <class T> Var<T> log_softmax(Var<T> x, std::size_t axis);

// Splits x into consecutive blocks of `group` elements and maps each block to
// zero mean / unit variance: (x - mean) / sqrt(var + eps), biased variance.
template <class T> Var<T> standardize(Var<T> x, std::size_t group, T eps = T(kNormEps));
// Whole-map normalisation of one similarity matrix.
template <class T> Var<T> instance_norm(Var<T> s, T eps = T(kNormEps));
// Per-slice normalisation along the last axis followed by gain/offset.
// `axis` must be the last axis.
template <class T>
Var<T> layer_norm(Var<T> x, std::size_t axis, Var<T> gain, Var<T> offset, T eps = T(kNormEps));

// Cross-correlation on a single C_in×H×W map with C_out×C_in×k×k kernels.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t pad,
              std::size_t stride = 1);
template <class T> Var<T> upsample_nearest(Var<T> x, std::size_t factor);
template <class T> Var<T> max_pool2d(Var<T> x, std::size_t k = 2);
// Non-overlapping k×k mean pooling.
template <class T> Var<T> avg_pool2d(Var<T> x, std::size_t k);
// C×H×W -> C×1×1 spatial mean.
template <class T> Var<T> global_avg_pool(Var<T> x);

template <class T> Var<T> relu(Var<T> x);
template <class T> Var<T> sigmoid(Var<T> x);
// Exact (erf) GELU.
template <class T> Var<T> gelu(Var<T> x);
template <class T> Var<T> activation(Var<T> x, Activation kind);

// Reductions to a 1-element tensor.
template <class T> Var<T> sum(Var<T> x);
template <class T> Var<T> mean(Var<T> x);

}  // namespace uct::ops
