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
#include <cstdint>
#include <string>
#include <vector>

#include "uctransnet/model_config.hpp"

namespace uct {

// Finite-difference verification of the hand-written adjoints.
//
// Every primitive is checked in isolation on small random inputs (so a
// broken adjoint is reported under its op name), then the full model is
// checked on randomly sampled parameter elements. Relative error is
// |a - n| / max(|a|, |n|, floor). Samples whose ±h perturbation flips a
// ReLU or max-pool decision are discarded and redrawn.
struct GradcheckOptions {
  std::size_t samples = 256;
  double tolerance = 1e-4;
  double step = 1e-5;
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

struct OpCheck {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<OpCheck> ops;
  double max_rel_error = 0.0;  // full model
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t resampled = 0;   // draws discarded at kinks
  double tolerance = 0.0;
  bool passed = false;

  std::vector<std::string> failing_ops() const;
  std::string to_csv() const;
  std::string summary() const;
};

std::vector<OpCheck> check_primitives(const GradcheckOptions& options);
GradcheckReport gradcheck_model(const ModelConfig& cfg, const GradcheckOptions& options);

}  // namespace uct
