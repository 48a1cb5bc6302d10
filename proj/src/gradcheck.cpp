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

#include "uctransnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>

#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"
#include "uctransnet/training.hpp"
#include "uctransnet/unet.hpp"

namespace uct {

namespace {

using G = Graph<double>;
using V = Var<double>;
using Fn = std::function<V(G&, const std::vector<V>&)>;

Tensor<double> uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

// Values with |v| >= 0.1 so ReLU-style kinks sit far from every sample.
Tensor<double> away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  auto t = uniform(shape, rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.storage()) v = sign(rng) ? v : -v;
  return t;
}

// Weighted sum reduction recorded under its own name, so a fault injected
// into `sum` or `mul` only shows up in the checks of those ops.
V probe(V y, const Tensor<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * y.value()[i];
  return y.graph().record("gradcheck_probe", Tensor<double>({1}, s), {y},
                          [y, w](G& g, const Tensor<double>& gy, const Tensor<double>&) {
                            Tensor<double> gx(w.shape());
                            for (std::size_t i = 0; i < w.size(); ++i) gx[i] = w[i] * gy[0];
                            g.accumulate(y, gx);
                          });
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

OpCheck check_op(const std::string& op, const Fn& fn, std::vector<Tensor<double>> inputs, const GradcheckOptions& o,
                 std::mt19937_64& rng) {
  ParamStore<double> store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), std::move(inputs[i]));
  Tensor<double> weights;
  auto evaluate = [&](bool backward) {
    G g;
    std::vector<V> vars;
    for (auto& p : store) vars.push_back(g.param(p));
    auto y = fn(g, vars);
    if (weights.empty()) weights = uniform(y.shape(), rng, 0.5, 1.5);
    auto loss = probe(y, weights);
    if (backward) g.backward(loss);
    return std::pair{loss.value()[0], g.kink_signature()};
  };
  store.zero_grad();
  const auto base = evaluate(true).second;
  OpCheck check;
  check.op = op;
  for (auto& p : store) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + o.step;
      const auto up = evaluate(false);
      p.value[k] = orig - o.step;
      const auto down = evaluate(false);
      p.value[k] = orig;
      if (up.second != base || down.second != base) continue;
      const double numeric = (up.first - down.first) / (2 * o.step);
      check.max_rel_error = std::max(check.max_rel_error, rel_error(p.grad[k], numeric, o.floor));
      ++check.checked;
    }
  }
  check.passed = check.checked > 0 && check.max_rel_error < o.tolerance;
  return check;
}

}  // namespace

std::vector<OpCheck> check_primitives(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  auto r = [&](Shape s) { return uniform(s, rng); };
  std::vector<OpCheck> out;
  auto run = [&](const std::string& op, const Fn& fn, std::vector<Tensor<double>> in) {
    out.push_back(check_op(op, fn, std::move(in), o, rng));
  };
  run("add", [](G&, const std::vector<V>& x) { return ops::add(x[0], x[1]); }, {r({2, 3}), r({2, 3})});
  run("sub", [](G&, const std::vector<V>& x) { return ops::sub(x[0], x[1]); }, {r({2, 3}), r({2, 3})});
  run("mul", [](G&, const std::vector<V>& x) { return ops::mul(x[0], x[1]); }, {r({2, 3}), r({2, 3})});
  run("div", [](G&, const std::vector<V>& x) { return ops::div(x[0], x[1]); }, {r({2, 3}), uniform({2, 3}, rng, 0.5, 1.5)});
  run("add_scalar", [](G&, const std::vector<V>& x) { return ops::add_scalar(x[0], 0.7); }, {r({4})});
  run("scale", [](G&, const std::vector<V>& x) { return ops::scale(x[0], -1.3); }, {r({4})});
  run("bias_add", [](G&, const std::vector<V>& x) { return ops::bias_add(x[0], x[1], 0); }, {r({3, 2, 2}), r({3})});
  run("scale_along", [](G&, const std::vector<V>& x) { return ops::scale_along(x[0], x[1], 1); }, {r({2, 3}), r({3})});
  run("matmul", [](G&, const std::vector<V>& x) { return ops::matmul(x[0], x[1]); }, {r({3, 4}), r({4, 2})});
  run("transpose", [](G&, const std::vector<V>& x) { return ops::transpose(x[0]); }, {r({3, 2})});
  run("reshape", [](G&, const std::vector<V>& x) { return ops::reshape(x[0], {3, 2}); }, {r({2, 3})});
  run("concat", [](G&, const std::vector<V>& x) { return ops::concat(x, 1); }, {r({2, 2}), r({2, 3})});
  run("slice", [](G&, const std::vector<V>& x) { return ops::slice(x[0], 1, 1, 3); }, {r({2, 4})});
  run("softmax", [](G&, const std::vector<V>& x) { return ops::softmax(x[0], 1); }, {r({2, 4})});
  run("log_softmax", [](G&, const std::vector<V>& x) { return ops::log_softmax(x[0], 0); }, {r({3, 2})});
  run("standardize", [](G&, const std::vector<V>& x) { return ops::standardize(x[0], 4); }, {r({2, 4})});
  run("conv2d", [](G&, const std::vector<V>& x) { return ops::conv2d(x[0], x[1], x[2], 1); },
      {r({2, 4, 4}), r({3, 2, 3, 3}), r({3})});
  run("upsample_nearest", [](G&, const std::vector<V>& x) { return ops::upsample_nearest(x[0], 2); }, {r({2, 2, 2})});
  run("max_pool2d", [](G&, const std::vector<V>& x) { return ops::max_pool2d(x[0], 2); }, {r({2, 4, 4})});
  run("avg_pool2d", [](G&, const std::vector<V>& x) { return ops::avg_pool2d(x[0], 2); }, {r({2, 4, 4})});
  run("global_avg_pool", [](G&, const std::vector<V>& x) { return ops::global_avg_pool(x[0]); }, {r({3, 2, 2})});
  run("relu", [](G&, const std::vector<V>& x) { return ops::relu(x[0]); }, {away_from_zero({6}, rng)});
  run("sigmoid", [](G&, const std::vector<V>& x) { return ops::sigmoid(x[0]); }, {r({6})});
  run("gelu", [](G&, const std::vector<V>& x) { return ops::gelu(x[0]); }, {r({6})});
  run("sum", [](G&, const std::vector<V>& x) { return ops::sum(x[0]); }, {r({2, 3})});
  return out;
}

GradcheckReport gradcheck_model(const ModelConfig& model, const GradcheckOptions& o) {
  ModelConfig cfg = model;
  cfg.dtype = DType::f64;
  cfg.validate();
  GradcheckReport report;
  report.tolerance = o.tolerance;
  report.ops = check_primitives(o);

  auto params = init_params<double>(cfg, o.seed);
  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  // Small random offsets break the symmetric zero initialisation of biases
  // and positional embeddings, so their gradients are generic.
  for (auto& p : params) {
    for (auto& v : p.value.storage()) v += std::uniform_real_distribution<double>(-0.05, 0.05)(rng);
  }
  const auto image = uniform({cfg.in_channels, cfg.height, cfg.width}, rng, 0.0, 1.0);
  LabelMap mask(cfg.height, cfg.width);
  std::uniform_int_distribution<int> label(0, static_cast<int>(cfg.num_classes) - 1);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = label(rng);

  auto evaluate = [&](bool backward) {
    G g;
    auto loss = combined_loss(forward(params, cfg, g.constant(image)), mask).total;
    if (backward) g.backward(loss);
    return std::pair{loss.value()[0], g.kink_signature()};
  };
  params.zero_grad();
  const auto base = evaluate(true).second;

  std::vector<Parameter<double>*> tensors;
  for (auto& p : params) tensors.push_back(&p);
  std::uniform_int_distribution<std::size_t> pick_tensor(0, tensors.size() - 1);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t total = 0;
  for (auto* p : tensors) total += p->value.size();
  const std::size_t target = std::min(o.samples, total);
  const std::size_t max_draws = 50 * target + 1000;
  std::size_t draws = 0;
  while (report.checked < target && draws++ < max_draws) {
    // Tensor first, then element: small tensors (gates, biases) get the same
    // chance of being visited as the large kernels.
    const std::size_t ti = pick_tensor(rng);
    auto& p = *tensors[ti];
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, p.value.size() - 1)(rng);
    if (!seen.insert({ti, k}).second) continue;
    const double orig = p.value[k];
    p.value[k] = orig + o.step;
    const auto up = evaluate(false);
    p.value[k] = orig - o.step;
    const auto down = evaluate(false);
    p.value[k] = orig;
    if (up.second != base || down.second != base) {
      ++report.resampled;
      continue;
    }
    const double numeric = (up.first - down.first) / (2 * o.step);
    const double err = rel_error(p.grad[k], numeric, o.floor);
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter = p.name;
      report.worst_index = k;
    }
    ++report.checked;
  }
  report.passed = report.checked >= target && report.max_rel_error < o.tolerance &&
                  std::all_of(report.ops.begin(), report.ops.end(), [](const OpCheck& c) { return c.passed; });
  return report;
}

std::vector<std::string> GradcheckReport::failing_ops() const {
  std::vector<std::string> out;
  for (const auto& c : ops) {
    if (!c.passed) out.push_back(c.op);
  }
  return out;
}

std::string GradcheckReport::to_csv() const {
  std::string s = "check,max_rel_error,worst_parameter,checked,passed\n";
  char line[256];
  for (const auto& c : ops) {
    std::snprintf(line, sizeof line, "op:%s,%.6e,,%zu,%s\n", c.op.c_str(), c.max_rel_error, c.checked,
                  c.passed ? "true" : "false");
    s += line;
  }
  std::snprintf(line, sizeof line, "model,%.6e,%s[%zu],%zu,%s\n", max_rel_error, worst_parameter.c_str(), worst_index,
                checked, passed ? "true" : "false");
  s += line;
  return s;
}

std::string GradcheckReport::summary() const {
  char line[512];
  std::string s;
  std::snprintf(line, sizeof line, "gradcheck %s: max relative error %.3e at %s[%zu] over %zu sampled parameters "
                "(%zu kink draws discarded, tolerance %.1e)\n",
                passed ? "PASS" : "FAIL", max_rel_error, worst_parameter.c_str(), worst_index, checked, resampled,
                tolerance);
  s += line;
  for (const auto& op : failing_ops()) s += "  adjoint mismatch in op '" + op + "'\n";
  return s;
}

}  // namespace uct
