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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "uctransnet/autograd.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/experiment.hpp"

using namespace uct;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("uctn_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentSpec tiny_spec(const fs::path& out) {
  ExperimentSpec s;
  s.model.channels = {4, 8, 16, 32};
  s.model.height = s.model.width = 16;
  s.model.patch_size = 8;
  s.model.heads = 2;
  s.model.cct_layers = 1;
  s.train.max_iterations = 4;
  s.train.batch_size = 2;
  s.data.count = 4;
  s.output_dir = out;
  return s;
}

std::vector<std::string> lines_without_timestamp(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!is_timestamp_line(line)) out.push_back(line);
  }
  return out;
}

struct FaultGuard {
  FaultGuard(const std::string& op, double scale) { inject_adjoint_fault(op, scale); }
  ~FaultGuard() { clear_adjoint_fault(); }
};

}  // namespace

TEST_CASE("spec text round trips and hashes stably") {
  ExperimentSpec s = tiny_spec("runs/x");
  s.train.learning_rate = 3e-4;
  s.data.held_out_fraction = 0.5;
  const auto back = spec_from_text(key_value_text(s.to_key_values()));
  CHECK(key_value_text(back.to_key_values()) == key_value_text(s.to_key_values()));
  CHECK(back.hash() == s.hash());
  CHECK(s.hash().size() == 16);

  auto other = s;
  other.train.seed = 2;
  CHECK(other.hash() != s.hash());

  CHECK_THROWS_AS(spec_from_text("no_such_key = 1"), ConfigError);
  CHECK_THROWS_AS(spec_from_text("study = sideways"), ConfigError);
  auto comments = spec_from_text("# comment\nlr = 0.01\nsize = 32\n");
  CHECK(comments.train.learning_rate == 0.01);
  CHECK(comments.model.height == 32);
  CHECK(comments.model.width == 32);
}

TEST_CASE("spec validation rejects inconsistent data settings") {
  auto s = tiny_spec("runs/x");
  s.data.held_out_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_spec("runs/x");
  s.data.kind = DataSource::Kind::directory;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_NOTHROW(tiny_spec("runs/x").validate());
  CHECK_NOTHROW(miniature_config().validate());
}

TEST_CASE("skip ablation labels cover ten distinct wirings") {
  const auto labels = skip_ablation_labels();
  REQUIRE(labels.size() == 10);
  std::set<std::array<SkipMode, 4>> wirings;
  for (const auto& l : labels) wirings.insert(skip_wiring(l));
  CHECK(wirings.size() == 10);

  auto count_copies = [](const std::array<SkipMode, 4>& w) {
    return std::count(w.begin(), w.end(), SkipMode::copy);
  };
  CHECK(count_copies(skip_wiring("all")) == 4);
  CHECK(count_copies(skip_wiring("none")) == 0);
  CHECK(skip_wiring("L3")[2] == SkipMode::copy);
  CHECK(count_copies(skip_wiring("L3")) == 1);
  CHECK(skip_wiring("w/o L2")[1] == SkipMode::none);
  CHECK(count_copies(skip_wiring("w/o L2")) == 3);
  CHECK_THROWS_AS(skip_wiring("L5"), ConfigError);
}

TEST_CASE("query/key sweep labels") {
  ExperimentSpec s;
  const auto labels = qk_labels(s);
  for (const char* want : {"Q234", "K1", "K12", "K123", "K1234"}) {
    CHECK(std::find(labels.begin(), labels.end(), want) != labels.end());
  }
  ModelConfig cfg;
  apply_qk_label(cfg, "Q234");
  CHECK(cfg.query_levels == std::vector<int>{2, 3, 4});
  CHECK(cfg.key_levels == std::vector<int>{1, 2, 3, 4});
  apply_qk_label(cfg, "K12");
  CHECK(cfg.query_levels == std::vector<int>{1, 2, 3, 4});
  CHECK(cfg.key_levels == std::vector<int>{1, 2});
  CHECK_THROWS_AS(apply_qk_label(cfg, "Q21"), ConfigError);
  CHECK_THROWS_AS(apply_qk_label(cfg, "X1"), ConfigError);
  CHECK_THROWS_AS(apply_qk_label(cfg, "Q"), ConfigError);
}

TEST_CASE("primitive gradient checks pass") {
  GradcheckOptions o;
  for (const auto& c : check_primitives(o)) {
    INFO(c.op);
    CHECK(c.passed);
  }
}

TEST_CASE("model gradient check passes and localises an injected fault") {
  GradcheckOptions o;
  o.samples = 48;
  const auto good = gradcheck_model(miniature_config(), o);
  CHECK(good.passed);
  CHECK(good.max_rel_error < 1e-4);
  CHECK(good.checked == 48);

  FaultGuard fault("softmax", 1.5);
  const auto bad = gradcheck_model(miniature_config(), o);
  CHECK_FALSE(bad.passed);
  const auto failing = bad.failing_ops();
  CHECK(std::find(failing.begin(), failing.end(), "softmax") != failing.end());
  CHECK(bad.summary().find("softmax") != std::string::npos);
}

TEST_CASE("single run writes reproducible artifacts") {
  const auto dir = scratch_dir("single");
  auto spec = tiny_spec(dir);
  spec.model.mode = ForwardMode::uctransnet;
  spec.model.skip.fill(SkipMode::ctrans);
  const auto first = run_single(spec);
  for (const char* f : {"loss_curve.csv", "metrics.csv", "model.uctn", "spec.cfg"}) CHECK(fs::exists(dir / f));
  CHECK(first.fit.curve.size() == spec.train.max_iterations);
  const auto curve = lines_without_timestamp(dir / "loss_curve.csv");
  const auto metrics = lines_without_timestamp(dir / "metrics.csv");
  CHECK(curve.front() == "# spec-hash: " + spec.hash());

  run_single(spec);
  CHECK(lines_without_timestamp(dir / "loss_curve.csv") == curve);
  CHECK(lines_without_timestamp(dir / "metrics.csv") == metrics);

  SUBCASE("eval reproduces the training-time scores") {
    auto e = spec;
    e.checkpoint = first.checkpoint;
    e.output_dir = dir / "eval";
    const auto report = run_eval(e);
    CHECK(report.mean_dice == first.report.mean_dice);
    CHECK(report.mean_iou == first.report.mean_iou);
  }
  SUBCASE("attention export shapes") {
    auto e = spec;
    e.checkpoint = first.checkpoint;
    e.output_dir = dir / "attn";
    const auto ex = export_attention(e);
    REQUIRE(ex.matrices.size() == 4);
    for (std::size_t q = 0; q < 4; ++q) {
      CHECK(ex.matrices[q].shape() == Shape{spec.model.channels[q], spec.model.key_channels()});
      for (double v : ex.matrices[q].storage()) CHECK(v >= 0.0);
    }
    CHECK(ex.summary.shape() == Shape{4, 4});
    for (double v : ex.summary.storage()) CHECK(v >= 0.0);
    CHECK(fs::exists(dir / "attn" / "attention_summary.csv"));
  }
  SUBCASE("attention export marks absent levels as undefined") {
    auto narrow = spec;
    narrow.output_dir = dir / "narrow";
    narrow.model.query_levels = {1, 2};
    narrow.model.key_levels = {2, 3};
    narrow.model.skip = {SkipMode::ctrans, SkipMode::ctrans, SkipMode::copy, SkipMode::copy};
    const auto run = run_single(narrow);
    narrow.checkpoint = run.checkpoint;
    const auto ex = export_attention(narrow);
    REQUIRE(ex.matrices.size() == 2);
    CHECK(ex.matrices[0].shape() == Shape{4, 24});
    CHECK(std::isnan(ex.summary.at({0, 0})));
    CHECK(std::isnan(ex.summary.at({3, 1})));
    CHECK(ex.summary.at({1, 2}) >= 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("skip ablation yields one row per wiring") {
  const auto dir = scratch_dir("skip");
  auto spec = tiny_spec(dir);
  spec.train.max_iterations = 2;
  const auto rows = run_skip_ablation(spec);
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].label == skip_ablation_labels()[i]);
    CHECK(rows[i].dice >= 0.0);
    CHECK(rows[i].dice <= 1.0);
  }
  const auto csv = lines_without_timestamp(dir / "skip_ablation.csv");
  REQUIRE(csv.size() == 12);
  CHECK(csv[1] == "config_label,dice,iou,hd,iterations,seed");
  fs::remove_all(dir);
}

TEST_CASE("generated data round trips through the loader") {
  const auto dir = scratch_dir("gen");
  auto spec = tiny_spec(dir);
  CHECK(run_gen_data(spec) == 4);
  auto loaded = spec;
  loaded.data.kind = DataSource::Kind::directory;
  loaded.data.dir = dir / "data";
  loaded.data.held_out_fraction = 0.0;
  const auto split = load_data(loaded);
  CHECK(split.train.size() == 4);
  CHECK(lines_without_timestamp(dir / "manifest.csv").size() == 6);
  fs::remove_all(dir);
}
