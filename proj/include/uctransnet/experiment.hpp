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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uctransnet/dataset.hpp"
#include "uctransnet/gradcheck.hpp"
#include "uctransnet/key_value.hpp"
#include "uctransnet/metrics.hpp"
#include "uctransnet/model_config.hpp"
#include "uctransnet/training.hpp"

namespace uct {

enum class Study { single, skip_ablation, qk_ablation };
std::string to_string(Study s);
Study parse_study(const std::string& text);

struct DataSource {
  enum class Kind { synthetic, directory };
  Kind kind = Kind::synthetic;
  std::filesystem::path dir;
  std::size_t count = 16;         // synthetic corpus size; extent follows the model
  std::uint64_t seed = 1;         // synthetic corpus seed
  bool binarize = false;
  double held_out_fraction = 0.25;
};

// Everything one run needs. Every field has a key in the canonical
// key/value form, which is both the config-file format and the set of CLI
// overrides.
struct ExperimentSpec {
  ModelConfig model;
  TrainConfig train;
  DataSource data;
  std::filesystem::path output_dir = "runs/default";
  Study study = Study::single;
  std::filesystem::path checkpoint;  // eval / export-attn input
  std::string qk_sweep = "Q1,Q12,Q123,Q1234,Q234,K1,K12,K123,K1234";
  std::size_t gradcheck_samples = 256;
  double gradcheck_tolerance = 1e-4;

  KeyValues to_key_values() const;
  bool set(const std::string& key, const std::string& value);
  void validate() const;
  // FNV-1a over the canonical key/value text, 16 hex digits.
  std::string hash() const;
};

ExperimentSpec spec_from_text(const std::string& text, ExperimentSpec base = {});
ExperimentSpec load_spec(const std::filesystem::path& path, ExperimentSpec base = {});

// The gradient-check miniature: 16×16 input, C1 = 4, 2 heads, 2 layers, f64.
ModelConfig miniature_config();

// "# spec-hash: ..." then "# generated: <UTC timestamp>".
std::string csv_preamble(const ExperimentSpec& spec);
bool is_timestamp_line(const std::string& line);
void write_csv(const std::filesystem::path& path, const ExperimentSpec& spec, const std::string& body);

// Synthetic corpus or directory contents, split into train / held-out. An
// empty held-out part evaluates on the training samples.
Split load_data(const ExperimentSpec& spec);

using Logger = std::function<void(const std::string&)>;

struct SingleRunResult {
  metrics::MetricsReport report;
  FitResult fit;
  std::filesystem::path checkpoint;
};

// Trains per spec, evaluates on the held-out split, and writes loss_curve.csv,
// metrics.csv, model.uctn and spec.cfg under the output directory.
SingleRunResult run_single(const ExperimentSpec& spec, const Logger& log = {});

struct AblationRow {
  std::string label;
  double dice = 0.0;
  double iou = 0.0;
  std::optional<double> hausdorff;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
};

std::string ablation_csv(const std::vector<AblationRow>& rows);

// The ten plain U-Net wirings, in order: all, none, L1..L4, w/o L1..w/o L4.
std::vector<std::string> skip_ablation_labels();
std::array<SkipMode, 4> skip_wiring(const std::string& label);

std::vector<AblationRow> run_skip_ablation(const ExperimentSpec& spec, const Logger& log = {});

// Labels "Q<levels>" fix keys at 1234; "K<levels>" fix queries at 1234.
void apply_qk_label(ModelConfig& cfg, const std::string& label);
std::vector<std::string> qk_labels(const ExperimentSpec& spec);
std::vector<AblationRow> run_qk_ablation(const ExperimentSpec& spec, const Logger& log = {});

metrics::MetricsReport run_eval(const ExperimentSpec& spec, const Logger& log = {});

// Mean |similarity| over samples, layers and heads per query level, plus the
// 4×4 (query level × key level) block means. Levels that take no part are
// absent.
struct AttentionExport {
  std::vector<int> query_levels;
  std::vector<int> key_levels;
  std::vector<Tensor<double>> matrices;  // per query level, C_i × C_Σ
  Tensor<double> summary;                // 4 × 4, NaN where undefined
  std::size_t samples = 0;
};

AttentionExport export_attention(const ExperimentSpec& spec, const Logger& log = {});

// gradcheck_model on spec.model with the spec's sample count, tolerance and
// seed; writes gradcheck.csv.
GradcheckReport run_gradcheck(const ExperimentSpec& spec, const Logger& log = {});

// Writes the synthetic corpus under output_dir/data plus a manifest CSV.
std::size_t run_gen_data(const ExperimentSpec& spec, const Logger& log = {});

}  // namespace uct
