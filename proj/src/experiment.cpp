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

#include "uctransnet/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "uctransnet/checkpoint.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/unet.hpp"

namespace uct {

namespace fs = std::filesystem;

std::string to_string(Study s) {
  switch (s) {
    case Study::single: return "single";
    case Study::skip_ablation: return "skip_ablation";
    case Study::qk_ablation: return "qk_ablation";
  }
  return "?";
}

Study parse_study(const std::string& text) {
  if (text == "single") return Study::single;
  if (text == "skip_ablation") return Study::skip_ablation;
  if (text == "qk_ablation") return Study::qk_ablation;
  throw ConfigError("unknown study '" + text + "' (expected single, skip_ablation or qk_ablation)");
}

// --- spec -------------------------------------------------------------------

KeyValues ExperimentSpec::to_key_values() const {
  KeyValues kv = model.to_key_values();
  for (auto& e : train.to_key_values()) kv.push_back(std::move(e));
  kv.emplace_back("data_source", data.kind == DataSource::Kind::synthetic ? "synthetic" : "dir");
  kv.emplace_back("data_dir", data.dir.string());
  kv.emplace_back("synthetic_count", std::to_string(data.count));
  kv.emplace_back("data_seed", std::to_string(data.seed));
  kv.emplace_back("binarize", data.binarize ? "true" : "false");
  kv.emplace_back("held_out_fraction", format_real(data.held_out_fraction));
  kv.emplace_back("output_dir", output_dir.string());
  kv.emplace_back("study", to_string(study));
  kv.emplace_back("checkpoint", checkpoint.string());
  kv.emplace_back("qk_sweep", qk_sweep);
  kv.emplace_back("gradcheck_samples", std::to_string(gradcheck_samples));
  kv.emplace_back("gradcheck_tolerance", format_real(gradcheck_tolerance));
  return kv;
}

bool ExperimentSpec::set(const std::string& key, const std::string& value) {
  if (model.set(key, value) || train.set(key, value)) return true;
  const auto v = trim(value);
  if (key == "data_source") {
    if (v == "synthetic") {
      data.kind = DataSource::Kind::synthetic;
    } else if (v == "dir" || v == "directory") {
      data.kind = DataSource::Kind::directory;
    } else {
      throw ConfigError("data_source: expected synthetic or dir, got '" + v + "'");
    }
  } else if (key == "data_dir") {
    data.dir = v;
    if (!v.empty()) data.kind = DataSource::Kind::directory;
  } else if (key == "synthetic_count") {
    data.count = parse_size(key, v);
  } else if (key == "data_seed") {
    data.seed = parse_u64(key, v);
  } else if (key == "binarize") {
    data.binarize = parse_bool(key, v);
  } else if (key == "held_out_fraction") {
    data.held_out_fraction = parse_real(key, v);
  } else if (key == "output_dir") {
    output_dir = v;
  } else if (key == "study") {
    study = parse_study(v);
  } else if (key == "checkpoint") {
    checkpoint = v;
  } else if (key == "qk_sweep") {
    qk_sweep = v;
  } else if (key == "gradcheck_samples") {
    gradcheck_samples = parse_size(key, v);
  } else if (key == "gradcheck_tolerance") {
    gradcheck_tolerance = parse_real(key, v);
  } else {
    return false;
  }
  return true;
}

void ExperimentSpec::validate() const {
  model.validate();
  train.validate();
  if (data.held_out_fraction < 0.0 || data.held_out_fraction >= 1.0) {
    throw ConfigError("held_out_fraction must be in [0, 1)");
  }
  if (data.kind == DataSource::Kind::synthetic) {
    if (data.count == 0) throw ConfigError("synthetic_count must be positive");
    if (model.height != model.width) throw ConfigError("synthetic data is square; set height = width");
  } else if (data.dir.empty()) {
    throw ConfigError("data_source dir needs data_dir");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (!(gradcheck_tolerance > 0.0)) throw ConfigError("gradcheck_tolerance must be positive");
}

std::string ExperimentSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key_value_text(to_key_values())) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentSpec spec_from_text(const std::string& text, ExperimentSpec base) {
  for (const auto& [k, v] : parse_key_value_text(text)) {
    if (!base.set(k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
  return base;
}

ExperimentSpec load_spec(const fs::path& path, ExperimentSpec base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return spec_from_text(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ModelConfig miniature_config() {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  cfg.height = cfg.width = 16;
  cfg.patch_size = 8;
  cfg.heads = 2;
  cfg.cct_layers = 2;
  cfg.dtype = DType::f64;
  return cfg;
}

// --- CSV ----------------------------------------------------------------------

std::string csv_preamble(const ExperimentSpec& spec) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return "# spec-hash: " + spec.hash() + "\n# generated: " + stamp + "\n";
}

bool is_timestamp_line(const std::string& line) { return line.rfind("# generated:", 0) == 0; }

void write_csv(const fs::path& path, const ExperimentSpec& spec, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << csv_preamble(spec) << body;
  if (!out) throw DataError("failed writing " + path.string());
}

// --- data -----------------------------------------------------------------------

Split load_data(const ExperimentSpec& spec) {
  Dataset all;
  if (spec.data.kind == DataSource::Kind::synthetic) {
    all = generate_synthetic({spec.data.count, spec.model.height, spec.data.seed, spec.model.in_channels});
  } else {
    all = load_dataset(spec.data.dir, {spec.model.num_classes, spec.data.binarize});
    if (all.empty()) throw DataError("no samples found in " + spec.data.dir.string());
  }
  return split_dataset(all, spec.data.held_out_fraction);
}

namespace {

const Dataset& evaluation_set(const Split& s) { return s.held_out.empty() ? s.train : s.held_out; }

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

struct TrainOutcome {
  metrics::MetricsReport report;
  FitResult fit;
  Checkpoint checkpoint;
};

template <class T>
TrainOutcome train_and_evaluate_t(const ModelConfig& cfg, const TrainConfig& tc, const Split& split,
                                  const Logger& log, const std::string& tag) {
  auto params = init_params<T>(cfg, tc.seed);
  const std::size_t every = std::max<std::size_t>(1, tc.max_iterations / 10);
  ProgressFn progress;
  if (log) {
    progress = [&](const LossRecord& r) {
      if (r.iteration % every == 0 || r.iteration == tc.max_iterations) {
        char line[160];
        std::snprintf(line, sizeof line, "%s iteration %zu/%zu loss %.5f (ce %.5f, dice %.5f)", tag.c_str(),
                      r.iteration, tc.max_iterations, r.total, r.ce, r.dice);
        log(line);
      }
    };
  }
  TrainOutcome out;
  out.fit = fit(params, cfg, split.train, tc, split.held_out.empty() ? nullptr : &split.held_out, progress);
  out.report = evaluate_model(params, cfg, evaluation_set(split));
  out.checkpoint = make_checkpoint(params, &cfg);
  return out;
}

TrainOutcome train_and_evaluate(const ModelConfig& cfg, const TrainConfig& tc, const Split& split, const Logger& log,
                                const std::string& tag) {
  return cfg.dtype == DType::f64 ? train_and_evaluate_t<double>(cfg, tc, split, log, tag)
                                 : train_and_evaluate_t<float>(cfg, tc, split, log, tag);
}

std::string validation_csv(const std::vector<ValidationRecord>& v) {
  std::string s = "iteration,dice,iou\n";
  for (const auto& r : v) {
    s += std::to_string(r.iteration) + "," + metrics::format_metric(r.dice) + "," + metrics::format_metric(r.iou) + "\n";
  }
  return s;
}

AblationRow row_from(const std::string& label, const metrics::MetricsReport& r, const TrainConfig& tc) {
  return {label, r.mean_dice, r.mean_iou, r.mean_hausdorff, tc.max_iterations, tc.seed};
}

}  // namespace

// --- studies ------------------------------------------------------------------

SingleRunResult run_single(const ExperimentSpec& spec, const Logger& log) {
  spec.validate();
  const auto split = load_data(spec);
  say(log, "training " + to_string(spec.model.mode) + " model on " + std::to_string(split.train.size()) +
               " samples, evaluating on " + std::to_string(evaluation_set(split).size()));
  auto outcome = train_and_evaluate(spec.model, spec.train, split, log, "train");
  fs::create_directories(spec.output_dir);
  SingleRunResult result;
  result.report = outcome.report;
  result.fit = std::move(outcome.fit);
  result.checkpoint = spec.output_dir / "model.uctn";
  save_checkpoint(outcome.checkpoint, result.checkpoint);
  write_csv(spec.output_dir / "loss_curve.csv", spec, loss_curve_csv(result.fit.curve));
  write_csv(spec.output_dir / "metrics.csv", spec, result.report.to_csv());
  if (!result.fit.validation.empty()) {
    write_csv(spec.output_dir / "validation.csv", spec, validation_csv(result.fit.validation));
  }
  std::ofstream(spec.output_dir / "spec.cfg") << key_value_text(spec.to_key_values());
  if (result.fit.pretrained) {
    say(log, "pretrained U-Net: " + std::to_string(result.fit.pretrained->matched) + " tensors matched, " +
                 std::to_string(result.fit.pretrained->unmatched) + " freshly initialised");
  }
  return result;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "config_label,dice,iou,hd,iterations,seed\n";
  for (const auto& r : rows) {
    s += r.label + "," + metrics::format_metric(r.dice) + "," + metrics::format_metric(r.iou) + "," +
         metrics::format_metric(r.hausdorff) + "," + std::to_string(r.iterations) + "," + std::to_string(r.seed) + "\n";
  }
  return s;
}

std::vector<std::string> skip_ablation_labels() {
  return {"all", "none", "L1", "L2", "L3", "L4", "w/o L1", "w/o L2", "w/o L3", "w/o L4"};
}

std::array<SkipMode, 4> skip_wiring(const std::string& label) {
  std::array<SkipMode, 4> w{};
  auto fill = [&](SkipMode m) { w.fill(m); };
  if (label == "all") {
    fill(SkipMode::copy);
  } else if (label == "none") {
    fill(SkipMode::none);
  } else if (label.size() == 2 && label[0] == 'L' && label[1] >= '1' && label[1] <= '4') {
    fill(SkipMode::none);
    w[static_cast<std::size_t>(label[1] - '1')] = SkipMode::copy;
  } else if (label.size() == 6 && label.rfind("w/o L", 0) == 0 && label[5] >= '1' && label[5] <= '4') {
    fill(SkipMode::copy);
    w[static_cast<std::size_t>(label[5] - '1')] = SkipMode::none;
  } else {
    throw ConfigError("unknown skip wiring label '" + label + "'");
  }
  return w;
}

std::vector<AblationRow> run_skip_ablation(const ExperimentSpec& spec, const Logger& log) {
  spec.validate();
  const auto split = load_data(spec);
  std::vector<AblationRow> rows;
  for (const auto& label : skip_ablation_labels()) {
    ModelConfig cfg = spec.model;
    cfg.mode = ForwardMode::plain;
    cfg.skip = skip_wiring(label);
    say(log, "skip ablation: " + label);
    const auto outcome = train_and_evaluate(cfg, spec.train, split, log, label);
    rows.push_back(row_from(label, outcome.report, spec.train));
  }
  write_csv(spec.output_dir / "skip_ablation.csv", spec, ablation_csv(rows));
  return rows;
}

void apply_qk_label(ModelConfig& cfg, const std::string& label) {
  if (label.size() < 2 || (label[0] != 'Q' && label[0] != 'K')) {
    throw ConfigError("query/key label '" + label + "' must be Q<levels> or K<levels>");
  }
  const auto levels = parse_levels(label.substr(1));
  if (levels_str(levels) != label.substr(1)) {
    throw ConfigError("query/key label '" + label + "' must list ascending levels 1..4");
  }
  if (label[0] == 'Q') {
    cfg.query_levels = levels;
    cfg.key_levels = {1, 2, 3, 4};
  } else {
    cfg.query_levels = {1, 2, 3, 4};
    cfg.key_levels = levels;
  }
}

std::vector<std::string> qk_labels(const ExperimentSpec& spec) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : spec.qk_sweep + ",") {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (out.empty()) throw ConfigError("qk_sweep is empty");
  return out;
}

std::vector<AblationRow> run_qk_ablation(const ExperimentSpec& spec, const Logger& log) {
  spec.validate();
  const auto labels = qk_labels(spec);
  std::vector<ModelConfig> configs;
  for (const auto& label : labels) {
    ModelConfig cfg = spec.model;
    cfg.mode = ForwardMode::uctransnet;
    cfg.use_cct = true;
    for (auto& s : cfg.skip) s = s == SkipMode::none ? s : SkipMode::ctrans;
    apply_qk_label(cfg, label);
    cfg.validate();
    configs.push_back(cfg);
  }
  const auto split = load_data(spec);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    say(log, "query/key ablation: " + labels[i]);
    const auto outcome = train_and_evaluate(configs[i], spec.train, split, log, labels[i]);
    rows.push_back(row_from(labels[i], outcome.report, spec.train));
  }
  write_csv(spec.output_dir / "qk_ablation.csv", spec, ablation_csv(rows));
  return rows;
}

namespace {

// Model configuration and parameters of a stored checkpoint.
struct LoadedModel {
  ModelConfig cfg;
  Checkpoint ckpt;
};

LoadedModel open_checkpoint(const ExperimentSpec& spec) {
  if (spec.checkpoint.empty()) throw ConfigError("this command needs checkpoint = <path>");
  LoadedModel m;
  m.ckpt = load_checkpoint(spec.checkpoint);
  m.cfg = m.ckpt.config().value_or(spec.model);
  return m;
}

template <class T>
metrics::MetricsReport eval_t(const LoadedModel& m, const Dataset& data) {
  auto params = init_params<T>(m.cfg, 0);
  restore_params(params, m.ckpt);
  return evaluate_model(params, m.cfg, data);
}

}  // namespace

metrics::MetricsReport run_eval(const ExperimentSpec& spec, const Logger& log) {
  const auto m = open_checkpoint(spec);
  ExperimentSpec data_spec = spec;
  data_spec.model = m.cfg;
  const auto split = load_data(data_spec);
  const auto& data = evaluation_set(split);
  say(log, "evaluating " + spec.checkpoint.string() + " on " + std::to_string(data.size()) + " samples");
  const auto report = m.cfg.dtype == DType::f64 ? eval_t<double>(m, data) : eval_t<float>(m, data);
  write_csv(spec.output_dir / "eval_metrics.csv", spec, report.to_csv());
  return report;
}

namespace {

template <class T>
AttentionExport export_t(const LoadedModel& m, const Dataset& data) {
  const auto& cfg = m.cfg;
  auto params = init_params<T>(cfg, 0);
  restore_params(params, m.ckpt);
  AttentionExport out;
  out.query_levels = cfg.query_levels;
  out.key_levels = cfg.key_levels;
  const std::size_t cs = cfg.key_channels();
  for (int l : cfg.query_levels) out.matrices.emplace_back(Shape{cfg.channels_at(l), cs}, 0.0);
  std::size_t contributions = 0;
  for (const auto& s : data) {
    ForwardTrace<T> trace;
    predict_logits(params, cfg, s.image.template cast<T>(), &trace);
    for (const auto& layer : trace.attention.similarity) {
      for (std::size_t q = 0; q < layer.size(); ++q) {
        for (const auto& head : layer[q]) {
          auto& acc = out.matrices[q];
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(static_cast<double>(head[i]));
        }
      }
    }
    contributions += cfg.cct_layers * cfg.heads;
    ++out.samples;
  }
  for (auto& mat : out.matrices) {
    for (auto& v : mat.storage()) v /= static_cast<double>(contributions);
  }
  out.summary = Tensor<double>({4, 4}, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t q = 0; q < out.query_levels.size(); ++q) {
    const auto& mat = out.matrices[q];
    std::size_t col = 0;
    for (int k : out.key_levels) {
      const std::size_t width = cfg.channels_at(k);
      double total = 0;
      for (std::size_t r = 0; r < mat.dim(0); ++r)
        for (std::size_t c = col; c < col + width; ++c) total += mat.at({r, c});
      out.summary.at({static_cast<std::size_t>(out.query_levels[q] - 1), static_cast<std::size_t>(k - 1)}) =
          total / static_cast<double>(mat.dim(0) * width);
      col += width;
    }
  }
  return out;
}

std::string number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

AttentionExport export_attention(const ExperimentSpec& spec, const Logger& log) {
  const auto m = open_checkpoint(spec);
  if (!m.cfg.uses_ctrans() || !m.cfg.use_cct) throw ConfigError("attention export needs a uctransnet checkpoint with CCT");
  ExperimentSpec data_spec = spec;
  data_spec.model = m.cfg;
  const auto split = load_data(data_spec);
  const auto& data = evaluation_set(split);
  say(log, "exporting attention over " + std::to_string(data.size()) + " samples");
  auto out = m.cfg.dtype == DType::f64 ? export_t<double>(m, data) : export_t<float>(m, data);

  std::vector<std::string> columns;
  for (int k : out.key_levels)
    for (std::size_t c = 0; c < m.cfg.channels_at(k); ++c) columns.push_back("K" + std::to_string(k) + "c" + std::to_string(c));
  for (std::size_t q = 0; q < out.query_levels.size(); ++q) {
    std::string body = "channel";
    for (const auto& c : columns) body += "," + c;
    body += "\n";
    const auto& mat = out.matrices[q];
    for (std::size_t r = 0; r < mat.dim(0); ++r) {
      body += "Q" + std::to_string(out.query_levels[q]) + "c" + std::to_string(r);
      for (std::size_t c = 0; c < mat.dim(1); ++c) body += "," + number(mat.at({r, c}));
      body += "\n";
    }
    write_csv(spec.output_dir / ("attention_level" + std::to_string(out.query_levels[q]) + ".csv"), spec, body);
  }
  std::string summary = "query_level,K1,K2,K3,K4\n";
  for (std::size_t q = 0; q < 4; ++q) {
    summary += "Q" + std::to_string(q + 1);
    for (std::size_t k = 0; k < 4; ++k) summary += "," + number(out.summary.at({q, k}));
    summary += "\n";
  }
  write_csv(spec.output_dir / "attention_summary.csv", spec, summary);
  return out;
}

GradcheckReport run_gradcheck(const ExperimentSpec& spec, const Logger& log) {
  GradcheckOptions o;
  o.samples = spec.gradcheck_samples;
  o.tolerance = spec.gradcheck_tolerance;
  o.seed = spec.train.seed;
  say(log, "gradient check on " + std::to_string(spec.model.height) + "x" + std::to_string(spec.model.width) +
               " input, C1=" + std::to_string(spec.model.channels[0]) + ", " + std::to_string(o.samples) + " samples");
  auto report = gradcheck_model(spec.model, o);
  write_csv(spec.output_dir / "gradcheck.csv", spec, report.to_csv());
  return report;
}

std::size_t run_gen_data(const ExperimentSpec& spec, const Logger& log) {
  if (spec.model.height != spec.model.width) throw ConfigError("synthetic data is square; set height = width");
  const auto data = generate_synthetic({spec.data.count, spec.model.height, spec.data.seed, spec.model.in_channels});
  const auto dir = spec.output_dir / "data";
  save_dataset(data, dir);
  std::string manifest = "id,foreground_fraction\n";
  for (const auto& s : data) manifest += s.id + "," + metrics::format_metric(foreground_fraction(s)) + "\n";
  write_csv(spec.output_dir / "manifest.csv", spec, manifest);
  say(log, "generated " + std::to_string(data.size()) + " synthetic samples");
  return data.size();
}

}  // namespace uct
