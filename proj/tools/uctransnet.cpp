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

// Command-line front end: one subcommand per experiment. Every spec key is
// also a --key option that overrides the config file.

#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "uctransnet/errors.hpp"
#include "uctransnet/experiment.hpp"

namespace {

using uct::ExperimentSpec;

struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> overrides;
  ExperimentSpec defaults;
};

std::vector<std::string> option_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : ExperimentSpec{}.to_key_values()) keys.push_back(k);
  keys.insert(keys.end(), {"size", "lr", "iterations"});
  return keys;
}

ExperimentSpec resolve(const Command& c, const std::vector<std::string>& keys) {
  ExperimentSpec spec = c.defaults;
  if (!c.config_file.empty()) spec = uct::load_spec(c.config_file, spec);
  for (const auto& k : keys) {
    if (auto it = c.overrides.find(k); it != c.overrides.end()) spec.set(k, it->second);
  }
  spec.validate();
  return spec;
}

void print_rows(const std::vector<uct::AblationRow>& rows) { std::cout << uct::ablation_csv(rows); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UCTransNet segmentation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  const std::vector<std::pair<std::string, std::string>> names = {
      {"train", "Train one model and write loss_curve.csv, metrics.csv and model.uctn"},
      {"eval", "Score a checkpoint on the held-out data"},
      {"ablate-skip", "Train the ten skip-connection variants of the plain U-Net"},
      {"ablate-qk", "Train UCTransNet with each query/key level subset in qk_sweep"},
      {"gradcheck", "Compare analytic and finite-difference gradients"},
      {"export-attn", "Export averaged channel-attention matrices from a checkpoint"},
      {"gen-data", "Write a synthetic dataset as PNG pairs"},
  };
  const auto keys = option_keys();
  std::map<std::string, Command> commands;
  for (const auto& [name, help] : names) {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("-c,--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& k : keys) {
      c.app->add_option_function<std::string>(
          "--" + k, [&c, k](const std::string& v) { c.overrides[k] = v; }, "Override config key " + k);
    }
    c.defaults.output_dir = "runs/" + name;
  }
  commands["gradcheck"].defaults.model = uct::miniature_config();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const uct::Logger log = quiet ? uct::Logger{} : uct::Logger{[](const std::string& m) { std::cerr << m << "\n"; }};
  try {
    for (auto& [name, c] : commands) {
      if (!c.app->parsed()) continue;
      const auto spec = resolve(c, keys);
      if (name == "train") {
        const auto r = uct::run_single(spec, log);
        std::cout << r.report.to_table();
        std::cout << "checkpoint: " << r.checkpoint.string() << "\n";
      } else if (name == "eval") {
        std::cout << uct::run_eval(spec, log).to_table();
      } else if (name == "ablate-skip") {
        print_rows(uct::run_skip_ablation(spec, log));
      } else if (name == "ablate-qk") {
        print_rows(uct::run_qk_ablation(spec, log));
      } else if (name == "gradcheck") {
        const auto r = uct::run_gradcheck(spec, log);
        std::cout << r.summary();
        return r.passed ? 0 : 3;
      } else if (name == "export-attn") {
        const auto r = uct::export_attention(spec, log);
        std::cout << "exported " << r.matrices.size() << " attention matrices over " << r.samples << " samples to "
                  << spec.output_dir.string() << "\n";
      } else if (name == "gen-data") {
        const auto n = uct::run_gen_data(spec, log);
        std::cout << "wrote " << n << " samples to " << (spec.output_dir / "data").string() << "\n";
      }
    }
  } catch (const uct::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
