// Copyright 2026 The bvood Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bvood/config.hpp"
#include "bvood/dataset.hpp"
#include "bvood/error.hpp"
#include "bvood/pipeline.hpp"

namespace {

using bvood::pipeline::Json;

struct Options {
  std::string config;
  std::string out = "artifacts";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
  std::string spec;
  std::optional<int> window;
  std::optional<double> detector_omega, detector_tau, reasoner_omega, reasoner_tau;
  std::optional<std::string> changepoint_omega, changepoint_tau;
  std::optional<std::string> mode;
  std::optional<int> budget;
};

bvood::config::Overrides overrides(const Options& o) {
  bvood::config::Overrides ov;
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected section.key=value");
    ov[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  const auto d = [](double v) { return bvood::dataset::format_double(v); };
  if (o.seed) ov["run.seed"] = std::to_string(*o.seed);
  if (o.window) ov["monitor.window"] = std::to_string(*o.window);
  if (o.detector_omega) ov["monitor.detector_omega"] = d(*o.detector_omega);
  if (o.detector_tau) ov["monitor.detector_tau"] = d(*o.detector_tau);
  if (o.reasoner_omega) ov["monitor.reasoner_omega"] = d(*o.reasoner_omega);
  if (o.reasoner_tau) ov["monitor.reasoner_tau"] = d(*o.reasoner_tau);
  if (o.changepoint_omega) ov["monitor.changepoint_omega"] = *o.changepoint_omega;
  if (o.changepoint_tau) ov["monitor.changepoint_tau"] = *o.changepoint_tau;
  if (o.mode) ov["search.mode"] = *o.mode;
  if (o.budget) ov["search.budget"] = std::to_string(*o.budget);
  return ov;
}

bvood::config::PipelineConfig load_config(const Options& o) {
  const auto ov = overrides(o);
  return o.config.empty() ? bvood::config::defaults(ov) : bvood::config::load(o.config, ov);
}

void emit(const bvood::pipeline::Layout& l, const Json& record) {
  bvood::pipeline::append_summary(l, record);
  std::cout << record.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bvood: beta-VAE out-of-distribution detector design and runtime monitor"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "artifact directory")->capture_default_str();
  app.add_option("--seed", o.seed, "run seed; seeds not set explicitly derive from it");
  app.add_option("--set", o.set, "override a configuration value, section.key=value");
  app.add_option("--window", o.window, "martingale and moving-average window M");
  app.add_option("--detector-omega", o.detector_omega, "detector CUSUM weight");
  app.add_option("--detector-tau", o.detector_tau, "detector CUSUM threshold");
  app.add_option("--reasoner-omega", o.reasoner_omega, "reasoner CUSUM weight");
  app.add_option("--reasoner-tau", o.reasoner_tau, "reasoner CUSUM threshold");
  app.add_option("--changepoint-omega", o.changepoint_omega, "change-point CUSUM weight, or auto");
  app.add_option("--changepoint-tau", o.changepoint_tau, "change-point CUSUM threshold, or auto");
  app.add_option("--mode", o.mode, "search mode: bo, grid or random");
  app.add_option("--budget", o.budget, "search budget");

  using Stage = Json (*)(const bvood::config::PipelineConfig&, const bvood::pipeline::Layout&);
  struct Entry {
    const char* name;
    const char* help;
    Stage stage;
  };
  const std::vector<Entry> stages = {
      {"partition", "group training scenes by dominant feature", bvood::pipeline::partition},
      {"search", "hyperparameter search over latent count and beta", bvood::pipeline::search},
      {"train", "train the beta-VAE", bvood::pipeline::train},
      {"map", "select detector and reasoner latents", bvood::pipeline::map},
      {"calibrate", "compute calibration scores", bvood::pipeline::calibrate},
      {"detect", "run the runtime monitor over the test scenes", bvood::pipeline::detect},
      {"evaluate", "score detections against ground truth", bvood::pipeline::evaluate},
  };

  auto* gen = app.add_subcommand("generate", "render scenes from scene specs");
  gen->add_option("--spec", o.spec, "render this spec file into --out instead of the configured specs")
      ->check(CLI::ExistingFile);
  std::vector<CLI::App*> subs;
  for (const auto& e : stages) subs.push_back(app.add_subcommand(e.name, e.help));
  auto* run = app.add_subcommand("run", "every stage in order");
  for (auto* s : app.get_subcommands({})) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const bvood::pipeline::Layout layout{o.out};
    const auto cfg = load_config(o);
    bvood::pipeline::DirectoryLock lock(layout.root);
    if (gen->parsed()) {
      if (!o.spec.empty()) {
        auto rec = bvood::pipeline::generate_spec(o.spec, layout.root, cfg.data.seed, cfg.data.width, cfg.data.height);
        rec["command"] = "generate";
        emit(layout, rec);
      } else {
        emit(layout, bvood::pipeline::generate(cfg, layout));
      }
      return 0;
    }
    if (run->parsed()) {
      for (const auto& rec : bvood::pipeline::run_all(cfg, layout)) std::cout << rec.dump() << '\n';
      return 0;
    }
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (subs[i]->parsed()) emit(layout, stages[i].stage(cfg, layout));
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const bvood::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 1;
  } catch (const bvood::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
