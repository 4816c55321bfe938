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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bvood/bvae.hpp"
#include "bvood/disentangle.hpp"
#include "bvood/hpo.hpp"
#include "bvood/monitor.hpp"

namespace bvood::config {

struct DataConfig {
  std::filesystem::path train_spec;
  std::filesystem::path test_spec;
  std::filesystem::path truth;  // optional truth.csv; derived from labels when empty
  double split_ratio = 0.7;     // fraction of each training scene used for training
  int width = 32;
  int height = 32;
  std::uint64_t seed = 0;
};

struct SearchConfig {
  hpo::SearchSpace space{{8, 16, 30}, {1.0, 1.4, 2.0}};
  hpo::SearchParams params;
  int epochs = 10;  // training epochs per trial
  bool timing = false;
};

struct MappingConfig {
  int m = 5;
  int reasoner_size = 1;
};

/// Threshold value or "auto" (derived from calibration scores).
struct ChangePointConfig {
  std::optional<double> omega;
  std::optional<double> tau;
};

struct MonitorConfig {
  int window = 20;
  monitor::CusumParams detector{14.0, 100.0};
  monitor::CusumParams reasoner{18.0, 130.0};
  ChangePointConfig change_point{0.75, 1.2};
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  bvae::BetaVaeConfig vae;
  SearchConfig search;
  disentangle::MigParams mig;
  MappingConfig mapping;
  MonitorConfig monitor;

  /// Throws DomainError on invalid values.
  void validate() const;
};

/// "section.key" -> value overrides, applied after the file.
using Overrides = std::map<std::string, std::string>;

/// Parses INI text. Relative paths resolve against `base`. Seeds left unset
/// derive from the run seed. Throws ParseError / DomainError.
PipelineConfig parse(const std::string& text, const std::filesystem::path& base = {},
                     const Overrides& overrides = {});
PipelineConfig load(const std::filesystem::path& path, const Overrides& overrides = {});
/// Defaults with overrides applied.
PipelineConfig defaults(const Overrides& overrides = {});

/// Canonical INI rendering; parse(render(c)) reproduces c.
std::string render(const PipelineConfig& c);

}  // namespace bvood::config
