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
#include <json.hpp>
#include <string>
#include <vector>

#include "bvood/config.hpp"
#include "bvood/monitor.hpp"

namespace bvood::pipeline {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// File locations inside one artifact directory.
struct Layout {
  fs::path root;

  fs::path train_data() const { return root / "data" / "train"; }
  fs::path test_data() const { return root / "data" / "test"; }
  fs::path partitions() const { return root / "partitions.csv"; }
  fs::path trials() const { return root / "trials.csv"; }
  fs::path best() const { return root / "best.csv"; }
  fs::path model() const { return root / "model.bin"; }
  fs::path training_log() const { return root / "training.csv"; }
  fs::path selection() const { return root / "selection.csv"; }
  fs::path profile() const { return root / "profile.txt"; }
  fs::path calibration() const { return root / "calibration.bin"; }
  fs::path traces() const { return root / "traces"; }
  fs::path detections() const { return root / "detections.csv"; }
  fs::path evaluation() const { return root / "evaluation.csv"; }
  fs::path summary() const { return root / "summary.jsonl"; }
  fs::path lock() const { return root / ".lock"; }
};

/// Exclusive lock on an artifact directory, released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& root);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

/// Renders `spec_path` into `out` (labels.csv plus frame files).
Json generate_spec(const fs::path& spec_path, const fs::path& out, std::uint64_t seed, int width, int height);

/// Each stage reads upstream artifacts from the layout, writes its own, and
/// returns a summary record. Missing inputs raise DependencyError.
Json generate(const config::PipelineConfig& c, const Layout& l);
Json partition(const config::PipelineConfig& c, const Layout& l);
Json search(const config::PipelineConfig& c, const Layout& l);
Json train(const config::PipelineConfig& c, const Layout& l);
Json map(const config::PipelineConfig& c, const Layout& l);
Json calibrate(const config::PipelineConfig& c, const Layout& l);
Json detect(const config::PipelineConfig& c, const Layout& l);
Json evaluate(const config::PipelineConfig& c, const Layout& l);

/// Every stage in order; returns the per-stage records.
std::vector<Json> run_all(const config::PipelineConfig& c, const Layout& l);

/// Appends one line to summary.jsonl.
void append_summary(const Layout& l, const Json& record);

/// Training frames of every scene, as scenes (same order and names).
std::vector<Scene> training_part(const std::vector<Scene>& scenes, const DatasetSplit& split);
std::vector<Frame> calibration_part(const std::vector<Scene>& scenes, const DatasetSplit& split);

/// Detector profile from model, channel layout and calibration on disk,
/// thresholds from the config.
monitor::DetectorProfile load_profile(const config::PipelineConfig& c, const Layout& l);

/// Change-point thresholds: configured values, or derived from the
/// detector's calibration scores where "auto".
monitor::CusumParams change_point_params(const config::ChangePointConfig& c, std::span<const double> detector_scores);

/// Ground-truth intervals per test scene, from truth.csv when configured.
std::vector<std::vector<monitor::OodInterval>> ground_truth(const config::PipelineConfig& c,
                                                            const std::vector<Scene>& training,
                                                            const std::vector<Scene>& test);

}  // namespace bvood::pipeline
