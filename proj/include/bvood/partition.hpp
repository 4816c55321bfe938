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

#include <array>
#include <filesystem>
#include <vector>

#include "bvood/scenegen.hpp"

namespace bvood::partition {

using FeatureRow = std::array<double, kFeatureCount>;

/// Dataset-wide min-max normalized labels. Continuous features map to [0,1];
/// a feature with a single value maps to 0 and is flagged constant. The
/// categorical segment_id keeps its raw id.
struct NormalizedLabels {
  std::vector<std::vector<FeatureRow>> rows;  // [scene][frame]
  std::array<bool, kFeatureCount> constant{};
  std::array<double, kFeatureCount> min{};
  std::array<double, kFeatureCount> max{};
};

NormalizedLabels normalize_features(const std::vector<Scene>& scenes);

struct Partition {
  Feature feature = Feature::Brightness;  // representative feature
  std::vector<std::size_t> scenes;        // indices into the input list, sorted by scene name
  double variance = 0.0;                  // of the normalized feature over member frames
};

struct PartitionSet {
  std::vector<Partition> partitions;  // in feature declaration order

  const Partition* find(Feature f) const;
};

/// Per-scene variance of every normalized feature. segment_id is scored on
/// its rank among the dataset's distinct ids, scaled to [0,1].
std::vector<FeatureRow> scene_variances(const std::vector<Scene>& scenes, const NormalizedLabels& labels);

/// Assigns every scene to the partition of its highest-variance feature
/// (ties go to the earlier-declared feature). Scenes with no varying feature
/// join no partition. Throws DomainError when no partition results.
PartitionSet build_partitions(const std::vector<Scene>& scenes);

/// partitions.csv: partition_id,representative_feature,scene_name
void write_manifest(const std::filesystem::path& path, const PartitionSet& set, const std::vector<Scene>& scenes);
PartitionSet read_manifest(const std::filesystem::path& path, const std::vector<Scene>& scenes);

}  // namespace bvood::partition
