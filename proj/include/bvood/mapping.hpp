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

#include <filesystem>
#include <span>
#include <vector>

#include "bvood/bvae.hpp"
#include "bvood/partition.hpp"

namespace bvood::mapping {

using Vector = Eigen::VectorXd;

/// Single-pass mean/variance accumulator over fixed-length vectors.
class WelfordState {
 public:
  explicit WelfordState(Eigen::Index dims = 0);

  void update(std::span<const double> sample);
  void update(const Vector& sample) { update(std::span(sample.data(), static_cast<std::size_t>(sample.size()))); }

  /// Sample variance M2 / (count - 1). Throws DomainError for count < 2.
  Vector variance() const;

  std::size_t count() const { return count_; }
  const Vector& mean() const { return mean_; }
  const Vector& m2() const { return m2_; }

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

WelfordState welford_update(WelfordState state, std::span<const double> sample);
Vector welford_variance(const WelfordState& state);

/// Mean absolute change of each latent's KL between consecutive frames.
/// Throws DomainError for fewer than two frames.
Vector avg_kl_diff(std::span<const bvae::LatentStats> frames);
Vector avg_kl_diff(const bvae::TrainedModel& model, const Scene& scene);

struct RankedLatent {
  int latent = 0;
  double variance = 0.0;
};

struct PartitionSelection {
  Feature feature = Feature::Brightness;
  std::vector<RankedLatent> ranked;  // top-m by cross-scene variance, descending
  std::vector<int> reasoner;         // leading entries of `ranked`
};

struct LatentSelection {
  std::vector<PartitionSelection> partitions;
  std::vector<int> detector;  // sorted union of every partition's ranked set

  const PartitionSelection* find(Feature f) const;
};

/// Per-scene AvgKL vectors grouped by partition.
struct PartitionDiffs {
  Feature feature = Feature::Brightness;
  std::vector<Vector> scenes;
};

/// Ranks latents by the Welford variance of their AvgKL across each
/// partition's scenes (ties go to the lower index), keeps the top m, and
/// takes the first `reasoner_size` of them as the feature's reasoner.
LatentSelection select_latents(const std::vector<PartitionDiffs>& partitions, int m, int reasoner_size = 1);

LatentSelection select_latents(const bvae::TrainedModel& model, const std::vector<Scene>& scenes,
                               const partition::PartitionSet& partitions, int m, int reasoner_size = 1);

/// selection.csv: partition,rank,latent_index,variance (rank 0 is the reasoner).
void write_selection(const std::filesystem::path& path, const LatentSelection& selection);
/// Reads selection.csv back; the reasoner is the first `reasoner_size` ranks.
LatentSelection read_selection(const std::filesystem::path& path, int reasoner_size = 1);

}  // namespace bvood::mapping
