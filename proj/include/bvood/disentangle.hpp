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
#include <span>
#include <vector>

#include "bvood/bvae.hpp"
#include "bvood/partition.hpp"

namespace bvood::disentangle {

struct MigParams {
  int iterations = 5;            // t
  int samples_per_latent = 500;  // ns, per latent per frame
  int bins = 20;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Entropies in nats.
struct MutualInformation {
  double mi = 0.0;
  double feature_entropy = 0.0;
  double latent_entropy = 0.0;
};

/// Plug-in estimate of I(L; f) = H(L) - H(L|f). Latent samples are pooled
/// into `bins` equal-width bins spanning their observed range; the feature is
/// discrete (one label per frame). The result is floored at 0.
/// Throws DomainError when the frame counts differ or the feature has a
/// single value.
MutualInformation mutual_information(const std::vector<std::vector<double>>& latent_samples,
                                     std::span<const double> feature_values, int bins = 20);

/// Encoded frames of one partition with the representative feature value of
/// each frame.
struct PartitionSample {
  std::vector<bvae::LatentStats> stats;
  std::vector<double> labels;
};

struct MigReport {
  double mig = 0.0;
  std::vector<double> per_iteration;
};

/// Mutual information gap averaged over partitions and iterations. Each
/// iteration draws fresh reparameterized samples.
MigReport compute_mig(const std::vector<PartitionSample>& partitions, const MigParams& params);

/// Encodes each partition's frames with the model and runs the estimator
/// against the partition's representative feature.
MigReport compute_mig(const bvae::TrainedModel& model, const std::vector<Scene>& scenes,
                      const partition::PartitionSet& partitions, const MigParams& params);

}  // namespace bvood::disentangle
