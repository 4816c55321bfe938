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

#include "bvood/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood::disentangle {

void MigParams::validate() const {
  if (iterations < 1) throw DomainError("MIG iterations must be >= 1");
  if (samples_per_latent < 1) throw DomainError("MIG samples per latent must be >= 1");
  if (bins < 2) throw DomainError("MIG histogram needs at least 2 bins");
}

namespace {

double entropy(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

/// Maps feature values to dense level ids; values equal to 1e-9 share a level.
std::vector<int> level_ids(std::span<const double> values, int& levels) {
  std::map<long long, int> ids;
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) {
    const auto key = std::llround(v * 1e9);
    auto [it, inserted] = ids.try_emplace(key, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  // Renumber in sorted order so level ids do not depend on frame order.
  std::vector<int> remap(ids.size());
  int k = 0;
  for (auto& [key, id] : ids) remap[static_cast<std::size_t>(id)] = k++;
  for (int& id : out) id = remap[static_cast<std::size_t>(id)];
  levels = static_cast<int>(ids.size());
  return out;
}

/// Estimator over a flat sample array: frame i owns samples
/// [offsets[i], offsets[i+1]).
MutualInformation estimate(std::span<const double> samples, std::span<const std::size_t> offsets,
                           std::span<const int> level, int levels, int bins) {
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it, hi = *hi_it;
  const double scale = hi > lo ? bins / (hi - lo) : 0.0;

  std::vector<double> joint(static_cast<std::size_t>(levels) * bins, 0.0);
  std::vector<double> level_total(static_cast<std::size_t>(levels), 0.0);
  for (std::size_t f = 0; f + 1 < offsets.size(); ++f) {
    const auto row = static_cast<std::size_t>(level[f]) * bins;
    for (std::size_t k = offsets[f]; k < offsets[f + 1]; ++k) {
      const int b = std::min(bins - 1, static_cast<int>((samples[k] - lo) * scale));
      joint[row + static_cast<std::size_t>(b)] += 1.0;
    }
    level_total[static_cast<std::size_t>(level[f])] += static_cast<double>(offsets[f + 1] - offsets[f]);
  }
  const double total = static_cast<double>(samples.size());

  std::vector<double> marginal(static_cast<std::size_t>(bins), 0.0);
  double conditional = 0.0;
  for (int v = 0; v < levels; ++v) {
    const auto row = static_cast<std::size_t>(v) * bins;
    std::vector<double> counts(joint.begin() + static_cast<long>(row), joint.begin() + static_cast<long>(row + bins));
    for (int b = 0; b < bins; ++b) marginal[static_cast<std::size_t>(b)] += counts[static_cast<std::size_t>(b)];
    const double n_v = level_total[static_cast<std::size_t>(v)];
    if (n_v > 0.0) conditional += (n_v / total) * entropy(counts, n_v);
  }
  MutualInformation r;
  r.latent_entropy = entropy(marginal, total);
  r.feature_entropy = entropy(level_total, total);
  r.mi = std::max(0.0, r.latent_entropy - conditional);
  return r;
}

}  // namespace

MutualInformation mutual_information(const std::vector<std::vector<double>>& latent_samples,
                                     std::span<const double> feature_values, int bins) {
  if (latent_samples.size() != feature_values.size()) {
    throw DomainError("mutual_information: sample sets and labels differ in frame count");
  }
  if (bins < 2) throw DomainError("mutual_information: need at least 2 bins");
  int levels = 0;
  const auto level = level_ids(feature_values, levels);
  if (levels < 2) throw DomainError("mutual_information: feature has a single value (zero entropy)");
  std::vector<double> flat;
  std::vector<std::size_t> offsets{0};
  for (const auto& s : latent_samples) {
    if (s.empty()) throw DomainError("mutual_information: frame without samples");
    flat.insert(flat.end(), s.begin(), s.end());
    offsets.push_back(flat.size());
  }
  return estimate(flat, offsets, level, levels, bins);
}

MigReport compute_mig(const std::vector<PartitionSample>& partitions, const MigParams& params) {
  params.validate();
  if (partitions.empty()) throw DomainError("compute_mig: no partitions");

  struct Prepared {
    std::vector<int> level;
    int levels = 0;
    std::vector<std::size_t> offsets;
  };
  std::vector<Prepared> prepared;
  Eigen::Index n = -1;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    const auto& part = partitions[p];
    if (part.stats.size() != part.labels.size() || part.stats.empty()) {
      throw DomainError("compute_mig: partition " + std::to_string(p) + " has mismatched or empty data");
    }
    Prepared prep;
    prep.level = level_ids(part.labels, prep.levels);
    if (prep.levels < 2) {
      throw DomainError("compute_mig: partition " + std::to_string(p) +
                        " has a single feature value (zero entropy)");
    }
    for (const auto& s : part.stats) {
      if (n < 0) n = s.n();
      if (s.n() != n) throw DomainError("compute_mig: latent count differs between frames");
    }
    const auto ns = static_cast<std::size_t>(params.samples_per_latent);
    prep.offsets.resize(part.stats.size() + 1);
    for (std::size_t i = 0; i <= part.stats.size(); ++i) prep.offsets[i] = i * ns;
    prepared.push_back(std::move(prep));
  }

  MigReport report;
  std::vector<double> samples;
  for (int it = 0; it < params.iterations; ++it) {
    double sum = 0.0;
    for (std::size_t p = 0; p < partitions.size(); ++p) {
      const auto& part = partitions[p];
      const auto& prep = prepared[p];
      double h_f = 0.0;
      std::vector<double> mi(static_cast<std::size_t>(n));
      for (Eigen::Index j = 0; j < n; ++j) {
        Rng rng(hash_combine(hash_combine(params.seed, static_cast<std::uint64_t>(it)),
                             hash_combine(p, static_cast<std::uint64_t>(j))));
        samples.resize(prep.offsets.back());
        std::size_t k = 0;
        for (const auto& s : part.stats) {
          const double mu = s.mu(j), sigma = std::exp(0.5 * s.log_var(j));
          for (int q = 0; q < params.samples_per_latent; ++q) samples[k++] = mu + sigma * rng.normal();
        }
        const auto r = estimate(samples, prep.offsets, prep.level, prep.levels, params.bins);
        mi[static_cast<std::size_t>(j)] = r.mi;
        h_f = r.feature_entropy;
      }
      std::partial_sort(mi.begin(), mi.begin() + std::min<std::ptrdiff_t>(2, n), mi.end(), std::greater<>());
      const double second = n > 1 ? mi[1] : 0.0;
      sum += (mi[0] - second) / h_f;
    }
    report.per_iteration.push_back(sum / static_cast<double>(partitions.size()));
  }
  double total = 0.0;
  for (double v : report.per_iteration) total += v;
  report.mig = total / static_cast<double>(report.per_iteration.size());
  return report;
}

MigReport compute_mig(const bvae::TrainedModel& model, const std::vector<Scene>& scenes,
                      const partition::PartitionSet& partitions, const MigParams& params) {
  std::vector<PartitionSample> samples;
  for (const auto& p : partitions.partitions) {
    PartitionSample ps;
    for (std::size_t s : p.scenes) {
      const auto& scene = scenes.at(s);
      auto stats = bvae::encode_all(model, scene.frames);
      ps.stats.insert(ps.stats.end(), std::make_move_iterator(stats.begin()), std::make_move_iterator(stats.end()));
      for (const auto& l : scene.labels) ps.labels.push_back(l.get(p.feature));
    }
    samples.push_back(std::move(ps));
  }
  return compute_mig(samples, params);
}

}  // namespace bvood::disentangle
