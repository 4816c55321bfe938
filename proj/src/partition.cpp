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

#include "bvood/partition.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "bvood/dataset.hpp"
#include "bvood/error.hpp"

namespace bvood::partition {

namespace {

constexpr double kTieTolerance = 1e-12;

double population_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

// Categorical ids scored as rank / (levels - 1).
std::map<int, double> segment_ranks(const std::vector<Scene>& scenes) {
  std::set<int> ids;
  for (const auto& s : scenes)
    for (const auto& l : s.labels) ids.insert(l.segment_id);
  std::map<int, double> rank;
  const double denom = ids.size() > 1 ? static_cast<double>(ids.size() - 1) : 1.0;
  int k = 0;
  for (int id : ids) rank[id] = k++ / denom;
  return rank;
}

std::vector<double> feature_column(const std::vector<FeatureRow>& rows, Feature f,
                                   const std::map<int, double>& ranks) {
  std::vector<double> col;
  col.reserve(rows.size());
  const auto fi = static_cast<std::size_t>(f);
  for (const auto& r : rows) col.push_back(is_categorical(f) ? ranks.at(static_cast<int>(r[fi])) : r[fi]);
  return col;
}

}  // namespace

const Partition* PartitionSet::find(Feature f) const {
  for (const auto& p : partitions)
    if (p.feature == f) return &p;
  return nullptr;
}

NormalizedLabels normalize_features(const std::vector<Scene>& scenes) {
  NormalizedLabels out;
  out.min.fill(std::numeric_limits<double>::infinity());
  out.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& s : scenes) {
    for (const auto& l : s.labels) {
      for (Feature f : kAllFeatures) {
        const auto i = static_cast<std::size_t>(f);
        out.min[i] = std::min(out.min[i], l.get(f));
        out.max[i] = std::max(out.max[i], l.get(f));
      }
    }
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) out.constant[i] = !(out.max[i] > out.min[i]);
  out.rows.reserve(scenes.size());
  for (const auto& s : scenes) {
    auto& rows = out.rows.emplace_back();
    rows.reserve(s.labels.size());
    for (const auto& l : s.labels) {
      FeatureRow r{};
      for (Feature f : kAllFeatures) {
        const auto i = static_cast<std::size_t>(f);
        if (is_categorical(f)) {
          r[i] = l.get(f);
        } else {
          r[i] = out.constant[i] ? 0.0 : (l.get(f) - out.min[i]) / (out.max[i] - out.min[i]);
        }
      }
      rows.push_back(r);
    }
  }
  return out;
}

std::vector<FeatureRow> scene_variances(const std::vector<Scene>& scenes, const NormalizedLabels& labels) {
  const auto ranks = segment_ranks(scenes);
  std::vector<FeatureRow> out;
  out.reserve(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    FeatureRow v{};
    for (Feature f : kAllFeatures) {
      v[static_cast<std::size_t>(f)] = population_variance(feature_column(labels.rows[s], f, ranks));
    }
    out.push_back(v);
  }
  return out;
}

PartitionSet build_partitions(const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw DomainError("build_partitions: no scenes");
  const auto labels = normalize_features(scenes);
  const auto variances = scene_variances(scenes, labels);
  const auto ranks = segment_ranks(scenes);

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scenes[a].name < scenes[b].name; });

  std::array<std::vector<std::size_t>, kFeatureCount> members;
  for (std::size_t s : order) {
    const auto& v = variances[s];
    std::size_t best = 0;
    for (std::size_t i = 1; i < kFeatureCount; ++i) {
      if (v[i] > v[best] + kTieTolerance) best = i;
    }
    if (v[best] > 0.0) members[best].push_back(s);
  }

  PartitionSet set;
  for (Feature f : kAllFeatures) {
    const auto& m = members[static_cast<std::size_t>(f)];
    if (m.empty()) continue;
    std::vector<double> pooled;
    for (std::size_t s : m) {
      const auto col = feature_column(labels.rows[s], f, ranks);
      pooled.insert(pooled.end(), col.begin(), col.end());
    }
    const double var = population_variance(pooled);
    if (var > 0.0) set.partitions.push_back({f, m, var});
  }
  if (set.partitions.empty()) {
    throw DomainError("build_partitions: no scene has any feature variance; every partition would be empty");
  }
  return set;
}

void write_manifest(const std::filesystem::path& path, const PartitionSet& set, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "partition_id,representative_feature,scene_name\n";
  for (std::size_t p = 0; p < set.partitions.size(); ++p) {
    for (std::size_t s : set.partitions[p].scenes) {
      out << p << ',' << feature_name(set.partitions[p].feature) << ',' << scenes.at(s).name << '\n';
    }
  }
}

PartitionSet read_manifest(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing artifact: " + path.string());
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < scenes.size(); ++i) by_name[scenes[i].name] = i;

  std::string line;
  std::getline(in, line);
  std::map<std::size_t, Partition> parts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = dataset::split_csv_line(line);
    if (cols.size() != 3) throw FormatError(path.string() + ": expected 3 columns");
    const auto it = by_name.find(cols[2]);
    if (it == by_name.end()) throw FormatError(path.string() + ": unknown scene '" + cols[2] + "'");
    auto& p = parts[std::stoul(cols[0])];
    p.feature = feature_from_name(cols[1]);
    p.scenes.push_back(it->second);
  }
  // Recompute pooled variances from the labels.
  const auto labels = normalize_features(scenes);
  const auto ranks = segment_ranks(scenes);
  PartitionSet set;
  for (auto& [id, p] : parts) {
    std::vector<double> pooled;
    for (std::size_t s : p.scenes) {
      const auto col = feature_column(labels.rows[s], p.feature, ranks);
      pooled.insert(pooled.end(), col.begin(), col.end());
    }
    p.variance = population_variance(pooled);
    set.partitions.push_back(std::move(p));
  }
  return set;
}

}  // namespace bvood::partition
