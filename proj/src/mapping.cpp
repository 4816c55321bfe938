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

#include "bvood/mapping.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "bvood/dataset.hpp"
#include "bvood/error.hpp"

namespace bvood::mapping {

WelfordState::WelfordState(Eigen::Index dims) : mean_(Vector::Zero(dims)), m2_(Vector::Zero(dims)) {}

void WelfordState::update(std::span<const double> sample) {
  if (static_cast<Eigen::Index>(sample.size()) != mean_.size()) {
    throw DomainError("welford_update: sample length " + std::to_string(sample.size()) + " differs from " +
                      std::to_string(mean_.size()));
  }
  ++count_;
  const auto x = Eigen::Map<const Vector>(sample.data(), mean_.size());
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.array() += delta.array() * (x - mean_).array();
}

Vector WelfordState::variance() const {
  if (count_ < 2) throw DomainError("variance undefined for fewer than two samples");
  return m2_ / static_cast<double>(count_ - 1);
}

WelfordState welford_update(WelfordState state, std::span<const double> sample) {
  state.update(sample);
  return state;
}

Vector welford_variance(const WelfordState& state) { return state.variance(); }

Vector avg_kl_diff(std::span<const bvae::LatentStats> frames) {
  if (frames.size() < 2) throw DomainError("avg_kl_diff: scene needs at least two frames");
  Vector prev = bvae::kl_per_latent(frames[0]);
  Vector sum = Vector::Zero(prev.size());
  for (std::size_t l = 1; l < frames.size(); ++l) {
    Vector cur = bvae::kl_per_latent(frames[l]);
    if (cur.size() != prev.size()) throw DomainError("avg_kl_diff: latent count differs between frames");
    sum += (cur - prev).cwiseAbs();
    prev = std::move(cur);
  }
  return sum / static_cast<double>(frames.size() - 1);
}

Vector avg_kl_diff(const bvae::TrainedModel& model, const Scene& scene) {
  if (scene.size() < 2) throw DomainError("avg_kl_diff: scene '" + scene.name + "' has fewer than two frames");
  const auto stats = bvae::encode_all(model, scene.frames);
  return avg_kl_diff(stats);
}

const PartitionSelection* LatentSelection::find(Feature f) const {
  for (const auto& p : partitions)
    if (p.feature == f) return &p;
  return nullptr;
}

LatentSelection select_latents(const std::vector<PartitionDiffs>& partitions, int m, int reasoner_size) {
  if (partitions.empty()) throw DomainError("select_latents: no partitions");
  if (m < 1) throw DomainError("select_latents: m must be >= 1");
  if (reasoner_size < 1 || reasoner_size > m) throw DomainError("select_latents: reasoner size must lie in [1, m]");
  LatentSelection sel;
  std::set<int> detector;
  for (const auto& part : partitions) {
    if (part.scenes.size() < 2) {
      throw DomainError("select_latents: partition '" + std::string(feature_name(part.feature)) +
                        "' has fewer than two scenes; cross-scene variance is undefined");
    }
    const auto n = part.scenes.front().size();
    if (m > n) throw DomainError("select_latents: m = " + std::to_string(m) + " exceeds n = " + std::to_string(n));
    WelfordState w(n);
    for (const auto& v : part.scenes) w.update(v);
    const Vector var = w.variance();

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return var(a) > var(b); });

    PartitionSelection ps;
    ps.feature = part.feature;
    for (int r = 0; r < m; ++r) ps.ranked.push_back({order[static_cast<std::size_t>(r)], var(order[static_cast<std::size_t>(r)])});
    for (int r = 0; r < reasoner_size; ++r) ps.reasoner.push_back(ps.ranked[static_cast<std::size_t>(r)].latent);
    for (const auto& rl : ps.ranked) detector.insert(rl.latent);
    sel.partitions.push_back(std::move(ps));
  }
  sel.detector.assign(detector.begin(), detector.end());
  return sel;
}

LatentSelection select_latents(const bvae::TrainedModel& model, const std::vector<Scene>& scenes,
                               const partition::PartitionSet& partitions, int m, int reasoner_size) {
  if (m > model.n()) {
    throw DomainError("select_latents: m = " + std::to_string(m) + " exceeds n = " + std::to_string(model.n()));
  }
  std::vector<PartitionDiffs> diffs;
  for (const auto& p : partitions.partitions) {
    PartitionDiffs d{p.feature, {}};
    for (std::size_t s : p.scenes) d.scenes.push_back(avg_kl_diff(model, scenes.at(s)));
    diffs.push_back(std::move(d));
  }
  return select_latents(diffs, m, reasoner_size);
}

void write_selection(const std::filesystem::path& path, const LatentSelection& selection) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "partition,rank,latent_index,variance\n";
  for (const auto& p : selection.partitions) {
    for (std::size_t r = 0; r < p.ranked.size(); ++r) {
      out << feature_name(p.feature) << ',' << r << ',' << p.ranked[r].latent << ','
          << dataset::format_double(p.ranked[r].variance) << '\n';
    }
  }
}

LatentSelection read_selection(const std::filesystem::path& path, int reasoner_size) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing artifact: " + path.string());
  std::string line;
  std::getline(in, line);
  LatentSelection sel;
  std::set<int> detector;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = dataset::split_csv_line(line);
    if (cols.size() != 4) throw FormatError(path.string() + ": expected 4 columns");
    const Feature f = feature_from_name(cols[0]);
    if (sel.partitions.empty() || sel.partitions.back().feature != f) sel.partitions.push_back({f, {}, {}});
    auto& p = sel.partitions.back();
    RankedLatent rl{std::stoi(cols[2]), 0.0};
    std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), rl.variance);
    p.ranked.push_back(rl);
    if (static_cast<int>(p.reasoner.size()) < reasoner_size) p.reasoner.push_back(rl.latent);
    detector.insert(rl.latent);
  }
  sel.detector.assign(detector.begin(), detector.end());
  return sel;
}

}  // namespace bvood::mapping
