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


#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "bvood/error.hpp"
#include "bvood/mapping.hpp"
#include "support.hpp"

using namespace bvood;
using mapping::Vector;

namespace {

double two_pass_variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

bvae::LatentStats stats(std::initializer_list<double> mu, std::initializer_list<double> lv) {
  bvae::LatentStats s;
  s.mu = Vector::Map(std::data(mu), static_cast<Eigen::Index>(mu.size()));
  s.log_var = Vector::Map(std::data(lv), static_cast<Eigen::Index>(lv.size()));
  return s;
}

// Latent indices ordered by two-pass variance across scene vectors, ties to the lower index.
std::vector<int> variance_ranking(const std::vector<Vector>& scenes) {
  const auto n = static_cast<int>(scenes.front().size());
  std::vector<double> var(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    std::vector<double> col;
    for (const auto& s : scenes) col.push_back(s[j]);
    var[static_cast<std::size_t>(j)] = two_pass_variance(col);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return var[static_cast<std::size_t>(a)] > var[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

TEST_CASE("welford textbook case") {
  mapping::WelfordState s(1);
  for (double v : {1.0, 2.0, 3.0}) s = mapping::welford_update(s, std::vector<double>{v});
  CHECK(s.count() == 3);
  CHECK(s.mean()[0] == 2.0);
  CHECK(mapping::welford_variance(s)[0] == 1.0);
}

TEST_CASE("welford needs two samples") {
  mapping::WelfordState s(2);
  CHECK_THROWS_AS(s.variance(), DomainError);
  s.update(std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(s.variance(), DomainError);
  CHECK_THROWS_AS(s.update(std::vector<double>{1.0}), DomainError);
}

TEST_CASE("welford matches two-pass variance and ignores order") {
  Rng rng(42);
  std::vector<double> v(10000);
  for (auto& x : v) x = 1e3 + rng.normal() * 3.0;
  mapping::WelfordState a(1);
  for (double x : v) a.update(std::vector<double>{x});
  const double oracle = two_pass_variance(v);
  CHECK(std::abs(a.variance()[0] - oracle) / oracle < 1e-9);
  rng.shuffle(v);
  mapping::WelfordState b(1);
  for (double x : v) b.update(std::vector<double>{x});
  CHECK(std::abs(b.variance()[0] - a.variance()[0]) / oracle < 1e-9);
}

TEST_CASE("avg_kl_diff on short scenes") {
  const auto x = stats({0.0, 1.0}, {0.0, 0.5});
  const std::vector<bvae::LatentStats> same{x, x, x};
  CHECK(mapping::avg_kl_diff(same).isZero(0.0));
  const auto y = stats({2.0, -1.0}, {-1.0, 0.5});
  const std::vector<bvae::LatentStats> pair{x, y};
  const Vector expected = (bvae::kl_per_latent(y) - bvae::kl_per_latent(x)).cwiseAbs();
  CHECK(mapping::avg_kl_diff(pair) == expected);
}

TEST_CASE("avg_kl_diff averages consecutive changes") {
  const std::vector<bvae::LatentStats> seq{stats({0.0}, {0.0}), stats({1.0}, {0.0}), stats({0.0}, {0.0})};
  CHECK(mapping::avg_kl_diff(seq)[0] == doctest::Approx(0.5));
}

TEST_CASE("the feature-coupled latent becomes the reasoner") {
  Rng rng(6);
  mapping::PartitionDiffs part{Feature::Precipitation, {}};
  for (int s = 0; s < 3; ++s) {
    Vector v(8);
    for (int j = 0; j < 8; ++j) v[j] = 0.01 * rng.uniform();
    v[3] = 0.5 * (s + 1);
    part.scenes.push_back(v);
  }
  const auto sel = mapping::select_latents({part}, 3);
  const auto* p = sel.find(Feature::Precipitation);
  REQUIRE(p != nullptr);
  CHECK(p->reasoner == std::vector<int>{3});
  const auto oracle = variance_ranking(part.scenes);
  REQUIRE(p->ranked.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p->ranked[i].latent == oracle[i]);
  CHECK(p->ranked[0].variance == doctest::Approx(0.25));
}

TEST_CASE("ties rank the lower index first") {
  mapping::PartitionDiffs part{Feature::Brightness, {Vector::Zero(4), Vector::Ones(4)}};
  const auto sel = mapping::select_latents({part}, 2);
  CHECK(sel.partitions[0].ranked[0].latent == 0);
  CHECK(sel.partitions[0].ranked[1].latent == 1);
}

TEST_CASE("detector set is the union of ranked sets") {
  mapping::PartitionDiffs a{Feature::Brightness, {Vector::Zero(6), Vector::Unit(6, 1) + 0.5 * Vector::Unit(6, 4)}};
  mapping::PartitionDiffs b{Feature::Precipitation, {Vector::Zero(6), Vector::Unit(6, 5) + 0.5 * Vector::Unit(6, 4)}};
  const auto sel = mapping::select_latents({a, b}, 2);
  CHECK(sel.detector == std::vector<int>{1, 4, 5});
  CHECK(sel.find(Feature::Brightness)->reasoner == std::vector<int>{1});
  CHECK(sel.find(Feature::Precipitation)->reasoner == std::vector<int>{5});

  const auto all = mapping::select_latents({a, b}, 6);
  CHECK(all.detector == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(all.partitions[0].ranked.size() == 6);
}

TEST_CASE("selection roundtrip") {
  mapping::PartitionDiffs a{Feature::Brightness, {Vector::Zero(5), Vector::LinSpaced(5, 0.0, 1.0)}};
  const auto sel = mapping::select_latents({a}, 3);
  testing::TempDir dir("mapping");
  mapping::write_selection(dir.path() / "s.csv", sel);
  const auto back = mapping::read_selection(dir.path() / "s.csv");
  CHECK(back.detector == sel.detector);
  REQUIRE(back.partitions.size() == 1);
  CHECK(back.partitions[0].reasoner == sel.partitions[0].reasoner);
  CHECK(back.partitions[0].ranked[2].variance == sel.partitions[0].ranked[2].variance);
}
