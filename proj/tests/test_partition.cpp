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

#include "bvood/error.hpp"
#include "bvood/partition.hpp"
#include "support.hpp"

using namespace bvood;

namespace {

std::vector<Scene> scenes_from(const char* text) {
  return scenegen::generate_scenes(scenegen::parse_spec(text), 3, 8, 8);
}

constexpr std::size_t idx(Feature f) { return static_cast<std::size_t>(f); }

}  // namespace

TEST_CASE("normalization maps ranges onto the unit interval") {
  const auto scenes = scenes_from(
      "scene a { frames 4 brightness step 2 0.2 0.6 cloudiness const 0.25 }");
  const auto n = partition::normalize_features(scenes);
  CHECK(n.rows[0][0][idx(Feature::Brightness)] == 0.0);
  CHECK(n.rows[0][3][idx(Feature::Brightness)] == 1.0);
  CHECK(n.constant[idx(Feature::Cloudiness)]);
  CHECK_FALSE(n.constant[idx(Feature::Brightness)]);
  for (const auto& r : n.rows[0]) CHECK(r[idx(Feature::Cloudiness)] == 0.0);
}

TEST_CASE("three precipitation and three brightness scenes make two partitions") {
  const auto scenes = scenes_from(
      "scene p1 { frames 30 precipitation range 0.0 0.1 brightness const 0.1 }\n"
      "scene p2 { frames 30 precipitation range 0.0 0.3 brightness const 0.1 }\n"
      "scene p3 { frames 30 precipitation range 0.0 0.4 brightness const 0.1 }\n"
      "scene b1 { frames 30 brightness range 0.0 0.2 precipitation const 0.05 }\n"
      "scene b2 { frames 30 brightness range 0.0 0.3 precipitation const 0.05 }\n"
      "scene b3 { frames 30 brightness range 0.0 0.4 precipitation const 0.05 }\n");
  const auto set = partition::build_partitions(scenes);
  REQUIRE(set.partitions.size() == 2);
  const auto* p = set.find(Feature::Precipitation);
  const auto* b = set.find(Feature::Brightness);
  REQUIRE(p != nullptr);
  REQUIRE(b != nullptr);
  CHECK(p->scenes == std::vector<std::size_t>{0, 1, 2});
  CHECK(b->scenes == std::vector<std::size_t>{3, 4, 5});
  CHECK(p->variance > 0.0);
  CHECK(set.find(Feature::Cloudiness) == nullptr);
}

TEST_CASE("partition membership is listed by scene name") {
  const auto scenes = scenes_from(
      "scene zeta { frames 10 brightness range 0 0.5 }\n"
      "scene alpha { frames 10 brightness range 0 0.5 }\n");
  const auto set = partition::build_partitions(scenes);
  REQUIRE(set.partitions.size() == 1);
  CHECK(set.partitions[0].scenes == std::vector<std::size_t>{1, 0});
}

TEST_CASE("single varying scene makes one partition") {
  const auto set = partition::build_partitions(scenes_from("scene s { frames 20 brightness ramp 0.1 0.7 }"));
  REQUIRE(set.partitions.size() == 1);
  CHECK(set.partitions[0].feature == Feature::Brightness);
}

TEST_CASE("ties go to the earlier feature") {
  const auto set = partition::build_partitions(
      scenes_from("scene t { frames 10 brightness step 5 0.0 1.0 precipitation step 5 0.0 1.0 }"));
  REQUIRE(set.partitions.size() == 1);
  CHECK(set.partitions[0].feature == Feature::Brightness);
}

TEST_CASE("all constant scenes cannot be partitioned") {
  CHECK_THROWS_AS(partition::build_partitions(scenes_from("scene c { frames 5 brightness const 0.3 }")),
                  DomainError);
}

TEST_CASE("scene variance oracle") {
  const auto scenes = scenes_from("scene v { frames 4 precipitation step 1 0.0 0.8 }");
  const auto n = partition::normalize_features(scenes);
  const auto v = partition::scene_variances(scenes, n);
  // normalized values 0,1,1,1: population variance 3/16
  CHECK(v[0][idx(Feature::Precipitation)] == doctest::Approx(3.0 / 16.0));
  CHECK(v[0][idx(Feature::Brightness)] == 0.0);
}

TEST_CASE("manifest roundtrip") {
  const auto scenes = scenes_from(
      "scene a { frames 10 brightness range 0 0.5 }\n"
      "scene b { frames 10 precipitation range 0 0.5 }\n");
  const auto set = partition::build_partitions(scenes);
  testing::TempDir dir("partition");
  partition::write_manifest(dir.path() / "p.csv", set, scenes);
  const auto back = partition::read_manifest(dir.path() / "p.csv", scenes);
  REQUIRE(back.partitions.size() == set.partitions.size());
  for (std::size_t i = 0; i < set.partitions.size(); ++i) {
    CHECK(back.partitions[i].feature == set.partitions[i].feature);
    CHECK(back.partitions[i].scenes == set.partitions[i].scenes);
  }
  CHECK_THROWS_AS(partition::read_manifest(dir.path() / "missing.csv", scenes), DependencyError);
}
