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
#include <cmath>
#include <fstream>
#include <memory>

#include "bvood/error.hpp"
#include "bvood/monitor.hpp"
#include "support.hpp"

using namespace bvood;
using monitor::CusumParams;
using monitor::OodInterval;
using monitor::RunRecord;

namespace {

std::shared_ptr<const bvae::TrainedModel> tiny_model() {
  bvae::BetaVaeConfig c;
  c.frame_width = 6;
  c.frame_height = 6;
  c.n = 5;
  c.hidden = {12, 8};
  c.seed = 21;
  return std::make_shared<const bvae::TrainedModel>(bvae::init_model(c));
}

std::vector<Frame> frames_at(double brightness, int count, std::uint64_t seed) {
  std::vector<Frame> out;
  for (int i = 0; i < count; ++i) {
    const FeatureVector fv{brightness, 0.1, 0.2, 0};
    out.push_back(scenegen::render_frame(fv, seed + static_cast<std::uint64_t>(i), 6, 6));
  }
  return out;
}

mapping::LatentSelection two_partition_selection() {
  mapping::LatentSelection sel;
  sel.partitions.push_back({Feature::Brightness, {{1, 0.5}, {3, 0.2}}, {1}});
  sel.partitions.push_back({Feature::Precipitation, {{4, 0.4}, {3, 0.1}}, {4}});
  sel.detector = {1, 3, 4};
  return sel;
}

monitor::DetectorProfile calibrated_profile(int window = 4) {
  auto p = monitor::make_profile(tiny_model(), two_partition_selection(), window, {0.5, 3.0}, {0.5, 3.0},
                                 {0.1, 0.5});
  monitor::calibrate(p, frames_at(0.2, 30, 100));
  return p;
}

std::vector<OodInterval> one_interval(std::size_t start, std::size_t end, std::vector<std::string> f) {
  return {OodInterval{start, end, std::move(f)}};
}

}  // namespace

TEST_CASE("icp p-values") {
  const std::vector<double> c{1.0, 2.0, 3.0, 4.0};
  CHECK(monitor::icp_pvalue(c, 0.5) == 1.0);
  CHECK(monitor::icp_pvalue(c, 9.0) == doctest::Approx(0.2));
  CHECK(monitor::icp_pvalue(c, 2.5) == doctest::Approx(0.6));
  CHECK(monitor::icp_pvalue(c, 2.0) == doctest::Approx(0.8));
  CHECK_THROWS_AS(monitor::icp_pvalue({}, 1.0), DependencyError);
}

TEST_CASE("martingale closed forms") {
  CHECK(monitor::log_martingale(std::vector<double>(20, 1.0)) == doctest::Approx(-std::log(21.0)).epsilon(1e-9));
  CHECK(std::abs(monitor::log_martingale(std::vector<double>(20, 1.0)) + std::log(21.0)) < 1e-6);
  CHECK(std::abs(monitor::log_martingale(std::vector<double>{1.0}) + std::log(2.0)) < 1e-6);
  CHECK(monitor::log_martingale(std::vector<double>(20, 0.01)) > 20.0);
  CHECK_THROWS_AS(monitor::log_martingale({}), DomainError);
}

TEST_CASE("martingale matches a fine midpoint oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> p(1 + rng.below(20));
    for (auto& v : p) v = std::max(1e-3, rng.uniform());
    CHECK(std::abs(monitor::log_martingale(p) - testing::midpoint_log_martingale(p)) < 1e-6);
  }
  CHECK_THROWS_AS(monitor::log_martingale(std::vector<double>{0.5}, 3), DomainError);
}

TEST_CASE("cusum recurrence") {
  const double s1 = monitor::cusum_step(0.0, 5.0, 3.0);
  CHECK(s1 == 2.0);
  CHECK(monitor::cusum_step(s1, 5.0, 3.0) == 4.0);
  double s = 0.0;
  for (int i = 0; i < 50; ++i) s = monitor::cusum_step(s, 2.9, 3.0);
  CHECK(s == 0.0);
}

TEST_CASE("nonconformity averages latent KL") {
  bvae::LatentStats st;
  st.mu = (Eigen::VectorXd(3) << 1.0, 0.0, 2.0).finished();
  st.log_var = Eigen::VectorXd::Zero(3);
  const std::vector<int> one{0};
  CHECK(monitor::nonconformity(st, one) == 0.5);
  const std::vector<int> two{0, 2};
  CHECK(monitor::nonconformity(st, two) == doctest::Approx((0.5 + 2.0) / 2.0));
  bvae::LatentStats zero;
  zero.mu = Eigen::VectorXd::Zero(3);
  zero.log_var = Eigen::VectorXd::Zero(3);
  const std::vector<int> all{0, 1, 2};
  CHECK(monitor::nonconformity(zero, all) == 0.0);
}

TEST_CASE("calibration is sorted and deterministic") {
  const auto model = tiny_model();
  const auto frames = frames_at(0.3, 12, 5);
  const std::vector<int> latents{0, 2};
  const auto a = monitor::calibrate(*model, latents, frames);
  CHECK(a.size() == 12);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a == monitor::calibrate(*model, latents, frames));
  std::vector<double> oracle;
  for (const auto& f : frames) oracle.push_back(monitor::nonconformity(*model, latents, f));
  std::sort(oracle.begin(), oracle.end());
  CHECK(a == oracle);
}

TEST_CASE("profile layout and channels") {
  auto p = monitor::make_profile(tiny_model(), two_partition_selection(), 4, {1, 2}, {3, 4}, {5, 6});
  CHECK_FALSE(p.calibrated());
  CHECK_THROWS_AS(p.validate(), DependencyError);
  const auto ch = p.channels();
  REQUIRE(ch.size() == 3);
  CHECK(ch[0]->name == "detector");
  CHECK(ch[1]->name == "reasoner:brightness");
  CHECK(ch[2]->name == "reasoner:precipitation");
  CHECK(p.encoded_latents() == std::vector<int>{1, 3, 4});
  monitor::calibrate(p, frames_at(0.2, 10, 1));
  CHECK(p.calibrated());
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("stream steps follow the scalar operations") {
  const auto p = calibrated_profile(4);
  auto state = monitor::StreamState::for_profile(p);
  const auto frames = frames_at(0.2, 8, 500);
  std::vector<double> pw;
  double s = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto out = monitor::step(p, state, frames[t]);
    CHECK(out.frame == t);
    CHECK(out.warmup == (t + 1 < 4));
    const auto* d = out.channel("detector");
    REQUIRE(d != nullptr);
    const double alpha = monitor::nonconformity(*p.model, p.detector.latents, frames[t]);
    CHECK(d->alpha == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(d->p == monitor::icp_pvalue(p.detector.calibration, d->alpha));
    pw.push_back(d->p);
    if (pw.size() > 4) pw.erase(pw.begin());
    const double lm = monitor::log_martingale(pw);
    CHECK(d->log_martingale == doctest::Approx(lm).epsilon(1e-12));
    s = monitor::cusum_step(s, lm, p.detector.cusum.omega);
    CHECK(d->cusum == doctest::Approx(s).epsilon(1e-12));
    CHECK(d->flag == (s > p.detector.cusum.tau));
    CHECK(out.channel("reasoner:precipitation") != nullptr);
  }
  CHECK(state.frame == frames.size());
  state.reset();
  CHECK(state.frame == 0);
  CHECK(state.channels[0].cusum == 0.0);
}

TEST_CASE("constant stream never raises a change point") {
  auto p = calibrated_profile(4);
  const auto frame = frames_at(0.2, 1, 9).front();
  p.change_point = {monitor::nonconformity(*p.model, p.detector.latents, frame), 0.01};
  auto state = monitor::StreamState::for_profile(p);
  for (int i = 0; i < 40; ++i) CHECK_FALSE(monitor::change_point_step(p, state, frame).flag);
}

TEST_CASE("change point moving average and cusum") {
  auto p = calibrated_profile(3);
  p.change_point = {0.0, 1e9};
  auto state = monitor::StreamState::for_profile(p);
  const auto frames = frames_at(0.4, 5, 60);
  std::vector<double> a;
  for (const auto& f : frames) a.push_back(monitor::nonconformity(*p.model, p.detector.latents, f));
  double s = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto out = monitor::change_point_step(p, state, frames[t]);
    const std::size_t from = t >= 2 ? t - 2 : 0;
    double sum = 0.0;
    for (std::size_t k = from; k <= t; ++k) sum += a[k];
    const double ma = sum / static_cast<double>(t - from + 1);
    CHECK(out.moving_average == doctest::Approx(ma).epsilon(1e-12));
    s = monitor::cusum_step(s, ma, 0.0);
    CHECK(out.cusum == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("calibration roundtrip and corruption") {
  const auto p = calibrated_profile();
  testing::TempDir dir("monitor");
  const auto path = dir.path() / "cal.bin";
  monitor::save_calibration(path, p);
  auto q = monitor::make_profile(p.model, two_partition_selection(), 4, {0.5, 3.0}, {0.5, 3.0}, {0.1, 0.5});
  monitor::load_calibration(path, q);
  CHECK(q.detector.calibration == p.detector.calibration);
  CHECK(q.reasoners[1].calibration == p.reasoners[1].calibration);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.put('Z');
  f.close();
  auto r = monitor::make_profile(p.model, two_partition_selection(), 4, {0.5, 3.0}, {0.5, 3.0}, {0.1, 0.5});
  CHECK_THROWS_AS(monitor::load_calibration(path, r), FormatError);
  CHECK_FALSE(r.calibrated());
}

TEST_CASE("layout roundtrip") {
  const auto p = calibrated_profile();
  testing::TempDir dir("layout");
  monitor::save_layout(dir.path() / "profile.txt", p);
  monitor::DetectorProfile q;
  q.model = p.model;
  monitor::load_layout(dir.path() / "profile.txt", q);
  CHECK(q.detector.latents == p.detector.latents);
  REQUIRE(q.reasoners.size() == 2);
  CHECK(q.reasoners[0].name == "reasoner:brightness");
  CHECK(q.reasoners[1].latents == std::vector<int>{4});
}

TEST_CASE("evaluation metrics") {
  SUBCASE("perfect flags") {
    RunRecord r{"s", {false, true, true, false}, one_interval(1, 3, {"brightness"})};
    const auto m = monitor::evaluate({r});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.min_sensitivity == 1.0);
    CHECK(m.mean_latency == 0.0);
  }
  SUBCASE("silent detector on an OOD run") {
    RunRecord r{"s", std::vector<bool>(5, false), one_interval(0, 5, {"precipitation"})};
    const auto m = monitor::evaluate({r});
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.missed_intervals == 1);
    CHECK_FALSE(m.mean_latency.has_value());
  }
  SUBCASE("counts by hand") {
    RunRecord a{"a", {true, false, false, true, true, true}, one_interval(2, 6, {"brightness"})};
    RunRecord b{"b", {false, false, true, true}, one_interval(1, 4, {"segment_id"})};
    RunRecord c{"c", {false, false}, {}};
    const auto m = monitor::evaluate({a, b, c});
    CHECK(m.tp == 5);
    CHECK(m.fp == 1);
    CHECK(m.fn == 2);
    CHECK(m.tn == 4);
    CHECK(m.precision == doctest::Approx(5.0 / 6.0));
    CHECK(m.recall == doctest::Approx(5.0 / 7.0));
    CHECK(m.f1 == doctest::Approx(2.0 * (5.0 / 6.0) * (5.0 / 7.0) / (5.0 / 6.0 + 5.0 / 7.0)));
    CHECK(m.feature_recall.at("brightness") == doctest::Approx(0.75));
    CHECK(m.feature_recall.at("segment_id") == doctest::Approx(2.0 / 3.0));
    CHECK(m.min_sensitivity == doctest::Approx(2.0 / 3.0));
    CHECK(m.mean_latency == doctest::Approx(1.0));
  }
  SUBCASE("interval outside the run") {
    RunRecord r{"s", {false}, one_interval(0, 3, {"brightness"})};
    CHECK_THROWS_AS(monitor::evaluate({r}), DomainError);
  }
}

TEST_CASE("ground truth from training ranges") {
  const auto train = scenegen::generate_scenes(
      scenegen::parse_spec("scene t { frames 10 brightness range 0.1 0.3 segment_id const 0 }"), 1, 6, 6);
  const auto test = scenegen::generate_scene(
      scenegen::parse_spec("scene x { frames 12 brightness step 4 0.2 0.9 segment_id step 8 0 2 }")[0], 2, 6, 6);
  const auto truth = monitor::derive_truth(train, test);
  REQUIRE(truth.size() == 2);
  CHECK(truth[0].start == 4);
  CHECK(truth[0].end == 8);
  CHECK(truth[0].features == std::vector<std::string>{"brightness"});
  CHECK(truth[1].start == 8);
  CHECK(truth[1].end == 12);
  CHECK(truth[1].features == std::vector<std::string>{"brightness", "segment_id"});
}
