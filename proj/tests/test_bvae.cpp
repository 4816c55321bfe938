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

#include <cmath>
#include <numeric>

#include "bvood/bvae.hpp"
#include "bvood/error.hpp"
#include "bvood/rng.hpp"
#include "bvood/scenegen.hpp"
#include "support.hpp"

using namespace bvood;
using bvae::LatentStats;
using nn::Vector;

namespace {

LatentStats stats_of(std::initializer_list<double> mu, std::initializer_list<double> lv) {
  LatentStats s;
  s.mu = Vector::Map(std::data(mu), static_cast<Eigen::Index>(mu.size()));
  s.log_var = Vector::Map(std::data(lv), static_cast<Eigen::Index>(lv.size()));
  return s;
}

std::vector<Frame> small_frames(int count, int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Frame> out;
  for (int i = 0; i < count; ++i) {
    const FeatureVector fv{rng.uniform(0.0, 0.6), rng.uniform(0.0, 0.3), 0.2, static_cast<int>(rng.below(3))};
    out.push_back(scenegen::render_frame(fv, seed + i, w, h));
  }
  return out;
}

bvae::BetaVaeConfig small_config() {
  bvae::BetaVaeConfig c;
  c.frame_width = 8;
  c.frame_height = 8;
  c.n = 4;
  c.hidden = {32, 16};
  c.batch_size = 10;
  c.early_stop_patience = 0;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("kl closed form") {
  const auto kl = bvae::kl_per_latent(stats_of({0.0, 1.0, 0.0}, {0.0, 0.0, std::log(4.0)}));
  CHECK(kl[0] == 0.0);
  CHECK(kl[1] == 0.5);
  CHECK(kl[2] == doctest::Approx(0.5 * (4.0 - std::log(4.0) - 1.0)).epsilon(1e-14));
  CHECK(kl[2] == doctest::Approx(0.8069).epsilon(1e-4));
}

TEST_CASE("kl matches the formula on random pairs") {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double mu = rng.uniform(-5.0, 5.0);
    const double lv = rng.uniform(-8.0, 8.0);
    const double sigma2 = std::exp(lv);
    CHECK(bvae::kl_single(mu, lv) == doctest::Approx(0.5 * (mu * mu + sigma2 - std::log(sigma2) - 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("elbo terms") {
  const std::vector<double> x{0.2, 0.9, 0.5};
  const std::vector<double> r{0.3, 0.8, 0.5};
  const auto zero = bvae::elbo_loss(x, r, stats_of({0.0}, {0.0}), 1.4);
  CHECK(zero.kl == 0.0);
  CHECK(zero.total == doctest::Approx(zero.recon));

  const auto one = bvae::elbo_loss(x, r, stats_of({1.0}, {0.0}), 1.0);
  CHECK(one.kl == doctest::Approx(0.5));
  CHECK(one.total == doctest::Approx(one.recon + one.kl));
  double bce = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) bce -= x[i] * std::log(r[i]) + (1.0 - x[i]) * std::log(1.0 - r[i]);
  CHECK(one.recon == doctest::Approx(bce).epsilon(1e-9));

  const auto heavy = bvae::elbo_loss(x, r, stats_of({1.0}, {0.0}), 4.0);
  CHECK(heavy.total == doctest::Approx(heavy.recon + 2.0));
}

TEST_CASE("reparameterize") {
  const auto s = stats_of({0.5, -1.0}, {0.0, std::log(0.25)});
  CHECK(bvae::reparameterize(s, Vector::Zero(2)).isApprox(s.mu));
  const Vector e = (Vector(2) << 0.3, -0.7).finished();
  const Vector z = bvae::reparameterize(s, e);
  CHECK(z[0] == doctest::Approx(0.8));
  CHECK(z[1] == doctest::Approx(-1.0 - 0.35));

  Rng rng(1);
  const auto unit = stats_of({0.0}, {0.0});
  const int draws = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = bvae::reparameterize(unit, Vector::Constant(1, rng.normal()))[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sq / draws - mean * mean - 1.0) < 0.05);
}

TEST_CASE("learning rate schedule switches after the first phase") {
  bvae::BetaVaeConfig c;
  c.epochs = 100;
  c.phase1_fraction = 0.75;
  CHECK(c.phase1_epochs() == 75);
  CHECK(c.learning_rate(75) == c.lr_phase1);
  CHECK(c.learning_rate(76) == c.lr_phase2);
}

TEST_CASE("batch loss gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto g = testing::random_grad_case(seed);
    CHECK(testing::loss_gradient_error(g.model, g.x, g.noise) < 1e-4);
  }
}

TEST_CASE("training reduces the loss") {
  auto c = small_config();
  c.epochs = 30;
  const auto frames = small_frames(50, 8, 8, 3);
  const auto model = bvae::train(c, frames);
  REQUIRE(model.log.epoch_loss.size() == 30);
  CHECK(model.log.epoch_loss.back() < model.log.epoch_loss.front());
  CHECK(model.encoder.all_finite());
}

TEST_CASE("learning rate change is logged") {
  auto c = small_config();
  c.epochs = 8;
  c.phase1_fraction = 0.75;
  const auto model = bvae::train(c, small_frames(12, 8, 8, 4));
  REQUIRE(model.log.epoch_lr.size() == 8);
  CHECK(model.log.epoch_lr[5] == c.lr_phase1);
  CHECK(model.log.epoch_lr[6] == c.lr_phase2);
}

TEST_CASE("early stopping ends a stalled run") {
  auto c = small_config();
  c.epochs = 40;
  c.early_stop_patience = 3;
  c.min_delta = 0.9;
  const auto model = bvae::train(c, small_frames(12, 8, 8, 6));
  CHECK(model.log.early_stopped);
  CHECK(model.log.epoch_loss.size() < 40);
}

TEST_CASE("training is reproducible") {
  auto c = small_config();
  c.epochs = 3;
  const auto frames = small_frames(20, 8, 8, 7);
  const auto a = bvae::train(c, frames);
  const auto b = bvae::train(c, frames);
  CHECK(a.encoder == b.encoder);
  CHECK(a.decoder == b.decoder);
}

TEST_CASE("encoding is deterministic and subsettable") {
  auto c = small_config();
  c.epochs = 2;
  const auto frames = small_frames(10, 8, 8, 9);
  const auto model = bvae::train(c, frames);
  const auto a = bvae::encode(model, frames[0]);
  CHECK(a == bvae::encode(model, frames[0]));
  CHECK(a.n() == c.n);
  const std::vector<int> pick{2, 0};
  const auto sub = bvae::encode_latents(model, frames[0], pick);
  REQUIRE(sub.n() == 2);
  CHECK(sub.mu[0] == doctest::Approx(a.mu[2]).epsilon(1e-13));
  CHECK(sub.log_var[1] == doctest::Approx(a.log_var[0]).epsilon(1e-13));
}

TEST_CASE("model roundtrip keeps encodings") {
  auto c = small_config();
  c.epochs = 2;
  const auto frames = small_frames(10, 8, 8, 10);
  const auto model = bvae::train(c, frames);
  testing::TempDir dir("bvae");
  const auto path = dir.path() / "model.bin";
  bvae::save_model(path, model);
  const auto back = bvae::load_model(path);
  CHECK(back.config.n == c.n);
  CHECK(back.config.beta == c.beta);
  for (const auto& f : frames) CHECK(bvae::encode(back, f) == bvae::encode(model, f));
  CHECK(back.log.epoch_loss == model.log.epoch_loss);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.n = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config();
  c.beta = -1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}
