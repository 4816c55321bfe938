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


// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "bvood/bvae.hpp"
#include "bvood/rng.hpp"

namespace bvood::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("bvood_" + tag + "_" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(this)) % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Worst relative error between batch_loss gradients and central differences
/// of the loss, over every encoder and decoder parameter.
inline double loss_gradient_error(bvae::TrainedModel model, const nn::Matrix& x, const nn::Matrix& noise,
                                  double h = 1e-4) {
  auto enc = nn::Gradients::zeros_like(model.encoder);
  auto dec = nn::Gradients::zeros_like(model.decoder);
  bvae::batch_loss(model, x, noise, &enc, &dec);
  double worst = 0.0;
  auto sweep = [&](nn::Network& net, const nn::Gradients& g) {
    for (std::size_t l = 0; l < net.depth(); ++l) {
      auto& layer = net.layer(l);
      auto probe = [&](double& p, double analytic) {
        const double keep = p;
        p = keep + h;
        const double up = bvae::batch_loss(model, x, noise, nullptr, nullptr).total;
        p = keep - h;
        const double down = bvae::batch_loss(model, x, noise, nullptr, nullptr).total;
        p = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
      };
      for (Eigen::Index i = 0; i < layer.weights.size(); ++i) probe(layer.weights.data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias[i], g.bias[l][i]);
    }
  };
  sweep(model.encoder, enc);
  sweep(model.decoder, dec);
  return worst;
}

/// Random model with small frames and a batch of pixel data in (0,1).
struct GradCase {
  bvae::TrainedModel model;
  nn::Matrix x;
  nn::Matrix noise;
};

inline GradCase random_grad_case(std::uint64_t seed) {
  Rng rng(seed);
  bvae::BetaVaeConfig c;
  c.frame_width = 2 + static_cast<int>(rng.below(3));
  c.frame_height = 2 + static_cast<int>(rng.below(2));
  c.n = 1 + static_cast<int>(rng.below(4));
  c.hidden = {3 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(4))};
  c.beta = rng.uniform(0.25, 4.0);
  c.seed = seed;
  GradCase g{bvae::init_model(c), nn::Matrix(c.pixels(), 1 + rng.below(3)), {}};
  for (auto* net : {&g.model.encoder, &g.model.decoder}) {
    for (std::size_t l = 0; l < net->depth(); ++l) {
      auto& b = net->layer(l).bias;
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += rng.uniform(-0.3, 0.3);
    }
  }
  for (Eigen::Index i = 0; i < g.x.size(); ++i) g.x.data()[i] = rng.uniform(0.05, 0.95);
  g.noise = nn::Matrix(c.n, g.x.cols());
  for (Eigen::Index i = 0; i < g.noise.size(); ++i) g.noise.data()[i] = rng.normal();
  return g;
}

/// Two-sided Kolmogorov-Smirnov statistic of a sample against U[0,1].
inline double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - v[i]);
    d = std::max(d, v[i] - static_cast<double>(i) / n);
  }
  return d;
}

}  // namespace bvood::testing

namespace bvood::testing {

/// log of the mixture martingale integral by the midpoint rule.
inline double midpoint_log_martingale(const std::vector<double>& p, long subintervals = 1000000) {
  double s = 0.0;
  for (double v : p) s += std::log(v);
  const double w = static_cast<double>(p.size());
  const double h = 1.0 / static_cast<double>(subintervals);
  double top = -INFINITY;
  std::vector<double> terms(static_cast<std::size_t>(subintervals));
  for (long k = 0; k < subintervals; ++k) {
    const double e = (static_cast<double>(k) + 0.5) * h;
    const double t = w * std::log(e) + (e - 1.0) * s;
    terms[static_cast<std::size_t>(k)] = t;
    top = std::max(top, t);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc * h);
}

}  // namespace bvood::testing
