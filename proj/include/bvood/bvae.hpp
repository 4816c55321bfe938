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
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "bvood/nn.hpp"
#include "bvood/scenegen.hpp"

namespace bvood::bvae {

using nn::Matrix;
using nn::Vector;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
/// Starting bias of the encoder's log-variance outputs.
inline constexpr double kInitLogVar = -4.0;

struct BetaVaeConfig {
  int n = 30;         // latent variables
  double beta = 1.4;  // KL weight
  int epochs = 40;
  double lr_phase1 = 1e-3;
  double lr_phase2 = 1e-4;
  double phase1_fraction = 0.75;  // share of epochs trained at lr_phase1
  int batch_size = 32;
  int early_stop_patience = 5;  // 0 disables early stopping
  double min_delta = 0.0;       // relative improvement needed to reset patience
  std::uint64_t seed = 1;
  int frame_width = scenegen::kDefaultWidth;
  int frame_height = scenegen::kDefaultHeight;
  std::vector<int> hidden = {512, 128};  // encoder widths; decoder mirrors them

  int pixels() const { return frame_width * frame_height; }
  /// Number of epochs trained at lr_phase1.
  int phase1_epochs() const;
  double learning_rate(int epoch) const;  // 1-based epoch
  void validate() const;
};

/// Posterior parameters of one frame: q(z|x) = N(mu, diag(exp(log_var))).
struct LatentStats {
  Vector mu;
  Vector log_var;

  Eigen::Index n() const { return mu.size(); }
  friend bool operator==(const LatentStats& a, const LatentStats& b) {
    return a.mu.size() == b.mu.size() && a.mu == b.mu && a.log_var == b.log_var;
  }
};

struct ElboTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Closed-form KL( N(mu, exp(log_var)) || N(0,1) ) for a single latent.
inline double kl_single(double mu, double log_var) {
  return 0.5 * (mu * mu + std::exp(log_var) - log_var - 1.0);
}

/// Per-latent KL divergence to the standard normal prior.
Vector kl_per_latent(const LatentStats& stats);

/// Negative ELBO with Bernoulli reconstruction likelihood:
/// total = recon + beta * kl. `x_recon` holds probabilities in (0,1).
ElboTerms elbo_loss(std::span<const double> x, std::span<const double> x_recon, const LatentStats& stats,
                    double beta);

/// z = mu + exp(log_var / 2) * noise
Vector reparameterize(const LatentStats& stats, const Vector& noise);

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean negative ELBO per frame
  std::vector<double> epoch_recon;
  std::vector<double> epoch_kl;
  std::vector<double> epoch_lr;
  bool early_stopped = false;
};

struct TrainedModel {
  BetaVaeConfig config;
  nn::Network encoder;  // pixels -> 2n (mu then raw log_var)
  nn::Network decoder;  // n -> pixels, logits
  TrainingLog log;

  int n() const { return config.n; }
};

/// Fresh model with Glorot-initialized encoder and decoder.
TrainedModel init_model(const BetaVaeConfig& config);

/// Mean negative ELBO of a batch (one frame per column of `x`) under frozen
/// reparameterization noise (one column per frame). When the gradient
/// pointers are non-null, gradients of that mean are accumulated into them.
ElboTerms batch_loss(const TrainedModel& model, const Matrix& x, const Matrix& noise, nn::Gradients* encoder_grads,
                     nn::Gradients* decoder_grads);

using EpochCallback = std::function<void(int epoch, const ElboTerms& mean, double lr)>;

/// Minibatch Adam on the mean negative ELBO with a two-phase learning rate
/// and training-loss early stopping. Throws NumericError on divergence.
TrainedModel train(const BetaVaeConfig& config, std::span<const Frame> frames, const EpochCallback& on_epoch = {});

LatentStats encode(const TrainedModel& model, const Frame& frame);
std::vector<LatentStats> encode_all(const TrainedModel& model, std::span<const Frame> frames);

/// Encodes only the listed latents; the result has latents.size() entries,
/// in the given order.
LatentStats encode_latents(const TrainedModel& model, const Frame& frame, std::span<const int> latents);

/// Decoder output probabilities for a latent sample.
Vector decode(const TrainedModel& model, const Vector& z);

/// Packs frames into a pixels x count matrix.
Matrix frames_to_matrix(std::span<const Frame> frames);

/// Model file: "BVMD", version, config record, encoder and decoder in the
/// nn weight format, loss history; checksummed.
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace bvood::bvae
