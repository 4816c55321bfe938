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

#include "bvood/bvae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bvood/binio.hpp"
#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood::bvae {

int BetaVaeConfig::phase1_epochs() const {
  return static_cast<int>(std::lround(phase1_fraction * epochs));
}

double BetaVaeConfig::learning_rate(int epoch) const { return epoch <= phase1_epochs() ? lr_phase1 : lr_phase2; }

void BetaVaeConfig::validate() const {
  if (n < 1) throw DomainError("latent count n must be >= 1");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("beta must be >= 0");
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (!(phase1_fraction > 0.0 && phase1_fraction <= 1.0)) throw DomainError("phase1_fraction must lie in (0,1]");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (early_stop_patience < 0) throw DomainError("early_stop_patience must be >= 0");
  if (!(lr_phase1 >= 0.0) || !(lr_phase2 >= 0.0)) throw DomainError("learning rates must be >= 0");
  if (frame_width < 1 || frame_height < 1) throw DomainError("frame size must be positive");
  for (int h : hidden)
    if (h < 1) throw DomainError("hidden widths must be positive");
}

Vector kl_per_latent(const LatentStats& stats) {
  if (stats.mu.size() != stats.log_var.size()) throw DomainError("LatentStats: mu/log_var length mismatch");
  Vector kl(stats.n());
  for (Eigen::Index i = 0; i < stats.n(); ++i) kl(i) = kl_single(stats.mu(i), stats.log_var(i));
  return kl;
}

ElboTerms elbo_loss(std::span<const double> x, std::span<const double> x_recon, const LatentStats& stats,
                    double beta) {
  if (x.size() != x_recon.size()) throw DomainError("elbo_loss: x and x_recon differ in length");
  ElboTerms t;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = x_recon[i];
    t.recon -= x[i] * std::log(p) + (1.0 - x[i]) * std::log1p(-p);
  }
  t.kl = kl_per_latent(stats).sum();
  t.total = t.recon + beta * t.kl;
  if (!std::isfinite(t.total)) throw NumericError("elbo_loss: non-finite result");
  return t;
}

Vector reparameterize(const LatentStats& stats, const Vector& noise) {
  if (noise.size() != stats.n()) throw DomainError("reparameterize: noise length differs from n");
  return stats.mu.array() + (0.5 * stats.log_var.array()).exp() * noise.array();
}

namespace {

std::vector<int> encoder_dims(const BetaVaeConfig& c) {
  std::vector<int> d{c.pixels()};
  d.insert(d.end(), c.hidden.begin(), c.hidden.end());
  d.push_back(2 * c.n);
  return d;
}

std::vector<int> decoder_dims(const BetaVaeConfig& c) {
  std::vector<int> d{c.n};
  d.insert(d.end(), c.hidden.rbegin(), c.hidden.rend());
  d.push_back(c.pixels());
  return d;
}

std::vector<nn::Activation> activations(std::size_t layers) {
  std::vector<nn::Activation> a(layers, nn::Activation::Relu);
  a.back() = nn::Activation::Identity;
  return a;
}

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_frame(const TrainedModel& model, const Frame& frame) {
  if (frame.width != model.config.frame_width || frame.height != model.config.frame_height ||
      static_cast<int>(frame.pixels.size()) != model.config.pixels()) {
    throw DomainError("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                      ", model expects " + std::to_string(model.config.frame_width) + "x" +
                      std::to_string(model.config.frame_height));
  }
}

LatentStats split_output(const Vector& out, Eigen::Index n) {
  LatentStats s{out.head(n), out.segment(n, n)};
  s.log_var = s.log_var.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  return s;
}

}  // namespace

TrainedModel init_model(const BetaVaeConfig& config) {
  config.validate();
  TrainedModel m;
  m.config = config;
  const auto enc = encoder_dims(config);
  const auto dec = decoder_dims(config);
  m.encoder = nn::Network::glorot(enc, activations(enc.size() - 1), hash_combine(config.seed, 1));
  m.decoder = nn::Network::glorot(dec, activations(dec.size() - 1), hash_combine(config.seed, 2));
  auto& head = m.encoder.layer(m.encoder.depth() - 1);
  head.bias.tail(config.n).setConstant(kInitLogVar);
  return m;
}

Matrix frames_to_matrix(std::span<const Frame> frames) {
  if (frames.empty()) return Matrix();
  Matrix x(static_cast<Eigen::Index>(frames.front().pixels.size()), static_cast<Eigen::Index>(frames.size()));
  for (std::size_t j = 0; j < frames.size(); ++j) {
    if (frames[j].pixels.size() != frames.front().pixels.size()) throw DomainError("frames differ in size");
    x.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Vector>(frames[j].pixels.data(), static_cast<Eigen::Index>(frames[j].pixels.size()));
  }
  return x;
}

ElboTerms batch_loss(const TrainedModel& model, const Matrix& x, const Matrix& noise, nn::Gradients* encoder_grads,
                     nn::Gradients* decoder_grads) {
  const Eigen::Index n = model.n();
  const Eigen::Index batch = x.cols();
  if (batch == 0) throw DomainError("batch_loss: empty batch");
  if (noise.rows() != n || noise.cols() != batch) throw DomainError("batch_loss: noise shape mismatch");
  const bool with_grads = encoder_grads != nullptr && decoder_grads != nullptr;

  nn::Tape enc_tape, dec_tape;
  const Matrix enc_out = with_grads ? nn::forward(model.encoder, x, enc_tape) : nn::forward(model.encoder, x);
  const Matrix mu = enc_out.topRows(n);
  const Matrix raw_lv = enc_out.bottomRows(n);
  const Matrix lv = raw_lv.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  const Matrix sigma = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(noise);
  const Matrix logits = with_grads ? nn::forward(model.decoder, z, dec_tape) : nn::forward(model.decoder, z);

  ElboTerms t;
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double l = logits(i, j);
      t.recon += softplus(l) - x(i, j) * l;
    }
    for (Eigen::Index i = 0; i < n; ++i) t.kl += kl_single(mu(i, j), lv(i, j));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  t.recon *= inv_b;
  t.kl *= inv_b;
  const double beta = model.config.beta;
  t.total = t.recon + beta * t.kl;
  if (!std::isfinite(t.total)) throw NumericError("batch_loss: non-finite loss");
  if (!with_grads) return t;

  Matrix d_logits = logits.unaryExpr([](double v) { return sigmoid(v); }) - x;
  d_logits *= inv_b;
  const Matrix d_z = nn::backward(model.decoder, dec_tape, d_logits, *decoder_grads);

  Matrix d_enc(2 * n, batch);
  d_enc.topRows(n) = d_z + (beta * inv_b) * mu;
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double raw = raw_lv(i, j);
      if (raw < kLogVarMin || raw > kLogVarMax) {
        d_enc(n + i, j) = 0.0;
        continue;
      }
      const double s = sigma(i, j);
      d_enc(n + i, j) = d_z(i, j) * 0.5 * s * noise(i, j) + beta * inv_b * 0.5 * (s * s - 1.0);
    }
  }
  nn::backward(model.encoder, enc_tape, d_enc, *encoder_grads);
  return t;
}

TrainedModel train(const BetaVaeConfig& config, std::span<const Frame> frames, const EpochCallback& on_epoch) {
  TrainedModel model = init_model(config);
  if (frames.empty()) throw DomainError("train: empty training set");
  const Matrix data = frames_to_matrix(frames);
  if (data.rows() != config.pixels()) {
    throw DomainError("train: frames have " + std::to_string(data.rows()) + " pixels, architecture expects " +
                      std::to_string(config.pixels()));
  }

  auto enc_adam = nn::AdamState::for_network(model.encoder);
  auto dec_adam = nn::AdamState::for_network(model.decoder);
  auto enc_grads = nn::Gradients::zeros_like(model.encoder);
  auto dec_grads = nn::Gradients::zeros_like(model.decoder);

  const auto count = static_cast<std::size_t>(data.cols());
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    Rng shuffler(hash_combine(config.seed, hash_combine(0x65706f6368ULL, static_cast<std::uint64_t>(epoch))));
    shuffler.shuffle(order);

    ElboTerms sum;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t len = std::min(count - start, static_cast<std::size_t>(config.batch_size));
      Matrix x(data.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) x.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(order[start + j]));
      // Frozen noise: keyed by (seed, epoch, batch).
      Rng noise_rng(hash_combine(hash_combine(config.seed, static_cast<std::uint64_t>(epoch)), 0x6e6fULL + batch_index));
      Matrix noise(config.n, static_cast<Eigen::Index>(len));
      for (Eigen::Index j = 0; j < noise.cols(); ++j)
        for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = noise_rng.normal();

      enc_grads.set_zero();
      dec_grads.set_zero();
      ElboTerms t;
      try {
        t = batch_loss(model, x, noise, &enc_grads, &dec_grads);
        nn::adam_step(model.encoder, enc_grads, enc_adam, lr);
        nn::adam_step(model.decoder, dec_grads, dec_adam, lr);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      const double w = static_cast<double>(len);
      sum.total += t.total * w;
      sum.recon += t.recon * w;
      sum.kl += t.kl * w;
    }
    ElboTerms mean{sum.total / count, sum.recon / count, sum.kl / count};
    model.log.epoch_loss.push_back(mean.total);
    model.log.epoch_recon.push_back(mean.recon);
    model.log.epoch_kl.push_back(mean.kl);
    model.log.epoch_lr.push_back(lr);
    if (on_epoch) on_epoch(epoch, mean, lr);

    const bool improved = std::isinf(best) || mean.total < best - config.min_delta * std::abs(best);
    if (improved) {
      best = mean.total;
      stale = 0;
    } else if (config.early_stop_patience > 0 && ++stale >= config.early_stop_patience) {
      model.log.early_stopped = epoch < config.epochs;
      break;
    }
  }
  return model;
}

LatentStats encode(const TrainedModel& model, const Frame& frame) {
  check_frame(model, frame);
  const Matrix x = Eigen::Map<const Vector>(frame.pixels.data(), static_cast<Eigen::Index>(frame.pixels.size()));
  return split_output(nn::forward(model.encoder, x).col(0), model.n());
}

std::vector<LatentStats> encode_all(const TrainedModel& model, std::span<const Frame> frames) {
  std::vector<LatentStats> out;
  out.reserve(frames.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const auto chunk = frames.subspan(start, std::min(kChunk, frames.size() - start));
    for (const auto& f : chunk) check_frame(model, f);
    const Matrix enc = nn::forward(model.encoder, frames_to_matrix(chunk));
    for (Eigen::Index j = 0; j < enc.cols(); ++j) out.push_back(split_output(enc.col(j), model.n()));
  }
  return out;
}

LatentStats encode_latents(const TrainedModel& model, const Frame& frame, std::span<const int> latents) {
  check_frame(model, frame);
  std::vector<int> rows;
  rows.reserve(2 * latents.size());
  for (int l : latents) {
    if (l < 0 || l >= model.n()) throw DomainError("latent index " + std::to_string(l) + " out of range");
    rows.push_back(l);
  }
  for (int l : latents) rows.push_back(model.n() + l);
  const Vector x = Eigen::Map<const Vector>(frame.pixels.data(), static_cast<Eigen::Index>(frame.pixels.size()));
  return split_output(nn::forward_rows(model.encoder, x, rows), static_cast<Eigen::Index>(latents.size()));
}

Vector decode(const TrainedModel& model, const Vector& z) {
  if (z.size() != model.n()) throw DomainError("decode: latent vector has wrong length");
  return nn::forward(model.decoder, Matrix(z)).col(0).unaryExpr([](double v) { return sigmoid(v); });
}

namespace {
constexpr std::uint32_t kModelVersion = 1;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  const auto& c = model.config;
  binio::Writer w;
  w.bytes("BVMD");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(c.n));
  w.f64(c.beta);
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.f64(c.lr_phase1);
  w.f64(c.lr_phase2);
  w.f64(c.phase1_fraction);
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.u32(static_cast<std::uint32_t>(c.early_stop_patience));
  w.f64(c.min_delta);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(c.frame_width));
  w.u32(static_cast<std::uint32_t>(c.frame_height));
  w.u32(static_cast<std::uint32_t>(c.hidden.size()));
  for (int h : c.hidden) w.u32(static_cast<std::uint32_t>(h));
  nn::write(w, model.encoder);
  nn::write(w, model.decoder);
  const auto& log = model.log;
  w.u32(static_cast<std::uint32_t>(log.epoch_loss.size()));
  w.f64s(log.epoch_loss);
  w.f64s(log.epoch_recon);
  w.f64s(log.epoch_kl);
  w.f64s(log.epoch_lr);
  w.u32(log.early_stopped ? 1 : 0);
  w.save_with_checksum(path);
}

TrainedModel load_model(const std::filesystem::path& path) {
  auto r = binio::Reader::open_checked(path);
  r.expect_magic("BVMD");
  if (const auto v = r.u32(); v != kModelVersion) {
    throw FormatError(path.string() + ": unsupported model version " + std::to_string(v));
  }
  TrainedModel m;
  auto& c = m.config;
  c.n = static_cast<int>(r.u32());
  c.beta = r.f64();
  c.epochs = static_cast<int>(r.u32());
  c.lr_phase1 = r.f64();
  c.lr_phase2 = r.f64();
  c.phase1_fraction = r.f64();
  c.batch_size = static_cast<int>(r.u32());
  c.early_stop_patience = static_cast<int>(r.u32());
  c.min_delta = r.f64();
  c.seed = r.u64();
  c.frame_width = static_cast<int>(r.u32());
  c.frame_height = static_cast<int>(r.u32());
  c.hidden.resize(r.u32());
  for (int& h : c.hidden) h = static_cast<int>(r.u32());
  m.encoder = nn::read(r);
  m.decoder = nn::read(r);
  const auto epochs = r.u32();
  m.log.epoch_loss = r.f64s(epochs);
  m.log.epoch_recon = r.f64s(epochs);
  m.log.epoch_kl = r.f64s(epochs);
  m.log.epoch_lr = r.f64s(epochs);
  m.log.early_stopped = r.u32() != 0;
  r.expect_end();
  if (m.encoder.input_dim() != c.pixels() || m.encoder.output_dim() != 2 * c.n || m.decoder.input_dim() != c.n ||
      m.decoder.output_dim() != c.pixels()) {
    throw FormatError(path.string() + ": network shapes disagree with the config record");
  }
  return m;
}

}  // namespace bvood::bvae
