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

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bvood/bvae.hpp"
#include "bvood/mapping.hpp"

namespace bvood::monitor {

inline constexpr double kLogMartingaleClamp = 300.0;
inline constexpr int kMartingaleSubintervals = 1000;

struct CusumParams {
  double omega = 1.0;  // drift allowance subtracted every step
  double tau = 1.0;    // alarm threshold
};

/// One monitored quantity: the average KL over a latent set, turned into
/// conformal p-values against its calibration scores.
struct Channel {
  std::string name;                  // "detector" or "reasoner:<feature>"
  std::vector<int> latents;
  std::vector<double> calibration;   // sorted nonconformity scores
  CusumParams cusum;
};

struct DetectorProfile {
  std::shared_ptr<const bvae::TrainedModel> model;
  Channel detector;
  std::vector<Channel> reasoners;
  int window = 20;  // M
  CusumParams change_point{0.75, 1.2};

  bool calibrated() const;
  /// Throws DependencyError when uncalibrated, DomainError on bad parameters.
  void validate() const;
  /// Sorted union of every channel's latents; the only encoder outputs a
  /// runtime step needs.
  std::vector<int> encoded_latents() const;
  std::vector<const Channel*> channels() const;
};

/// Builds the uncalibrated channel layout from a latent selection.
DetectorProfile make_profile(std::shared_ptr<const bvae::TrainedModel> model, const mapping::LatentSelection& sel,
                             int window, CusumParams detector, CusumParams reasoner, CusumParams change_point);

/// Mean KL-to-prior over `latents`, indexing into `stats`.
double nonconformity(const bvae::LatentStats& stats, std::span<const int> latents);
double nonconformity(const bvae::TrainedModel& model, std::span<const int> latents, const Frame& frame);

/// Sorted nonconformity scores of the calibration frames.
std::vector<double> calibrate(const bvae::TrainedModel& model, std::span<const int> latents,
                              std::span<const Frame> frames);
/// Fills every channel's calibration scores (one encoder pass per frame).
void calibrate(DetectorProfile& profile, std::span<const Frame> frames);

/// Smoothed conformal p-value (#{a in C : a >= alpha} + 1) / (|C| + 1).
double icp_pvalue(std::span<const double> sorted_scores, double alpha);

/// log of the simple mixture martingale over a window of p-values,
/// log int_0^1 prod_i eps * p_i^(eps-1) d eps, by composite Simpson in log
/// space. Clamped to +-kLogMartingaleClamp. Throws DomainError for p outside
/// (0,1] or an empty window.
double log_martingale(std::span<const double> p_window, int subintervals = kMartingaleSubintervals);

/// S' = max(0, S + x - omega)
double cusum_step(double s, double x, double omega);

struct ChannelState {
  std::deque<double> p_window;
  double cusum = 0.0;
};

/// Per-stream mutable state. Exclusive to one stream.
struct StreamState {
  std::vector<ChannelState> channels;  // detector first, then reasoners
  std::deque<double> alpha_window;     // detector nonconformity, for change points
  double change_point_cusum = 0.0;
  std::size_t frame = 0;

  static StreamState for_profile(const DetectorProfile& profile);
  /// Clears windows and CUSUM accumulators (scene boundary).
  void reset();
};

struct ChannelOutput {
  std::string name;
  double alpha = 0.0;
  double p = 1.0;
  double log_martingale = 0.0;
  double cusum = 0.0;
  bool flag = false;
};

struct ChangePointOutput {
  double moving_average = 0.0;  // A_KL
  double cusum = 0.0;
  bool flag = false;
};

struct DetectionOutput {
  std::size_t frame = 0;
  bool warmup = false;  // fewer than M frames seen
  std::vector<ChannelOutput> channels;
  ChangePointOutput change_point;

  const ChannelOutput* channel(std::string_view name) const;
};

/// Detector and reasoner channels for one frame; advances the frame counter.
DetectionOutput detect_step(const DetectorProfile& profile, StreamState& state, const Frame& frame);
/// Moving-average CUSUM on the detector nonconformity.
ChangePointOutput change_point_step(const DetectorProfile& profile, StreamState& state, const Frame& frame);
/// Both of the above from a single encoder pass.
DetectionOutput step(const DetectorProfile& profile, StreamState& state, const Frame& frame);

/// Calibration file: "BVCL", version, channel count, then per channel its
/// name, latents, score count and sorted scores; checksummed.
void save_calibration(const std::filesystem::path& path, const DetectorProfile& profile);
/// Loads scores into the matching channels of `profile` (matched by name and
/// latents). Throws FormatError on any mismatch.
void load_calibration(const std::filesystem::path& path, DetectorProfile& profile);

/// Channel layout text file: one "channel <name> <latent>..." line each.
void save_layout(const std::filesystem::path& path, const DetectorProfile& profile);
void load_layout(const std::filesystem::path& path, DetectorProfile& profile);

// ---------------------------------------------------------------- metrics

/// Half-open frame interval [start, end) that is out of distribution because
/// of `features`.
struct OodInterval {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<std::string> features;
};

struct RunRecord {
  std::string scene;
  std::vector<bool> flags;  // detector flag per frame
  std::vector<OodInterval> truth;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Smallest recall over features that cause OOD intervals on their own;
  /// nullopt when no single-feature interval exists.
  std::optional<double> min_sensitivity;
  std::map<std::string, double> feature_recall;
  /// Mean frames from interval start to the first flag, over detected
  /// intervals; nullopt when none was detected.
  std::optional<double> mean_latency;
  std::size_t missed_intervals = 0;
};

Metrics evaluate(const std::vector<RunRecord>& runs);

/// Ground truth from feature ranges: a frame is OOD in every continuous
/// feature outside the training range and in segment_id when the id never
/// occurs in training. Consecutive frames with the same cause form one
/// interval.
std::vector<OodInterval> derive_truth(const std::vector<Scene>& training, const Scene& scene);

}  // namespace bvood::monitor
