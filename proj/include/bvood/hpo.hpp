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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace bvood::hpo {

enum class Mode { Bo, Grid, Random };

std::string_view mode_name(Mode m);
Mode mode_from_name(std::string_view name);

/// Cartesian grid of latent counts and beta values.
struct SearchSpace {
  std::vector<int> n;
  std::vector<double> beta;

  /// Throws DomainError unless both axes are non-empty, sorted and
  /// duplicate-free.
  void validate() const;
  std::size_t size() const { return n.size() * beta.size(); }
  /// Point i in declaration order (n outer, beta inner).
  std::pair<int, double> point(std::size_t i) const;
  /// Point i mapped to [0,1]^2 by the axis ranges.
  std::array<double, 2> normalized(std::size_t i) const;
};

struct Trial {
  int iteration = 0;  // 1-based
  Mode mode = Mode::Bo;
  int n = 0;
  double beta = 0.0;
  double mig = 0.0;  // -inf marks a failed objective evaluation
  double seconds = 0.0;
};

/// Append-only record of evaluated points.
class ExploredList {
 public:
  void append(const Trial& t) { trials_.push_back(t); }
  const std::vector<Trial>& trials() const { return trials_; }
  std::size_t size() const { return trials_.size(); }

 private:
  std::vector<Trial> trials_;
};

struct GpParams {
  double length_scale = 0.2;  // per normalized dimension
  double jitter = 1e-6;       // added to the diagonal; doubled on failure
  int max_jitter_doublings = 30;
};

struct GpObservation {
  std::array<double, 2> x;
  double y;
};

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

/// Zero-mean GP regression on mean-centred observations with a
/// squared-exponential kernel. Signal variance is the variance of the
/// observed values (1 when they are all equal).
class GaussianProcess {
 public:
  /// Throws DomainError without observations and NumericError when the
  /// kernel is not positive definite even after jitter escalation.
  GaussianProcess(std::vector<GpObservation> observations, const GpParams& params = {});

  Posterior predict(const std::array<double, 2>& x) const;
  double signal_variance() const { return signal_var_; }
  double offset() const { return offset_; }

 private:
  double kernel(const std::array<double, 2>& a, const std::array<double, 2>& b) const;

  std::vector<GpObservation> obs_;
  GpParams params_;
  double offset_ = 0.0;
  double signal_var_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

Posterior gp_posterior(std::span<const GpObservation> observations, const std::array<double, 2>& candidate,
                       const GpParams& params = {});

/// Expected improvement for maximization with exploration margin xi.
double expected_improvement(double mean, double std, double best, double xi = 0.01);

using Objective = std::function<double(int n, double beta)>;

struct SearchParams {
  Mode mode = Mode::Bo;
  int budget = 20;      // t
  int init = 5;         // k random warm-up trials (bo)
  int early_stop = 3;   // j; 0 disables
  std::uint64_t seed = 1;
  double xi = 0.01;
  GpParams gp;
};

struct SearchResult {
  int n = 0;
  double beta = 0.0;
  double mig = 0.0;
  ExploredList explored;
  bool early_stopped = false;
};

/// bo: k random trials, then the unvisited grid point with the largest EI
/// each iteration; stops once the incumbent best has stayed the same for j
/// consecutive BO iterations. grid: every point in declaration order.
/// random: `budget` points uniformly without replacement.
/// A throwing objective is recorded with mig = -inf.
SearchResult search(const SearchSpace& space, const Objective& objective, const SearchParams& params);

/// trials.csv: iteration,mode,n,beta,mig,seconds. Without timing the seconds
/// column holds "NA" so repeated runs produce identical files.
void write_trials(const std::filesystem::path& path, const ExploredList& explored, bool with_timing);

}  // namespace bvood::hpo
