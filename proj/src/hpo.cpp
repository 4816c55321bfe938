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

#include "bvood/hpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "bvood/dataset.hpp"
#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood::hpo {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Bo: return "bo";
    case Mode::Grid: return "grid";
    case Mode::Random: return "random";
  }
  return "?";
}

Mode mode_from_name(std::string_view name) {
  if (name == "bo") return Mode::Bo;
  if (name == "grid") return Mode::Grid;
  if (name == "random") return Mode::Random;
  throw DomainError("unknown search mode '" + std::string(name) + "' (expected bo, grid or random)");
}

namespace {

template <typename T>
void check_axis(const std::vector<T>& axis, const char* name) {
  if (axis.empty()) throw DomainError(std::string("search space: ") + name + " candidates are empty");
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (!(axis[i - 1] < axis[i])) {
      throw DomainError(std::string("search space: ") + name + " candidates must be sorted and duplicate-free");
    }
  }
}

template <typename T>
double unit(const std::vector<T>& axis, T v) {
  const double lo = static_cast<double>(axis.front()), hi = static_cast<double>(axis.back());
  return hi > lo ? (static_cast<double>(v) - lo) / (hi - lo) : 0.0;
}

}  // namespace

void SearchSpace::validate() const {
  check_axis(n, "n");
  check_axis(beta, "beta");
  if (n.front() < 1) throw DomainError("search space: n must be >= 1");
  if (beta.front() < 0.0) throw DomainError("search space: beta must be >= 0");
}

std::pair<int, double> SearchSpace::point(std::size_t i) const { return {n[i / beta.size()], beta[i % beta.size()]}; }

std::array<double, 2> SearchSpace::normalized(std::size_t i) const {
  const auto [pn, pb] = point(i);
  return {unit(n, pn), unit(beta, pb)};
}

GaussianProcess::GaussianProcess(std::vector<GpObservation> observations, const GpParams& params)
    : obs_(std::move(observations)), params_(params) {
  if (obs_.empty()) throw DomainError("gp_posterior: need at least one observation");
  const auto m = static_cast<Eigen::Index>(obs_.size());
  double sum = 0.0;
  for (const auto& o : obs_) sum += o.y;
  offset_ = sum / static_cast<double>(m);
  double ss = 0.0;
  for (const auto& o : obs_) ss += (o.y - offset_) * (o.y - offset_);
  signal_var_ = ss / static_cast<double>(m);
  if (!(signal_var_ > 0.0)) signal_var_ = 1.0;

  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) k(i, j) = kernel(obs_[i].x, obs_[j].x);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) y(i) = obs_[i].y - offset_;

  double jitter = params_.jitter;
  for (int attempt = 0; attempt <= params_.max_jitter_doublings; ++attempt, jitter *= 2.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter * signal_var_;
    llt_.compute(kj);
    if (llt_.info() == Eigen::Success) {
      alpha_ = llt_.solve(y);
      return;
    }
  }
  throw NumericError("gp_posterior: kernel matrix not positive definite after jitter escalation");
}

double GaussianProcess::kernel(const std::array<double, 2>& a, const std::array<double, 2>& b) const {
  const double l2 = params_.length_scale * params_.length_scale;
  const double d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
  return signal_var_ * std::exp(-0.5 * d2 / l2);
}

Posterior GaussianProcess::predict(const std::array<double, 2>& x) const {
  const auto m = static_cast<Eigen::Index>(obs_.size());
  Eigen::VectorXd ks(m);
  for (Eigen::Index i = 0; i < m; ++i) ks(i) = kernel(obs_[i].x, x);
  const double mean = offset_ + ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var = std::max(0.0, signal_var_ - v.squaredNorm());
  return {mean, std::sqrt(var)};
}

Posterior gp_posterior(std::span<const GpObservation> observations, const std::array<double, 2>& candidate,
                       const GpParams& params) {
  return GaussianProcess({observations.begin(), observations.end()}, params).predict(candidate);
}

double expected_improvement(double mean, double std, double best, double xi) {
  const double surplus = mean - best - xi;
  if (!(std > 0.0)) return std::max(0.0, surplus);
  const double z = surplus / std;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, surplus * cdf + std * pdf);
}

namespace {

class Searcher {
 public:
  Searcher(const SearchSpace& space, const Objective& objective, const SearchParams& params)
      : space_(space), objective_(objective), params_(params), visited_(space.size(), false) {}

  void evaluate(std::size_t index) {
    const auto [n, beta] = space_.point(index);
    const auto start = std::chrono::steady_clock::now();
    double mig;
    try {
      mig = objective_(n, beta);
      if (std::isnan(mig)) mig = -std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      mig = -std::numeric_limits<double>::infinity();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    visited_[index] = true;
    indices_.push_back(index);
    result_.explored.append({static_cast<int>(result_.explored.size()) + 1, params_.mode, n, beta, mig, seconds});
  }

  /// Index into trials of the best finite trial, or -1.
  long incumbent() const {
    long best = -1;
    const auto& t = result_.explored.trials();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::isinf(t[i].mig)) continue;
      if (best < 0 || t[i].mig > t[static_cast<std::size_t>(best)].mig) best = static_cast<long>(i);
    }
    return best;
  }

  std::vector<std::size_t> unvisited() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < visited_.size(); ++i)
      if (!visited_[i]) out.push_back(i);
    return out;
  }

  std::size_t pick_random(Rng& rng) const {
    const auto open = unvisited();
    return open[static_cast<std::size_t>(rng.below(open.size()))];
  }

  struct Proposal {
    std::size_t next = 0;           // best unvisited point
    bool incumbent_selected = false;  // acquisition argmax over the whole grid is the incumbent
  };

  Proposal pick_ei() const {
    std::vector<GpObservation> obs;
    const auto& t = result_.explored.trials();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isinf(t[i].mig)) obs.push_back({space_.normalized(indices_[i]), t[i].mig});
    }
    const auto open = unvisited();
    if (obs.empty()) return {open.front(), false};
    const GaussianProcess gp(std::move(obs), params_.gp);
    const auto inc = static_cast<std::size_t>(incumbent());
    const double best = t[inc].mig;
    Proposal out{open.front(), false};
    double open_ei = -1.0, top_ei = -1.0;
    std::size_t top = 0;
    for (std::size_t i = 0; i < space_.size(); ++i) {
      const auto post = gp.predict(space_.normalized(i));
      const double ei = expected_improvement(post.mean, post.std, best, params_.xi);
      if (ei > top_ei) top_ei = ei, top = i;
      if (!visited_[i] && ei > open_ei) open_ei = ei, out.next = i;
    }
    out.incumbent_selected = top == indices_[inc];
    return out;
  }

  SearchResult finish() {
    const long best = incumbent();
    if (best >= 0) {
      const auto& t = result_.explored.trials()[static_cast<std::size_t>(best)];
      result_.n = t.n;
      result_.beta = t.beta;
      result_.mig = t.mig;
    } else {
      result_.mig = -std::numeric_limits<double>::infinity();
    }
    return std::move(result_);
  }

  std::size_t evaluations() const { return result_.explored.size(); }
  void mark_early_stop() { result_.early_stopped = true; }

 private:
  const SearchSpace& space_;
  const Objective& objective_;
  const SearchParams& params_;
  std::vector<bool> visited_;
  std::vector<std::size_t> indices_;
  SearchResult result_;
};

}  // namespace

SearchResult search(const SearchSpace& space, const Objective& objective, const SearchParams& params) {
  space.validate();
  if (params.budget < 1) throw DomainError("search: budget must be >= 1");
  if (params.mode == Mode::Bo && !(params.init >= 1 && params.init < params.budget)) {
    throw DomainError("search: bo needs 1 <= init < budget");
  }
  Searcher s(space, objective, params);
  Rng rng(params.seed);
  const std::size_t budget = std::min<std::size_t>(static_cast<std::size_t>(params.budget), space.size());

  switch (params.mode) {
    case Mode::Grid:
      for (std::size_t i = 0; i < space.size(); ++i) s.evaluate(i);
      break;
    case Mode::Random:
      while (s.evaluations() < budget) s.evaluate(s.pick_random(rng));
      break;
    case Mode::Bo: {
      while (s.evaluations() < std::min<std::size_t>(static_cast<std::size_t>(params.init), budget)) {
        s.evaluate(s.pick_random(rng));
      }
      int repeats = 0;
      while (s.evaluations() < budget) {
        const auto proposal = s.pick_ei();
        repeats = proposal.incumbent_selected ? repeats + 1 : 0;
        if (params.early_stop > 0 && repeats >= params.early_stop) {
          s.mark_early_stop();
          break;
        }
        s.evaluate(proposal.next);
      }
      break;
    }
  }
  return s.finish();
}

void write_trials(const std::filesystem::path& path, const ExploredList& explored, bool with_timing) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration,mode,n,beta,mig,seconds\n";
  for (const auto& t : explored.trials()) {
    out << t.iteration << ',' << mode_name(t.mode) << ',' << t.n << ',' << dataset::format_double(t.beta) << ','
        << dataset::format_double(t.mig) << ',' << (with_timing ? dataset::format_double(t.seconds) : "NA") << '\n';
  }
}

}  // namespace bvood::hpo
