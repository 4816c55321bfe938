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

#include "bvood/monitor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "bvood/binio.hpp"
#include "bvood/error.hpp"

namespace bvood::monitor {

namespace {

constexpr std::uint32_t kCalibrationVersion = 1;

void check_latents(const Channel& c, int n) {
  if (c.latents.empty()) throw DomainError("channel " + c.name + " has no latents");
  for (int l : c.latents)
    if (l < 0 || l >= n) throw DomainError("channel " + c.name + ": latent " + std::to_string(l) + " out of range");
}

void check_cusum(const std::string& who, const CusumParams& p) {
  if (!std::isfinite(p.omega) || !std::isfinite(p.tau) || p.omega <= 0.0 || p.tau <= 0.0)
    throw DomainError(who + ": CUSUM needs omega > 0 and tau > 0");
}

// Positions of each channel's latents inside the encoded subset.
struct Plan {
  std::vector<int> encoded;
  std::vector<std::vector<int>> positions;
};

Plan make_plan(const DetectorProfile& profile) {
  Plan plan;
  plan.encoded = profile.encoded_latents();
  for (const Channel* c : profile.channels()) {
    std::vector<int> pos;
    pos.reserve(c->latents.size());
    for (int l : c->latents) {
      auto it = std::lower_bound(plan.encoded.begin(), plan.encoded.end(), l);
      pos.push_back(static_cast<int>(it - plan.encoded.begin()));
    }
    plan.positions.push_back(std::move(pos));
  }
  return plan;
}

void ensure_state(const DetectorProfile& profile, StreamState& state) {
  if (state.channels.size() != 1 + profile.reasoners.size())
    throw DomainError("stream state does not match detector profile");
}

std::vector<ChannelOutput> channel_outputs(const DetectorProfile& profile, StreamState& state,
                                           const bvae::LatentStats& stats, const Plan& plan) {
  const auto channels = profile.channels();
  std::vector<ChannelOutput> out;
  out.reserve(channels.size());
  const auto window = static_cast<std::size_t>(profile.window);
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const Channel& c = *channels[i];
    ChannelState& cs = state.channels[i];
    ChannelOutput o;
    o.name = c.name;
    o.alpha = nonconformity(stats, plan.positions[i]);
    o.p = icp_pvalue(c.calibration, o.alpha);
    cs.p_window.push_back(o.p);
    if (cs.p_window.size() > window) cs.p_window.pop_front();
    const std::vector<double> ps(cs.p_window.begin(), cs.p_window.end());
    o.log_martingale = log_martingale(ps);
    cs.cusum = cusum_step(cs.cusum, o.log_martingale, c.cusum.omega);
    o.cusum = cs.cusum;
    o.flag = cs.cusum > c.cusum.tau;
    out.push_back(std::move(o));
  }
  return out;
}

ChangePointOutput change_point_from(const DetectorProfile& profile, StreamState& state, double alpha) {
  const auto window = static_cast<std::size_t>(profile.window);
  state.alpha_window.push_back(alpha);
  if (state.alpha_window.size() > window) state.alpha_window.pop_front();
  ChangePointOutput o;
  double sum = 0.0;
  for (double a : state.alpha_window) sum += a;
  o.moving_average = sum / static_cast<double>(state.alpha_window.size());
  state.change_point_cusum = cusum_step(state.change_point_cusum, o.moving_average, profile.change_point.omega);
  o.cusum = state.change_point_cusum;
  o.flag = o.cusum > profile.change_point.tau;
  return o;
}

}  // namespace

bool DetectorProfile::calibrated() const {
  if (detector.calibration.empty()) return false;
  return std::all_of(reasoners.begin(), reasoners.end(), [](const Channel& c) { return !c.calibration.empty(); });
}

void DetectorProfile::validate() const {
  if (!model) throw DependencyError("detector profile has no model");
  if (window < 1) throw DomainError("window M must be >= 1");
  const int n = model->config.n;
  check_latents(detector, n);
  check_cusum(detector.name, detector.cusum);
  for (const auto& r : reasoners) {
    check_latents(r, n);
    check_cusum(r.name, r.cusum);
  }
  check_cusum("change point", change_point);
  if (!calibrated()) throw DependencyError("detector profile is not calibrated");
}

std::vector<int> DetectorProfile::encoded_latents() const {
  std::set<int> all(detector.latents.begin(), detector.latents.end());
  for (const auto& r : reasoners) all.insert(r.latents.begin(), r.latents.end());
  return {all.begin(), all.end()};
}

std::vector<const Channel*> DetectorProfile::channels() const {
  std::vector<const Channel*> out{&detector};
  for (const auto& r : reasoners) out.push_back(&r);
  return out;
}

DetectorProfile make_profile(std::shared_ptr<const bvae::TrainedModel> model, const mapping::LatentSelection& sel,
                             int window, CusumParams detector, CusumParams reasoner, CusumParams change_point) {
  DetectorProfile p;
  p.model = std::move(model);
  p.window = window;
  p.change_point = change_point;
  p.detector = Channel{"detector", sel.detector, {}, detector};
  for (const auto& part : sel.partitions)
    p.reasoners.push_back(Channel{"reasoner:" + std::string(feature_name(part.feature)), part.reasoner, {}, reasoner});
  return p;
}

double nonconformity(const bvae::LatentStats& stats, std::span<const int> latents) {
  if (latents.empty()) throw DomainError("nonconformity over an empty latent set");
  double sum = 0.0;
  for (int l : latents) {
    if (l < 0 || l >= stats.n()) throw DomainError("latent index out of range");
    sum += bvae::kl_single(stats.mu[l], stats.log_var[l]);
  }
  return sum / static_cast<double>(latents.size());
}

double nonconformity(const bvae::TrainedModel& model, std::span<const int> latents, const Frame& frame) {
  const auto stats = bvae::encode_latents(model, frame, latents);
  std::vector<int> idx(latents.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return nonconformity(stats, idx);
}

std::vector<double> calibrate(const bvae::TrainedModel& model, std::span<const int> latents,
                              std::span<const Frame> frames) {
  if (frames.empty()) throw DomainError("calibration set is empty");
  std::vector<double> scores;
  scores.reserve(frames.size());
  for (const auto& f : frames) scores.push_back(nonconformity(model, latents, f));
  std::sort(scores.begin(), scores.end());
  return scores;
}

void calibrate(DetectorProfile& profile, std::span<const Frame> frames) {
  if (!profile.model) throw DependencyError("detector profile has no model");
  if (frames.empty()) throw DomainError("calibration set is empty");
  const Plan plan = make_plan(profile);
  std::vector<std::vector<double>> scores(plan.positions.size());
  for (const auto& f : frames) {
    const auto stats = bvae::encode_latents(*profile.model, f, plan.encoded);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i].push_back(nonconformity(stats, plan.positions[i]));
  }
  for (auto& s : scores) std::sort(s.begin(), s.end());
  profile.detector.calibration = std::move(scores[0]);
  for (std::size_t i = 0; i < profile.reasoners.size(); ++i)
    profile.reasoners[i].calibration = std::move(scores[i + 1]);
}

double icp_pvalue(std::span<const double> sorted_scores, double alpha) {
  if (sorted_scores.empty()) throw DependencyError("empty calibration set");
  if (std::isnan(alpha)) throw NumericError("nonconformity is NaN");
  const auto it = std::lower_bound(sorted_scores.begin(), sorted_scores.end(), alpha);
  const auto ge = static_cast<double>(sorted_scores.end() - it);
  return (ge + 1.0) / (static_cast<double>(sorted_scores.size()) + 1.0);
}

double log_martingale(std::span<const double> p_window, int subintervals) {
  if (p_window.empty()) throw DomainError("martingale window is empty");
  if (subintervals < 2 || subintervals % 2 != 0) throw DomainError("Simpson rule needs an even subinterval count");
  double s = 0.0;
  for (double p : p_window) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("p-value outside (0,1]");
    s += std::log(p);
  }
  const double w = static_cast<double>(p_window.size());
  const double h = 1.0 / subintervals;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(subintervals));
  double peak = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= subintervals; ++k) {
    const double eps = k * h;
    const double coef = (k == subintervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    const double t = std::log(coef) + w * std::log(eps) + (eps - 1.0) * s;
    terms.push_back(t);
    peak = std::max(peak, t);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - peak);
  const double result = peak + std::log(acc) + std::log(h / 3.0);
  return std::clamp(result, -kLogMartingaleClamp, kLogMartingaleClamp);
}

double cusum_step(double s, double x, double omega) { return std::max(0.0, s + x - omega); }

StreamState StreamState::for_profile(const DetectorProfile& profile) {
  StreamState s;
  s.channels.resize(1 + profile.reasoners.size());
  return s;
}

void StreamState::reset() {
  for (auto& c : channels) c = ChannelState{};
  alpha_window.clear();
  change_point_cusum = 0.0;
  frame = 0;
}

const ChannelOutput* DetectionOutput::channel(std::string_view name) const {
  for (const auto& c : channels)
    if (c.name == name) return &c;
  return nullptr;
}

DetectionOutput detect_step(const DetectorProfile& profile, StreamState& state, const Frame& frame) {
  ensure_state(profile, state);
  const Plan plan = make_plan(profile);
  const auto stats = bvae::encode_latents(*profile.model, frame, plan.encoded);
  DetectionOutput out;
  out.frame = state.frame++;
  out.warmup = state.frame < static_cast<std::size_t>(profile.window);
  out.channels = channel_outputs(profile, state, stats, plan);
  return out;
}

ChangePointOutput change_point_step(const DetectorProfile& profile, StreamState& state, const Frame& frame) {
  ensure_state(profile, state);
  const double alpha = nonconformity(*profile.model, profile.detector.latents, frame);
  return change_point_from(profile, state, alpha);
}

DetectionOutput step(const DetectorProfile& profile, StreamState& state, const Frame& frame) {
  ensure_state(profile, state);
  const Plan plan = make_plan(profile);
  const auto stats = bvae::encode_latents(*profile.model, frame, plan.encoded);
  DetectionOutput out;
  out.frame = state.frame++;
  out.warmup = state.frame < static_cast<std::size_t>(profile.window);
  out.channels = channel_outputs(profile, state, stats, plan);
  out.change_point = change_point_from(profile, state, out.channels.front().alpha);
  return out;
}

void save_calibration(const std::filesystem::path& path, const DetectorProfile& profile) {
  if (!profile.calibrated()) throw DependencyError("detector profile is not calibrated");
  binio::Writer w;
  w.bytes("BVCL");
  w.u32(kCalibrationVersion);
  const auto channels = profile.channels();
  w.u32(static_cast<std::uint32_t>(channels.size()));
  for (const Channel* c : channels) {
    w.str(c->name);
    w.u32(static_cast<std::uint32_t>(c->latents.size()));
    for (int l : c->latents) w.u32(static_cast<std::uint32_t>(l));
    w.u64(c->calibration.size());
    w.f64s(c->calibration);
  }
  w.save_with_checksum(path);
}

void load_calibration(const std::filesystem::path& path, DetectorProfile& profile) {
  auto r = binio::Reader::open_checked(path);
  r.expect_magic("BVCL");
  if (r.u32() != kCalibrationVersion) throw FormatError(r.what() + ": unsupported calibration version");
  std::vector<Channel*> channels{&profile.detector};
  for (auto& c : profile.reasoners) channels.push_back(&c);
  if (r.u32() != channels.size()) throw FormatError(r.what() + ": channel count mismatch");
  std::vector<std::vector<double>> loaded;
  for (Channel* c : channels) {
    if (r.str() != c->name) throw FormatError(r.what() + ": channel name mismatch");
    const std::uint32_t k = r.u32();
    if (k != c->latents.size()) throw FormatError(r.what() + ": latent set mismatch for " + c->name);
    for (int l : c->latents)
      if (r.u32() != static_cast<std::uint32_t>(l)) throw FormatError(r.what() + ": latent set mismatch for " + c->name);
    const std::uint64_t count = r.u64();
    if (count == 0) throw FormatError(r.what() + ": empty calibration scores");
    auto scores = r.f64s(count);
    if (!std::is_sorted(scores.begin(), scores.end())) throw FormatError(r.what() + ": scores not sorted");
    loaded.push_back(std::move(scores));
  }
  r.expect_end();
  for (std::size_t i = 0; i < channels.size(); ++i) channels[i]->calibration = std::move(loaded[i]);
}

void save_layout(const std::filesystem::path& path, const DetectorProfile& profile) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const Channel* c : profile.channels()) {
    out << "channel " << c->name;
    for (int l : c->latents) out << ' ' << l;
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void load_layout(const std::filesystem::path& path, DetectorProfile& profile) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing artifact: " + path.string());
  std::vector<Channel> channels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kw, name;
    ls >> kw >> name;
    if (kw != "channel" || name.empty()) throw ParseError(lineno, "expected 'channel <name> <latents>'");
    Channel c;
    c.name = name;
    int l = 0;
    while (ls >> l) c.latents.push_back(l);
    if (!ls.eof()) throw ParseError(lineno, "bad latent index");
    if (c.latents.empty()) throw ParseError(lineno, "channel without latents");
    channels.push_back(std::move(c));
  }
  if (channels.empty() || channels.front().name != "detector")
    throw FormatError(path.string() + ": first channel must be the detector");
  const CusumParams det = profile.detector.cusum;
  const CusumParams rea = profile.reasoners.empty() ? profile.detector.cusum : profile.reasoners.front().cusum;
  profile.detector = std::move(channels.front());
  profile.detector.cusum = det;
  profile.reasoners.clear();
  for (std::size_t i = 1; i < channels.size(); ++i) {
    channels[i].cusum = rea;
    profile.reasoners.push_back(std::move(channels[i]));
  }
}

Metrics evaluate(const std::vector<RunRecord>& runs) {
  Metrics m;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_feature;  // detected, total
  double latency_sum = 0.0;
  std::size_t detected = 0;
  for (const auto& run : runs) {
    std::vector<bool> ood(run.flags.size(), false);
    for (const auto& iv : run.truth) {
      if (iv.start >= iv.end || iv.end > run.flags.size())
        throw DomainError("scene " + run.scene + ": OOD interval out of range");
      for (std::size_t i = iv.start; i < iv.end; ++i) ood[i] = true;
      std::size_t hits = 0;
      std::optional<std::size_t> first;
      for (std::size_t i = iv.start; i < iv.end; ++i)
        if (run.flags[i]) {
          ++hits;
          if (!first) first = i;
        }
      if (first) {
        latency_sum += static_cast<double>(*first - iv.start);
        ++detected;
      } else {
        ++m.missed_intervals;
      }
      if (iv.features.size() == 1) {
        auto& pf = per_feature[iv.features.front()];
        pf.first += hits;
        pf.second += iv.end - iv.start;
      }
    }
    for (std::size_t i = 0; i < run.flags.size(); ++i) {
      if (run.flags[i] && ood[i]) ++m.tp;
      else if (run.flags[i]) ++m.fp;
      else if (ood[i]) ++m.fn;
      else ++m.tn;
    }
  }
  const auto tp = static_cast<double>(m.tp);
  if (m.tp + m.fp > 0) m.precision = tp / static_cast<double>(m.tp + m.fp);
  else m.precision = m.fn == 0 ? 1.0 : 0.0;
  m.recall = m.tp + m.fn > 0 ? tp / static_cast<double>(m.tp + m.fn) : 1.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  for (const auto& [f, pf] : per_feature) {
    const double r = static_cast<double>(pf.first) / static_cast<double>(pf.second);
    m.feature_recall[f] = r;
    m.min_sensitivity = m.min_sensitivity ? std::min(*m.min_sensitivity, r) : r;
  }
  if (detected > 0) m.mean_latency = latency_sum / static_cast<double>(detected);
  return m;
}

std::vector<OodInterval> derive_truth(const std::vector<Scene>& training, const Scene& scene) {
  if (training.empty()) throw DomainError("no training scenes for ground truth");
  constexpr double kTol = 1e-9;
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  std::set<int> segments;
  for (const auto& s : training)
    for (const auto& l : s.labels) {
      for (int f = 0; f < 3; ++f) {
        const double v = l.get(static_cast<Feature>(f));
        lo[f] = std::min(lo[f], v);
        hi[f] = std::max(hi[f], v);
      }
      segments.insert(l.segment_id);
    }
  std::vector<OodInterval> out;
  for (std::size_t i = 0; i < scene.labels.size(); ++i) {
    const auto& l = scene.labels[i];
    std::vector<std::string> cause;
    for (int f = 0; f < 3; ++f) {
      const double v = l.get(static_cast<Feature>(f));
      if (v < lo[f] - kTol || v > hi[f] + kTol) cause.emplace_back(feature_name(static_cast<Feature>(f)));
    }
    if (!segments.count(l.segment_id)) cause.emplace_back(feature_name(Feature::Segment));
    if (cause.empty()) continue;
    if (!out.empty() && out.back().end == i && out.back().features == cause) {
      out.back().end = i + 1;
    } else {
      out.push_back(OodInterval{i, i + 1, std::move(cause)});
    }
  }
  return out;
}

}  // namespace bvood::monitor
