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

#include "bvood/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "bvood/bvae.hpp"
#include "bvood/dataset.hpp"
#include "bvood/disentangle.hpp"
#include "bvood/error.hpp"
#include "bvood/hpo.hpp"
#include "bvood/mapping.hpp"
#include "bvood/partition.hpp"
#include "bvood/rng.hpp"

namespace bvood::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt_d(double v) { return dataset::format_double(v); }

void require(const fs::path& p, std::string_view producer) {
  if (!fs::exists(p))
    throw DependencyError("missing artifact: " + p.string() + " (run '" + std::string(producer) + "' first)");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DependencyError("missing artifact: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::vector<Scene> load_scenes(const fs::path& dir, std::string_view producer) {
  require(dir / "labels.csv", producer);
  return dataset::load(dir);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TrainingData {
  std::vector<Scene> scenes;  // full training scenes
  DatasetSplit split;
  std::vector<Scene> proper;  // training frames only
};

TrainingData training_data(const config::PipelineConfig& c, const Layout& l) {
  TrainingData d;
  d.scenes = load_scenes(l.train_data(), "generate");
  d.split = scenegen::split_dataset(d.scenes, c.data.split_ratio);
  d.proper = training_part(d.scenes, d.split);
  return d;
}

std::vector<Frame> all_frames(const std::vector<Scene>& scenes) {
  std::vector<Frame> out;
  for (const auto& s : scenes) out.insert(out.end(), s.frames.begin(), s.frames.end());
  return out;
}

std::pair<int, double> chosen_hyperparameters(const config::PipelineConfig& c, const Layout& l) {
  if (!fs::exists(l.best())) return {c.vae.n, c.vae.beta};
  std::istringstream in(read_text(l.best()));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  const auto cells = dataset::split_csv_line(row);
  if (header != "n,beta,mig" || cells.size() != 3) throw FormatError(l.best().string() + ": malformed");
  try {
    return {std::stoi(cells[0]), std::stod(cells[1])};
  } catch (const std::exception&) {
    throw FormatError(l.best().string() + ": malformed");
  }
}

std::shared_ptr<const bvae::TrainedModel> load_model(const Layout& l) {
  require(l.model(), "train");
  return std::make_shared<const bvae::TrainedModel>(bvae::load_model(l.model()));
}

void write_trace_header(std::ostream& out) { out << "frame,channel,alpha,p,log_martingale,cusum,flag\n"; }

void write_trace_rows(std::ostream& out, const monitor::DetectionOutput& d) {
  for (const auto& ch : d.channels)
    out << d.frame << ',' << ch.name << ',' << fmt_d(ch.alpha) << ',' << fmt_d(ch.p) << ','
        << fmt_d(ch.log_martingale) << ',' << fmt_d(ch.cusum) << ',' << (ch.flag ? 1 : 0) << '\n';
  out << d.frame << ",change_point," << fmt_d(d.change_point.moving_average) << ",NA,NA,"
      << fmt_d(d.change_point.cusum) << ',' << (d.change_point.flag ? 1 : 0) << '\n';
}

double quantile(std::span<const double> sorted, double q) {
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
  return sorted[idx];
}

struct DetectionTable {
  std::vector<std::string> channels;  // detector, reasoners..., change_point
  std::map<std::string, std::vector<std::vector<bool>>> flags;  // scene -> frame -> channel
  std::vector<std::string> order;
};

DetectionTable read_detections(const fs::path& p) {
  require(p, "detect");
  std::istringstream in(read_text(p));
  std::string line;
  std::getline(in, line);
  const auto header = dataset::split_csv_line(line);
  if (header.size() < 4 || header[0] != "scene" || header[1] != "frame" || header[2] != "warmup")
    throw FormatError(p.string() + ": bad header");
  DetectionTable t;
  t.channels.assign(header.begin() + 3, header.end());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = dataset::split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError(lineno, "wrong column count in " + p.string());
    auto& rows = t.flags[cells[0]];
    if (rows.empty()) t.order.push_back(cells[0]);
    if (cells[1] != std::to_string(rows.size())) throw ParseError(lineno, "frames out of order in " + p.string());
    std::vector<bool> f;
    for (std::size_t i = 3; i < cells.size(); ++i) {
      if (cells[i] != "0" && cells[i] != "1") throw ParseError(lineno, "flag must be 0 or 1");
      f.push_back(cells[i] == "1");
    }
    rows.push_back(std::move(f));
  }
  return t;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

}  // namespace

DirectoryLock::DirectoryLock(const fs::path& root) : path_(root / ".lock") {
  fs::create_directories(root);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw Error("artifact directory is locked by another command: " + path_.string());
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<Scene> training_part(const std::vector<Scene>& scenes, const DatasetSplit& split) {
  std::vector<Scene> out(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) out[i].name = scenes[i].name;
  for (const auto& r : split.train) {
    out[r.scene].frames.push_back(scenes[r.scene].frames[r.frame]);
    out[r.scene].labels.push_back(scenes[r.scene].labels[r.frame]);
  }
  return out;
}

std::vector<Frame> calibration_part(const std::vector<Scene>& scenes, const DatasetSplit& split) {
  std::vector<Frame> out;
  out.reserve(split.calibration.size());
  for (const auto& r : split.calibration) out.push_back(scenes[r.scene].frames[r.frame]);
  return out;
}

Json generate_spec(const fs::path& spec_path, const fs::path& out, std::uint64_t seed, int width, int height) {
  const auto specs = scenegen::parse_spec(read_text(spec_path));
  const auto scenes = scenegen::generate_scenes(specs, seed, width, height);
  dataset::save(out, scenes);
  std::size_t frames = 0;
  for (const auto& s : scenes) frames += s.size();
  Json j;
  j["spec"] = spec_path.string();
  j["out"] = out.string();
  j["scenes"] = scenes.size();
  j["frames"] = frames;
  return j;
}

Json generate(const config::PipelineConfig& c, const Layout& l) {
  if (c.data.train_spec.empty()) throw DomainError("data.train_spec is not set");
  Json j;
  j["command"] = "generate";
  j["train"] = generate_spec(c.data.train_spec, l.train_data(), c.data.seed, c.data.width, c.data.height);
  if (!c.data.test_spec.empty())
    j["test"] = generate_spec(c.data.test_spec, l.test_data(), hash_combine(c.data.seed, 2), c.data.width,
                              c.data.height);
  return j;
}

Json partition(const config::PipelineConfig& c, const Layout& l) {
  const auto d = training_data(c, l);
  const auto set = partition::build_partitions(d.proper);
  partition::write_manifest(l.partitions(), set, d.proper);
  Json j;
  j["command"] = "partition";
  Json parts = Json::array();
  for (const auto& p : set.partitions) {
    Json e;
    e["feature"] = feature_name(p.feature);
    e["scenes"] = p.scenes.size();
    e["variance"] = p.variance;
    parts.push_back(e);
  }
  j["partitions"] = parts;
  return j;
}

Json search(const config::PipelineConfig& c, const Layout& l) {
  const auto d = training_data(c, l);
  require(l.partitions(), "partition");
  const auto set = partition::read_manifest(l.partitions(), d.proper);
  const auto frames = all_frames(d.proper);
  const auto t0 = Clock::now();
  const hpo::Objective objective = [&](int n, double beta) {
    bvae::BetaVaeConfig vc = c.vae;
    vc.n = n;
    vc.beta = beta;
    vc.epochs = c.search.epochs;
    const auto model = bvae::train(vc, frames);
    return disentangle::compute_mig(model, d.proper, set, c.mig).mig;
  };
  const auto result = hpo::search(c.search.space, objective, c.search.params);
  hpo::write_trials(l.trials(), result.explored, c.search.timing);
  {
    auto out = open_out(l.best());
    out << "n,beta,mig\n" << result.n << ',' << fmt_d(result.beta) << ',' << fmt_d(result.mig) << '\n';
  }
  Json j;
  j["command"] = "search";
  j["mode"] = hpo::mode_name(c.search.params.mode);
  j["trials"] = result.explored.size();
  j["early_stopped"] = result.early_stopped;
  j["n"] = result.n;
  j["beta"] = result.beta;
  j["mig"] = result.mig;
  j["seconds"] = seconds_since(t0);
  return j;
}

Json train(const config::PipelineConfig& c, const Layout& l) {
  const auto d = training_data(c, l);
  const auto [n, beta] = chosen_hyperparameters(c, l);
  bvae::BetaVaeConfig vc = c.vae;
  vc.n = n;
  vc.beta = beta;
  const auto frames = all_frames(d.proper);
  const auto t0 = Clock::now();
  const auto model = bvae::train(vc, frames);
  bvae::save_model(l.model(), model);
  {
    auto out = open_out(l.training_log());
    out << "epoch,loss,recon,kl,lr\n";
    for (std::size_t e = 0; e < model.log.epoch_loss.size(); ++e)
      out << e + 1 << ',' << fmt_d(model.log.epoch_loss[e]) << ',' << fmt_d(model.log.epoch_recon[e]) << ','
          << fmt_d(model.log.epoch_kl[e]) << ',' << fmt_d(model.log.epoch_lr[e]) << '\n';
  }
  Json j;
  j["command"] = "train";
  j["n"] = n;
  j["beta"] = beta;
  j["frames"] = frames.size();
  j["epochs"] = model.log.epoch_loss.size();
  j["early_stopped"] = model.log.early_stopped;
  j["final_loss"] = model.log.epoch_loss.empty() ? 0.0 : model.log.epoch_loss.back();
  j["seconds"] = seconds_since(t0);
  return j;
}

Json map(const config::PipelineConfig& c, const Layout& l) {
  const auto d = training_data(c, l);
  require(l.partitions(), "partition");
  const auto set = partition::read_manifest(l.partitions(), d.proper);
  const auto model = load_model(l);
  const auto sel = mapping::select_latents(*model, d.proper, set, c.mapping.m, c.mapping.reasoner_size);
  mapping::write_selection(l.selection(), sel);
  const auto profile = monitor::make_profile(model, sel, c.monitor.window, c.monitor.detector, c.monitor.reasoner,
                                             monitor::CusumParams{});
  monitor::save_layout(l.profile(), profile);
  Json j;
  j["command"] = "map";
  j["detector"] = sel.detector;
  Json reasoners = Json::object();
  for (const auto& p : sel.partitions) reasoners[std::string(feature_name(p.feature))] = p.reasoner;
  j["reasoners"] = reasoners;
  return j;
}

Json calibrate(const config::PipelineConfig& c, const Layout& l) {
  const auto d = training_data(c, l);
  auto model = load_model(l);
  require(l.profile(), "map");
  monitor::DetectorProfile profile;
  profile.model = model;
  profile.window = c.monitor.window;
  monitor::load_layout(l.profile(), profile);
  const auto frames = calibration_part(d.scenes, d.split);
  monitor::calibrate(profile, frames);
  monitor::save_calibration(l.calibration(), profile);
  Json j;
  j["command"] = "calibrate";
  j["frames"] = frames.size();
  j["detector_median"] = quantile(profile.detector.calibration, 0.5);
  j["detector_max"] = profile.detector.calibration.back();
  return j;
}

monitor::CusumParams change_point_params(const config::ChangePointConfig& c, std::span<const double> scores) {
  monitor::CusumParams p;
  if (c.omega && c.tau) return {*c.omega, *c.tau};
  if (scores.empty()) throw DependencyError("automatic change-point thresholds need calibration scores");
  const double hi = quantile(scores, 0.99);
  const double mid = quantile(scores, 0.5);
  p.omega = c.omega ? *c.omega : hi;
  p.tau = c.tau ? *c.tau : std::max(hi - mid, 1e-9);
  return p;
}

monitor::DetectorProfile load_profile(const config::PipelineConfig& c, const Layout& l) {
  monitor::DetectorProfile profile;
  profile.model = load_model(l);
  profile.window = c.monitor.window;
  require(l.profile(), "map");
  profile.detector.cusum = c.monitor.detector;
  profile.reasoners.push_back(monitor::Channel{"", {}, {}, c.monitor.reasoner});
  monitor::load_layout(l.profile(), profile);
  require(l.calibration(), "calibrate");
  monitor::load_calibration(l.calibration(), profile);
  profile.change_point = change_point_params(c.monitor.change_point, profile.detector.calibration);
  profile.validate();
  return profile;
}

Json detect(const config::PipelineConfig& c, const Layout& l) {
  const auto profile = load_profile(c, l);
  const auto scenes = load_scenes(l.test_data(), "generate");
  const auto t0 = Clock::now();
  std::error_code ec;
  fs::remove_all(l.traces(), ec);
  fs::create_directories(l.traces());
  auto det = open_out(l.detections());
  det << "scene,frame,warmup";
  for (const auto* ch : profile.channels()) det << ',' << ch->name;
  det << ",change_point\n";
  Json per_scene = Json::array();
  std::size_t frames = 0;
  for (const auto& scene : scenes) {
    auto state = monitor::StreamState::for_profile(profile);
    auto trace = open_out(l.traces() / (scene.name + ".csv"));
    write_trace_header(trace);
    std::size_t detector_flags = 0;
    for (const auto& frame : scene.frames) {
      const auto out = monitor::step(profile, state, frame);
      write_trace_rows(trace, out);
      det << scene.name << ',' << out.frame << ',' << (out.warmup ? 1 : 0);
      for (const auto& ch : out.channels) det << ',' << (ch.flag ? 1 : 0);
      det << ',' << (out.change_point.flag ? 1 : 0) << '\n';
      if (out.channels.front().flag) ++detector_flags;
    }
    frames += scene.size();
    Json s;
    s["scene"] = scene.name;
    s["frames"] = scene.size();
    s["detector_flags"] = detector_flags;
    per_scene.push_back(s);
  }
  const double secs = seconds_since(t0);
  Json j;
  j["command"] = "detect";
  j["change_point_omega"] = profile.change_point.omega;
  j["change_point_tau"] = profile.change_point.tau;
  j["scenes"] = per_scene;
  j["ms_per_frame"] = frames ? 1000.0 * secs / static_cast<double>(frames) : 0.0;
  return j;
}

std::vector<std::vector<monitor::OodInterval>> ground_truth(const config::PipelineConfig& c,
                                                            const std::vector<Scene>& training,
                                                            const std::vector<Scene>& test) {
  std::vector<std::vector<monitor::OodInterval>> out(test.size());
  if (c.data.truth.empty()) {
    for (std::size_t i = 0; i < test.size(); ++i) out[i] = monitor::derive_truth(training, test[i]);
    return out;
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < test.size(); ++i) index[test[i].name] = i;
  std::istringstream in(read_text(c.data.truth));
  std::string line;
  std::getline(in, line);
  if (line != "scene,start,end,features") throw FormatError(c.data.truth.string() + ": bad header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = dataset::split_csv_line(line);
    if (cells.size() != 4) throw ParseError(lineno, "expected scene,start,end,features");
    auto it = index.find(cells[0]);
    if (it == index.end()) throw DomainError("truth.csv: unknown scene '" + cells[0] + "'");
    monitor::OodInterval iv;
    try {
      iv.start = std::stoul(cells[1]);
      iv.end = std::stoul(cells[2]);
    } catch (const std::exception&) {
      throw ParseError(lineno, "bad interval bounds");
    }
    std::stringstream fs_(cells[3]);
    std::string f;
    while (std::getline(fs_, f, '+'))
      if (!f.empty()) iv.features.emplace_back(feature_name(feature_from_name(f)));
    out[it->second].push_back(std::move(iv));
  }
  return out;
}

Json evaluate(const config::PipelineConfig& c, const Layout& l) {
  const auto table = read_detections(l.detections());
  const auto training = load_scenes(l.train_data(), "generate");
  const auto test = load_scenes(l.test_data(), "generate");
  const auto truth = ground_truth(c, training, test);
  if (table.channels.empty() || table.channels.front() != "detector")
    throw FormatError(l.detections().string() + ": missing detector column");

  std::vector<monitor::RunRecord> runs;
  auto out = open_out(l.evaluation());
  out << "scene,frames,ood_frames,ood_features,tp,fp,fn,tn,first_flag,reasoners_flagged,first_change_point\n";
  Json per_scene = Json::array();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& scene = test[i];
    auto it = table.flags.find(scene.name);
    if (it == table.flags.end() || it->second.size() != scene.size())
      throw DomainError("detections do not cover scene '" + scene.name + "'");
    const auto& rows = it->second;
    monitor::RunRecord run;
    run.scene = scene.name;
    run.truth = truth[i];
    for (const auto& r : rows) run.flags.push_back(r.front());
    const auto m = monitor::evaluate({run});

    std::vector<std::string> reasoners;
    for (std::size_t ch = 1; ch + 1 < table.channels.size(); ++ch)
      if (std::any_of(rows.begin(), rows.end(), [ch](const auto& r) { return r[ch]; }))
        reasoners.push_back(table.channels[ch].substr(table.channels[ch].find(':') + 1));
    std::string first_flag = "NA", first_cp = "NA";
    for (std::size_t f = 0; f < rows.size(); ++f)
      if (rows[f].front()) {
        first_flag = std::to_string(f);
        break;
      }
    for (std::size_t f = 0; f < rows.size(); ++f)
      if (rows[f].back()) {
        first_cp = std::to_string(f);
        break;
      }
    std::size_t ood = 0;
    std::vector<std::string> features;
    for (const auto& iv : run.truth) {
      ood += iv.end - iv.start;
      for (const auto& f : iv.features)
        if (std::find(features.begin(), features.end(), f) == features.end()) features.push_back(f);
    }
    out << scene.name << ',' << scene.size() << ',' << ood << ',' << (features.empty() ? "none" : join(features, '+'))
        << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << m.tn << ',' << first_flag << ','
        << (reasoners.empty() ? "none" : join(reasoners, '+')) << ',' << first_cp << '\n';
    Json s;
    s["scene"] = scene.name;
    s["ood_features"] = features;
    s["reasoners_flagged"] = reasoners;
    s["first_flag"] = first_flag;
    s["first_change_point"] = first_cp;
    per_scene.push_back(s);
    runs.push_back(std::move(run));
  }
  if (runs.empty()) throw DomainError("no test scenes to evaluate");
  const auto m = monitor::evaluate(runs);
  Json j;
  j["command"] = "evaluate";
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["min_sensitivity"] = m.min_sensitivity ? Json(*m.min_sensitivity) : Json(nullptr);
  j["mean_latency"] = m.mean_latency ? Json(*m.mean_latency) : Json(nullptr);
  j["missed_intervals"] = m.missed_intervals;
  j["feature_recall"] = m.feature_recall;
  j["scenes"] = per_scene;
  return j;
}

std::vector<Json> run_all(const config::PipelineConfig& c, const Layout& l) {
  std::vector<Json> out;
  for (auto stage : {generate, partition, search, train, map, calibrate, detect, evaluate}) {
    out.push_back(stage(c, l));
    append_summary(l, out.back());
  }
  return out;
}

void append_summary(const Layout& l, const Json& record) {
  fs::create_directories(l.root);
  std::ofstream out(l.summary(), std::ios::app);
  if (!out) throw Error("cannot write " + l.summary().string());
  out << record.dump() << '\n';
}

}  // namespace bvood::pipeline
