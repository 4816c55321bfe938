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

#include "bvood/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "bvood/dataset.hpp"
#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood::config {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw DomainError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw DomainError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw DomainError(key + ": integer out of range");
  return static_cast<int>(x);
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (!s.empty() && s.front() == '-') throw DomainError(key + ": seed must be non-negative");
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw DomainError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw DomainError(key + ": expected a boolean, got '" + v + "'");
}

std::optional<double> to_auto_double(const std::string& key, const std::string& v) {
  if (trim(v) == "auto") return std::nullopt;
  return to_double(key, v);
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + dataset::format_double(v[i]);
  return out;
}

std::string auto_or(const std::optional<double>& v) { return v ? dataset::format_double(*v) : "auto"; }

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

struct Seeds {
  bool data = false, vae = false, search = false, mig = false;
};

std::map<std::string, Setter> setters(const std::filesystem::path& base, Seeds& seeds) {
  auto path = [base](const std::string& v) {
    const std::filesystem::path p(trim(v));
    return p.empty() || p.is_absolute() || base.empty() ? p : base / p;
  };
  std::map<std::string, Setter> s;
  s["run.seed"] = [](auto& c, auto& k, auto& v) { c.seed = to_seed(k, v); };

  s["data.train_spec"] = [path](auto& c, auto&, auto& v) { c.data.train_spec = path(v); };
  s["data.test_spec"] = [path](auto& c, auto&, auto& v) { c.data.test_spec = path(v); };
  s["data.truth"] = [path](auto& c, auto&, auto& v) { c.data.truth = path(v); };
  s["data.split_ratio"] = [](auto& c, auto& k, auto& v) { c.data.split_ratio = to_double(k, v); };
  s["data.width"] = [](auto& c, auto& k, auto& v) { c.data.width = c.vae.frame_width = to_int(k, v); };
  s["data.height"] = [](auto& c, auto& k, auto& v) { c.data.height = c.vae.frame_height = to_int(k, v); };
  s["data.seed"] = [&seeds](auto& c, auto& k, auto& v) { c.data.seed = to_seed(k, v); seeds.data = true; };

  s["vae.latents"] = [](auto& c, auto& k, auto& v) { c.vae.n = to_int(k, v); };
  s["vae.beta"] = [](auto& c, auto& k, auto& v) { c.vae.beta = to_double(k, v); };
  s["vae.epochs"] = [](auto& c, auto& k, auto& v) { c.vae.epochs = to_int(k, v); };
  s["vae.lr_phase1"] = [](auto& c, auto& k, auto& v) { c.vae.lr_phase1 = to_double(k, v); };
  s["vae.lr_phase2"] = [](auto& c, auto& k, auto& v) { c.vae.lr_phase2 = to_double(k, v); };
  s["vae.phase1_fraction"] = [](auto& c, auto& k, auto& v) { c.vae.phase1_fraction = to_double(k, v); };
  s["vae.batch_size"] = [](auto& c, auto& k, auto& v) { c.vae.batch_size = to_int(k, v); };
  s["vae.patience"] = [](auto& c, auto& k, auto& v) { c.vae.early_stop_patience = to_int(k, v); };
  s["vae.min_delta"] = [](auto& c, auto& k, auto& v) { c.vae.min_delta = to_double(k, v); };
  s["vae.hidden"] = [](auto& c, auto& k, auto& v) {
    c.vae.hidden.clear();
    for (const auto& item : split_list(v)) c.vae.hidden.push_back(to_int(k, item));
  };
  s["vae.seed"] = [&seeds](auto& c, auto& k, auto& v) { c.vae.seed = to_seed(k, v); seeds.vae = true; };

  s["search.mode"] = [](auto& c, auto&, auto& v) { c.search.params.mode = hpo::mode_from_name(trim(v)); };
  s["search.latents"] = [](auto& c, auto& k, auto& v) {
    c.search.space.n.clear();
    for (const auto& item : split_list(v)) c.search.space.n.push_back(to_int(k, item));
  };
  s["search.beta"] = [](auto& c, auto& k, auto& v) {
    c.search.space.beta.clear();
    for (const auto& item : split_list(v)) c.search.space.beta.push_back(to_double(k, item));
  };
  s["search.budget"] = [](auto& c, auto& k, auto& v) { c.search.params.budget = to_int(k, v); };
  s["search.init"] = [](auto& c, auto& k, auto& v) { c.search.params.init = to_int(k, v); };
  s["search.early_stop"] = [](auto& c, auto& k, auto& v) { c.search.params.early_stop = to_int(k, v); };
  s["search.xi"] = [](auto& c, auto& k, auto& v) { c.search.params.xi = to_double(k, v); };
  s["search.length_scale"] = [](auto& c, auto& k, auto& v) { c.search.params.gp.length_scale = to_double(k, v); };
  s["search.epochs"] = [](auto& c, auto& k, auto& v) { c.search.epochs = to_int(k, v); };
  s["search.timing"] = [](auto& c, auto& k, auto& v) { c.search.timing = to_bool(k, v); };
  s["search.seed"] = [&seeds](auto& c, auto& k, auto& v) { c.search.params.seed = to_seed(k, v); seeds.search = true; };

  s["mig.iterations"] = [](auto& c, auto& k, auto& v) { c.mig.iterations = to_int(k, v); };
  s["mig.samples_per_latent"] = [](auto& c, auto& k, auto& v) { c.mig.samples_per_latent = to_int(k, v); };
  s["mig.bins"] = [](auto& c, auto& k, auto& v) { c.mig.bins = to_int(k, v); };
  s["mig.seed"] = [&seeds](auto& c, auto& k, auto& v) { c.mig.seed = to_seed(k, v); seeds.mig = true; };

  s["mapping.m"] = [](auto& c, auto& k, auto& v) { c.mapping.m = to_int(k, v); };
  s["mapping.reasoner_size"] = [](auto& c, auto& k, auto& v) { c.mapping.reasoner_size = to_int(k, v); };

  s["monitor.window"] = [](auto& c, auto& k, auto& v) { c.monitor.window = to_int(k, v); };
  s["monitor.detector_omega"] = [](auto& c, auto& k, auto& v) { c.monitor.detector.omega = to_double(k, v); };
  s["monitor.detector_tau"] = [](auto& c, auto& k, auto& v) { c.monitor.detector.tau = to_double(k, v); };
  s["monitor.reasoner_omega"] = [](auto& c, auto& k, auto& v) { c.monitor.reasoner.omega = to_double(k, v); };
  s["monitor.reasoner_tau"] = [](auto& c, auto& k, auto& v) { c.monitor.reasoner.tau = to_double(k, v); };
  s["monitor.changepoint_omega"] = [](auto& c, auto& k, auto& v) {
    c.monitor.change_point.omega = to_auto_double(k, v);
  };
  s["monitor.changepoint_tau"] = [](auto& c, auto& k, auto& v) { c.monitor.change_point.tau = to_auto_double(k, v); };
  return s;
}

void derive_seeds(PipelineConfig& c, const Seeds& seeds) {
  if (!seeds.data) c.data.seed = hash_combine(c.seed, 1);
  if (!seeds.vae) c.vae.seed = hash_combine(c.seed, 2);
  if (!seeds.search) c.search.params.seed = hash_combine(c.seed, 3);
  if (!seeds.mig) c.mig.seed = hash_combine(c.seed, 4);
}

PipelineConfig build(const pt::ptree& tree, const std::filesystem::path& base, const Overrides& overrides) {
  PipelineConfig c;
  Seeds seeds;
  const auto table = setters(base, seeds);
  auto apply = [&](const std::string& key, const std::string& value, const std::filesystem::path& rel) {
    auto it = table.find(key);
    if (it == table.end()) throw DomainError("unknown configuration key '" + key + "'");
    if (rel == base) {
      it->second(c, key, value);
    } else {
      const auto with_rel = setters(rel, seeds);
      with_rel.at(key)(c, key, value);
    }
  };
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw DomainError("key '" + section + "' outside any section");
    for (const auto& [key, value] : body) apply(section + "." + key, value.data(), base);
  }
  for (const auto& [key, value] : overrides) apply(key, value, std::filesystem::current_path());
  derive_seeds(c, seeds);
  c.validate();
  return c;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0)) throw DomainError("data.split_ratio must lie in (0,1)");
  if (data.width < 1 || data.height < 1) throw DomainError("frame size must be positive");
  vae.validate();
  search.space.validate();
  if (search.epochs < 1) throw DomainError("search.epochs must be >= 1");
  if (search.params.budget < 1) throw DomainError("search.budget must be >= 1");
  if (search.params.init < 1) throw DomainError("search.init must be >= 1");
  if (search.params.early_stop < 0) throw DomainError("search.early_stop must be >= 0");
  mig.validate();
  if (mapping.m < 1) throw DomainError("mapping.m must be >= 1");
  if (mapping.reasoner_size < 1 || mapping.reasoner_size > mapping.m)
    throw DomainError("mapping.reasoner_size must lie in [1, m]");
  if (monitor.window < 1) throw DomainError("monitor.window must be >= 1");
  for (const auto& p : {monitor.detector, monitor.reasoner})
    if (!(p.omega > 0.0 && p.tau > 0.0)) throw DomainError("CUSUM omega and tau must be positive");
  for (const auto& v : {monitor.change_point.omega, monitor.change_point.tau})
    if (v && !(*v > 0.0)) throw DomainError("change-point omega and tau must be positive");
}

PipelineConfig parse(const std::string& text, const std::filesystem::path& base, const Overrides& overrides) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(static_cast<int>(e.line()), e.message());
  }
  return build(tree, base, overrides);
}

PipelineConfig load(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing artifact: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path(), overrides);
}

PipelineConfig defaults(const Overrides& overrides) { return parse("", {}, overrides); }

std::string render(const PipelineConfig& c) {
  std::ostringstream o;
  const auto d = [](double v) { return dataset::format_double(v); };
  o << "[run]\nseed = " << c.seed << "\n\n";
  o << "[data]\ntrain_spec = " << c.data.train_spec.string() << "\ntest_spec = " << c.data.test_spec.string()
    << "\ntruth = " << c.data.truth.string() << "\nsplit_ratio = " << d(c.data.split_ratio)
    << "\nwidth = " << c.data.width << "\nheight = " << c.data.height << "\nseed = " << c.data.seed << "\n\n";
  o << "[vae]\nlatents = " << c.vae.n << "\nbeta = " << d(c.vae.beta) << "\nepochs = " << c.vae.epochs
    << "\nlr_phase1 = " << d(c.vae.lr_phase1) << "\nlr_phase2 = " << d(c.vae.lr_phase2)
    << "\nphase1_fraction = " << d(c.vae.phase1_fraction) << "\nbatch_size = " << c.vae.batch_size
    << "\npatience = " << c.vae.early_stop_patience << "\nmin_delta = " << d(c.vae.min_delta)
    << "\nhidden = " << join_ints(c.vae.hidden) << "\nseed = " << c.vae.seed << "\n\n";
  o << "[search]\nmode = " << hpo::mode_name(c.search.params.mode) << "\nlatents = " << join_ints(c.search.space.n)
    << "\nbeta = " << join_doubles(c.search.space.beta) << "\nbudget = " << c.search.params.budget
    << "\ninit = " << c.search.params.init << "\nearly_stop = " << c.search.params.early_stop
    << "\nxi = " << d(c.search.params.xi) << "\nlength_scale = " << d(c.search.params.gp.length_scale)
    << "\nepochs = " << c.search.epochs << "\ntiming = " << (c.search.timing ? "true" : "false")
    << "\nseed = " << c.search.params.seed << "\n\n";
  o << "[mig]\niterations = " << c.mig.iterations << "\nsamples_per_latent = " << c.mig.samples_per_latent
    << "\nbins = " << c.mig.bins << "\nseed = " << c.mig.seed << "\n\n";
  o << "[mapping]\nm = " << c.mapping.m << "\nreasoner_size = " << c.mapping.reasoner_size << "\n\n";
  o << "[monitor]\nwindow = " << c.monitor.window << "\ndetector_omega = " << d(c.monitor.detector.omega)
    << "\ndetector_tau = " << d(c.monitor.detector.tau) << "\nreasoner_omega = " << d(c.monitor.reasoner.omega)
    << "\nreasoner_tau = " << d(c.monitor.reasoner.tau)
    << "\nchangepoint_omega = " << auto_or(c.monitor.change_point.omega)
    << "\nchangepoint_tau = " << auto_or(c.monitor.change_point.tau) << "\n";
  return o.str();
}

}  // namespace bvood::config
