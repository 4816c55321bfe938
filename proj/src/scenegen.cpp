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

#include "bvood/scenegen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>

#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood {

std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::Brightness: return "brightness";
    case Feature::Precipitation: return "precipitation";
    case Feature::Cloudiness: return "cloudiness";
    case Feature::Segment: return "segment_id";
  }
  return "?";
}

Feature feature_from_name(std::string_view name) {
  if (name == "brightness") return Feature::Brightness;
  if (name == "precipitation") return Feature::Precipitation;
  if (name == "cloudiness") return Feature::Cloudiness;
  if (name == "segment" || name == "segment_id") return Feature::Segment;
  throw DomainError("unknown feature '" + std::string(name) + "'");
}

double FeatureVector::get(Feature f) const {
  switch (f) {
    case Feature::Brightness: return brightness;
    case Feature::Precipitation: return precipitation;
    case Feature::Cloudiness: return cloudiness;
    case Feature::Segment: return segment_id;
  }
  return 0.0;
}

void FeatureVector::set(Feature f, double v) {
  switch (f) {
    case Feature::Brightness: brightness = v; break;
    case Feature::Precipitation: precipitation = v; break;
    case Feature::Cloudiness: cloudiness = v; break;
    case Feature::Segment: segment_id = static_cast<int>(std::lround(v)); break;
  }
}

namespace {

bool is_fraction(double v) { return v >= 0.0 && v <= 1.0; }

void check_value(Feature f, double v) {
  if (is_categorical(f)) {
    if (v != std::floor(v) || v < 0 || v >= scenegen::kPatternCount) {
      throw DomainError("segment_id " + std::to_string(v) + " is not a registered pattern (0.." +
                        std::to_string(scenegen::kPatternCount - 1) + ")");
    }
  } else if (!is_fraction(v)) {
    throw DomainError(std::string(feature_name(f)) + " value " + std::to_string(v) + " outside [0,1]");
  }
}

}  // namespace

void FeatureVector::validate() const {
  for (Feature f : kAllFeatures) check_value(f, get(f));
}

double Frame::mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (double p : pixels) s += p;
  return s / static_cast<double>(pixels.size());
}

namespace scenegen {

// ---------------------------------------------------------------- parsing

namespace {

struct Token {
  std::string text;
  int line;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '{' || c == '}') {
      out.push_back({std::string(1, c), line});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '{' &&
             text[j] != '}' && text[j] != '#') {
        ++j;
      }
      out.push_back({std::string(text.substr(i, j - i)), line});
      i = j;
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  std::vector<SceneSpec> parse() {
    std::vector<SceneSpec> specs;
    std::set<std::string> names;
    while (pos_ < tokens_.size()) {
      SceneSpec spec = scene();
      if (!names.insert(spec.name).second) {
        throw DomainError("duplicate scene name '" + spec.name + "'");
      }
      specs.push_back(std::move(spec));
    }
    return specs;
  }

 private:
  const Token& peek() const {
    if (pos_ >= tokens_.size()) throw ParseError(last_line(), "unexpected end of input");
    return tokens_[pos_];
  }
  int last_line() const { return tokens_.empty() ? 1 : tokens_.back().line; }
  const Token& next() {
    const Token& t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view word) {
    const Token& t = next();
    if (t.text != word) throw ParseError(t.line, "expected '" + std::string(word) + "', got '" + t.text + "'");
  }

  double number() {
    const Token& t = next();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size() || !std::isfinite(v)) {
      throw ParseError(t.line, "expected a number, got '" + t.text + "'");
    }
    return v;
  }

  int integer() {
    const Token& t = next();
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
      throw ParseError(t.line, "expected an integer, got '" + t.text + "'");
    }
    return v;
  }

  static bool valid_name(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
  }

  SceneSpec scene() {
    expect("scene");
    const Token& name = next();
    if (!valid_name(name.text)) throw ParseError(name.line, "invalid scene name '" + name.text + "'");
    expect("{");
    SceneSpec spec;
    spec.name = name.text;
    bool have_frames = false;
    std::array<bool, kFeatureCount> seen{};
    while (peek().text != "}") {
      const Token& key = next();
      if (key.text == "frames") {
        spec.frame_count = integer();
        if (spec.frame_count < 1) throw DomainError("scene '" + spec.name + "': frames must be >= 1");
        have_frames = true;
        continue;
      }
      Feature f;
      try {
        f = feature_from_name(key.text);
      } catch (const DomainError&) {
        throw ParseError(key.line, "unknown keyword '" + key.text + "'");
      }
      auto& slot = seen[static_cast<std::size_t>(f)];
      if (slot) throw ParseError(key.line, "feature '" + key.text + "' given twice");
      slot = true;
      spec.programs[static_cast<std::size_t>(f)] = value_program(f);
    }
    const int close_line = next().line;
    if (!have_frames) throw ParseError(close_line, "scene '" + spec.name + "' has no frame count");
    for (Feature f : kAllFeatures) {
      if (const auto* step = std::get_if<program::Step>(&spec.program_for(f))) {
        if (step->change_index < 0 || step->change_index >= spec.frame_count) {
          throw DomainError("scene '" + spec.name + "': step index " + std::to_string(step->change_index) +
                            " not below frame count " + std::to_string(spec.frame_count));
        }
      }
    }
    return spec;
  }

  ValueProgram value_program(Feature f) {
    const Token& kind = next();
    if (kind.text == "const") {
      const double v = number();
      check_value(f, v);
      return program::Constant{v};
    }
    if (kind.text == "range") {
      const double lo = number(), hi = number();
      check_value(f, lo);
      check_value(f, hi);
      if (hi < lo) throw DomainError("range bounds reversed: " + std::to_string(lo) + " > " + std::to_string(hi));
      return program::UniformRange{lo, hi};
    }
    if (kind.text == "step") {
      const int idx = integer();
      const double v0 = number(), v1 = number();
      check_value(f, v0);
      check_value(f, v1);
      return program::Step{idx, v0, v1};
    }
    if (kind.text == "ramp") {
      const double v0 = number(), v1 = number();
      check_value(f, v0);
      check_value(f, v1);
      if (is_categorical(f)) throw DomainError("ramp is not defined for categorical feature segment_id");
      return program::Ramp{v0, v1};
    }
    throw ParseError(kind.line, "unknown value program '" + kind.text + "'");
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<SceneSpec> parse_spec(std::string_view text) { return Parser(tokenize(text)).parse(); }

// -------------------------------------------------------------- rendering

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;    // "noise"
constexpr std::uint64_t kSpeckleStream = 0x737065636bULL;  // "speck"
constexpr double kNoiseAmplitude = 0.03;
constexpr double kWetDarkening = 0.5;
constexpr double kGray = 0.3;

double pattern_value(int segment, int x, int y, int w, int h) {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double r = std::hypot(x - cx, y - cy);
  switch (segment) {
    case 0: return w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
    case 1: return (x / 4) % 2;
    case 2: return (y / 4) % 2;
    case 3: return ((x / 4) + (y / 4)) % 2;
    case 4: return ((x + y) / 4) % 2;
    case 5: return 0.5 + 0.5 * std::cos(0.8 * r);
    case 6: return std::exp(-r * r / (2.0 * 36.0));
    case 7: return (x % 8 == 0 || y % 8 == 0) ? 1.0 : 0.0;
    default: break;
  }
  throw DomainError("segment_id " + std::to_string(segment) + " is not registered");
}

/// 0 at the top row, 1 at the bottom row.
double row_position(int y, int height) { return height > 1 ? static_cast<double>(y) / (height - 1) : 0.0; }

double pixel_uniform(std::uint64_t seed, std::uint64_t stream, std::size_t index) {
  return to_unit(hash_combine(hash_combine(seed, stream), index));
}

}  // namespace

std::vector<bool> speckle_mask(double precipitation, std::uint64_t seed, int width, int height) {
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<bool> mask(count);
  for (int y = 0; y < height; ++y) {
    const double density = precipitation * kMaxSpeckleDensity * 2.0 * (1.0 - row_position(y, height));
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      mask[i] = pixel_uniform(seed, kSpeckleStream, i) < density;
    }
  }
  return mask;
}

Frame render_frame(const FeatureVector& fv, std::uint64_t seed, int width, int height) {
  fv.validate();
  if (width < 1 || height < 1) throw DomainError("frame size must be positive");
  Frame frame{width, height, std::vector<double>(static_cast<std::size_t>(width) * height)};
  const auto speckles = speckle_mask(fv.precipitation, seed, width, height);
  const double contrast = 1.0 - 0.8 * fv.cloudiness;
  const double offset = 0.5 * fv.brightness;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double v = 0.1 + 0.4 * pattern_value(fv.segment_id, x, y, width, height);
      v += kNoiseAmplitude * (2.0 * pixel_uniform(seed, kNoiseStream, i) - 1.0);
      v = kGray + contrast * (v - kGray);
      v -= kWetDarkening * fv.precipitation * row_position(y, height);
      v = std::clamp(v + offset, 0.0, 1.0);
      frame.pixels[i] = speckles[i] ? 1.0 : v;
    }
  }
  return frame;
}

// ------------------------------------------------------------------ scenes

namespace {

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Range draws are recorded at label precision (two decimals) so that each
// program yields a small set of distinct levels.
double quantize(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

std::vector<FeatureVector> evaluate_programs(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.frame_count < 1) throw DomainError("scene '" + spec.name + "': frame_count must be >= 1");
  std::vector<FeatureVector> labels(static_cast<std::size_t>(spec.frame_count));
  const std::uint64_t scene_key = hash_combine(seed, name_hash(spec.name));
  for (Feature f : kAllFeatures) {
    Rng rng(hash_combine(scene_key, static_cast<std::uint64_t>(f)));
    const auto& prog = spec.program_for(f);
    for (int i = 0; i < spec.frame_count; ++i) {
      double v = std::visit(
          [&](const auto& p) -> double {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, program::Constant>) {
              return p.value;
            } else if constexpr (std::is_same_v<P, program::UniformRange>) {
              if (is_categorical(f)) {
                const auto lo = static_cast<std::uint64_t>(p.lo), hi = static_cast<std::uint64_t>(p.hi);
                return static_cast<double>(lo + rng.below(hi - lo + 1));
              }
              return std::clamp(quantize(rng.uniform(p.lo, p.hi)), p.lo, p.hi);
            } else if constexpr (std::is_same_v<P, program::Step>) {
              return i < p.change_index ? p.before : p.after;
            } else {
              if (spec.frame_count == 1) return p.start;
              return p.start + (p.end - p.start) * i / (spec.frame_count - 1);
            }
          },
          prog);
      labels[static_cast<std::size_t>(i)].set(f, v);
    }
  }
  return labels;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, int width, int height) {
  Scene scene;
  scene.name = spec.name;
  scene.labels = evaluate_programs(spec, seed);
  scene.frames.reserve(scene.labels.size());
  const std::uint64_t frame_key = hash_combine(hash_combine(seed, name_hash(spec.name)), 0x6672616d65ULL);
  for (std::size_t i = 0; i < scene.labels.size(); ++i) {
    scene.frames.push_back(render_frame(scene.labels[i], hash_combine(frame_key, i), width, height));
  }
  return scene;
}

std::vector<Scene> generate_scenes(const std::vector<SceneSpec>& specs, std::uint64_t seed, int width,
                                   int height) {
  std::vector<Scene> scenes;
  scenes.reserve(specs.size());
  for (const auto& spec : specs) scenes.push_back(generate_scene(spec, seed, width, height));
  return scenes;
}

DatasetSplit split_dataset(const std::vector<Scene>& scenes, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("split ratio must lie in (0,1)");
  std::size_t total = 0;
  for (const auto& s : scenes) total += s.size();
  if (total == 0) throw DomainError("cannot split an empty dataset");
  if (total < 3) throw DomainError("split needs at least 3 frames");
  constexpr double kEps = 1e-9;
  DatasetSplit split;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (std::size_t i = 0; i < scenes[si].size(); ++i) {
      const auto before = static_cast<long long>(std::floor(static_cast<double>(i) * ratio + kEps));
      const auto after = static_cast<long long>(std::floor(static_cast<double>(i + 1) * ratio + kEps));
      (after > before ? split.train : split.calibration).push_back({si, i});
    }
  }
  return split;
}

}  // namespace scenegen
}  // namespace bvood
