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
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bvood {

/// Generative features in declaration order. The order is significant: it is
/// the tie-break order for partitioning and the column order of labels.csv.
enum class Feature { Brightness = 0, Precipitation = 1, Cloudiness = 2, Segment = 3 };

inline constexpr std::size_t kFeatureCount = 4;
inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::Brightness, Feature::Precipitation, Feature::Cloudiness, Feature::Segment};

std::string_view feature_name(Feature f);
/// Accepts the canonical names plus "segment_id". Throws DomainError.
Feature feature_from_name(std::string_view name);
constexpr bool is_categorical(Feature f) { return f == Feature::Segment; }

struct FeatureVector {
  double brightness = 0.0;
  double precipitation = 0.0;
  double cloudiness = 0.0;
  int segment_id = 0;

  double get(Feature f) const;
  void set(Feature f, double v);
  /// Throws DomainError when a fraction is outside [0,1] or the segment is
  /// not a registered background pattern.
  void validate() const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

namespace scenegen {

inline constexpr int kPatternCount = 8;
inline constexpr int kDefaultWidth = 32;
inline constexpr int kDefaultHeight = 32;
/// Average fraction of pixels turned into speckles at precipitation 1.0.
inline constexpr double kMaxSpeckleDensity = 0.4;

}  // namespace scenegen

/// Grayscale image, row-major, intensities in [0,1].
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  std::size_t size() const { return pixels.size(); }
  double mean() const;
  friend bool operator==(const Frame&, const Frame&) = default;
};

namespace program {
struct Constant {
  double value;
};
struct UniformRange {
  double lo, hi;
};
struct Step {
  int change_index;
  double before, after;
};
struct Ramp {
  double start, end;
};
}  // namespace program

/// Per-feature value program of a scene description.
using ValueProgram = std::variant<program::Constant, program::UniformRange, program::Step, program::Ramp>;

struct SceneSpec {
  std::string name;
  int frame_count = 0;
  /// Indexed by Feature. Unspecified features default to Constant{0}.
  std::array<ValueProgram, kFeatureCount> programs = {
      program::Constant{0.0}, program::Constant{0.0}, program::Constant{0.0}, program::Constant{0.0}};

  const ValueProgram& program_for(Feature f) const { return programs[static_cast<std::size_t>(f)]; }
};

struct Scene {
  std::string name;
  std::vector<Frame> frames;
  std::vector<FeatureVector> labels;

  std::size_t size() const { return frames.size(); }
};

/// Position of one frame inside a scene list.
struct FrameRef {
  std::size_t scene = 0;
  std::size_t frame = 0;
  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

struct DatasetSplit {
  std::vector<FrameRef> train;        // proper training set
  std::vector<FrameRef> calibration;  // held out for conformal calibration
};

namespace scenegen {

/// Parses scene-description text:
///
///   # comment
///   scene hb_step {
///     frames 260
///     brightness step 26 0.25 0.75
///     precipitation range 0.0 0.1
///     cloudiness const 0.25
///     segment const 0
///   }
///
/// Tokens may be split across lines freely. Throws ParseError (with line) on
/// syntax errors and DomainError on out-of-domain values or duplicate names.
std::vector<SceneSpec> parse_spec(std::string_view text);

/// Speckle mask for a frame: pixel i is a speckle when its seed-keyed uniform
/// draw falls below its row's density. Density falls linearly from
/// 2 * precipitation * kMaxSpeckleDensity in the top row to 0 in the bottom
/// row, so the frame average is precipitation * kMaxSpeckleDensity.
std::vector<bool> speckle_mask(double precipitation, std::uint64_t seed, int width, int height);

/// Deterministic rendering of one frame. Brightness adds an intensity offset,
/// cloudiness flattens contrast around mid-gray, precipitation injects bright
/// speckles (denser near the top) and darkens lower rows, and segment_id
/// picks the background pattern.
Frame render_frame(const FeatureVector& fv, std::uint64_t seed, int width = kDefaultWidth,
                   int height = kDefaultHeight);

/// Feature values of every frame of the scene, in time order.
std::vector<FeatureVector> evaluate_programs(const SceneSpec& spec, std::uint64_t seed);

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed, int width = kDefaultWidth,
                     int height = kDefaultHeight);

std::vector<Scene> generate_scenes(const std::vector<SceneSpec>& specs, std::uint64_t seed,
                                   int width = kDefaultWidth, int height = kDefaultHeight);

/// Frame-level split stratified by scene. Within each scene the
/// floor(count * ratio) training frames are spread evenly over time so both
/// sides cover the whole scene.
DatasetSplit split_dataset(const std::vector<Scene>& scenes, double ratio);

}  // namespace scenegen
}  // namespace bvood
