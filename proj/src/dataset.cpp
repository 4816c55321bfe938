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

#include "bvood/dataset.hpp"

#include <charconv>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "bvood/binio.hpp"
#include "bvood/error.hpp"

namespace bvood::dataset {

namespace fs = std::filesystem;

std::string format_double(double v) { return fmt::format("{}", v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

std::string frame_file_name(const std::string& scene, std::size_t index) {
  return fmt::format("{}_{:05d}.bin", scene, index);
}

void write_frame(const fs::path& path, const Frame& frame) {
  binio::Writer w;
  w.bytes("BVFR");
  w.u16(static_cast<std::uint16_t>(frame.width));
  w.u16(static_cast<std::uint16_t>(frame.height));
  w.f64s(frame.pixels);
  w.save(path);
}

Frame read_frame(const fs::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_magic("BVFR");
  Frame f;
  f.width = r.u16();
  f.height = r.u16();
  f.pixels = r.f64s(static_cast<std::size_t>(f.width) * f.height);
  r.expect_end();
  return f;
}

void save(const fs::path& dir, const std::vector<Scene>& scenes) {
  fs::create_directories(dir / "frames");
  std::ofstream labels(dir / "labels.csv", std::ios::trunc);
  if (!labels) throw Error("cannot write " + (dir / "labels.csv").string());
  labels << "scene,frame_index,brightness,precipitation,cloudiness,segment_id\n";
  for (const auto& s : scenes) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& l = s.labels[i];
      labels << s.name << ',' << i << ',' << format_double(l.brightness) << ',' << format_double(l.precipitation)
             << ',' << format_double(l.cloudiness) << ',' << l.segment_id << '\n';
      write_frame(dir / "frames" / frame_file_name(s.name, i), s.frames[i]);
    }
  }
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<Scene> load(const fs::path& dir) {
  const fs::path labels_path = dir / "labels.csv";
  std::ifstream in(labels_path);
  if (!in) throw DependencyError("missing artifact: " + labels_path.string());
  std::string line;
  std::getline(in, line);
  if (split_csv_line(line).size() != 6) throw FormatError(labels_path.string() + ": bad header");
  std::vector<Scene> scenes;
  std::map<std::string, std::size_t> index;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    const std::string where = labels_path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 6) throw FormatError(where + ": expected 6 columns");
    auto [it, inserted] = index.try_emplace(cols[0], scenes.size());
    if (inserted) scenes.push_back(Scene{cols[0], {}, {}});
    Scene& s = scenes[it->second];
    const auto frame_index = static_cast<std::size_t>(parse_double(cols[1], where));
    if (frame_index != s.size()) throw FormatError(where + ": frames of a scene must be listed in order");
    FeatureVector fv;
    fv.brightness = parse_double(cols[2], where);
    fv.precipitation = parse_double(cols[3], where);
    fv.cloudiness = parse_double(cols[4], where);
    fv.segment_id = static_cast<int>(parse_double(cols[5], where));
    s.labels.push_back(fv);
    s.frames.push_back(read_frame(dir / "frames" / frame_file_name(s.name, frame_index)));
  }
  return scenes;
}

}  // namespace bvood::dataset
