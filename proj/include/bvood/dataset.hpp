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

#include <filesystem>
#include <string>
#include <vector>

#include "bvood/scenegen.hpp"

namespace bvood::dataset {

/// Writes `dir/labels.csv` and one `dir/frames/<scene>_<index>.bin` per frame.
/// Frame files carry an 8-byte header ("BVFR", u16 width, u16 height) and
/// then width*height little-endian doubles.
void save(const std::filesystem::path& dir, const std::vector<Scene>& scenes);

/// Inverse of save(). Scene order follows first appearance in labels.csv.
std::vector<Scene> load(const std::filesystem::path& dir);

void write_frame(const std::filesystem::path& path, const Frame& frame);
Frame read_frame(const std::filesystem::path& path);

std::string frame_file_name(const std::string& scene, std::size_t index);

/// Formats a double so that parsing it back is exact.
std::string format_double(double v);

/// Splits one CSV line on commas (no quoting; names never contain commas).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace bvood::dataset
