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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bvood::binio {

/// Appends little-endian fields to a byte buffer.
class Writer {
 public:
  void bytes(std::string_view raw);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void str(std::string_view s);  // u32 length prefix

  const std::vector<std::uint8_t>& data() const { return buf_; }

  /// Writes the buffer followed by its 64-bit FNV-1a checksum.
  void save_with_checksum(const std::filesystem::path& path) const;
  /// Writes the buffer verbatim.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader. Every read past the end throws
/// FormatError("truncated ...").
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data, std::string what);

  /// Loads a file written by Writer::save_with_checksum, verifying the trailer.
  static Reader open_checked(const std::filesystem::path& path);
  static Reader open(const std::filesystem::path& path);

  void expect_magic(std::string_view magic);
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t count);
  std::string str();

  bool at_end() const { return pos_ == data_.size(); }
  void expect_end() const;
  const std::string& what() const { return what_; }

 private:
  const std::uint8_t* take(std::size_t n);

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> data);

}  // namespace bvood::binio
