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

#include "bvood/binio.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "bvood/error.hpp"

namespace bvood::binio {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Writer::bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }

void Writer::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::f64s(std::span<const double> values) {
  buf_.reserve(buf_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void Writer::save(const std::filesystem::path& path) const { write_file(path, buf_); }

void Writer::save_with_checksum(const std::filesystem::path& path) const {
  Writer out = *this;
  out.u64(fnv1a(buf_));
  write_file(path, out.buf_);
}

Reader::Reader(std::vector<std::uint8_t> data, std::string what)
    : data_(std::move(data)), what_(std::move(what)) {}

Reader Reader::open(const std::filesystem::path& path) { return Reader(read_file(path), path.string()); }

Reader Reader::open_checked(const std::filesystem::path& path) {
  auto data = read_file(path);
  if (data.size() < 8) throw FormatError(path.string() + ": truncated file");
  const std::size_t body = data.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t{data[body + i]} << (8 * i);
  if (stored != fnv1a(std::span(data.data(), body))) {
    throw FormatError(path.string() + ": checksum mismatch");
  }
  data.resize(body);
  return Reader(std::move(data), path.string());
}

const std::uint8_t* Reader::take(std::size_t n) {
  if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated data");
  const std::uint8_t* p = data_.data() + pos_;
  pos_ += n;
  return p;
}

void Reader::expect_magic(std::string_view magic) {
  const auto* p = take(magic.size());
  if (!std::equal(magic.begin(), magic.end(), p)) {
    throw FormatError(what_ + ": bad magic, expected '" + std::string(magic) + "'");
  }
}

std::uint16_t Reader::u16() {
  const auto* p = take(2);
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t Reader::u32() {
  const auto* p = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  const auto* p = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> Reader::f64s(std::size_t count) {
  if ((data_.size() - pos_) / 8 < count) throw FormatError(what_ + ": truncated data");
  std::vector<double> out(count);
  for (auto& v : out) v = f64();
  return out;
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  const auto* p = take(n);
  return std::string(reinterpret_cast<const char*>(p), n);
}

void Reader::expect_end() const {
  if (!at_end()) throw FormatError(what_ + ": trailing bytes");
}

}  // namespace bvood::binio
