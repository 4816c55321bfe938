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

#include <stdexcept>
#include <string>

namespace bvood {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the domain an operation accepts (bad feature value,
/// dimension mismatch, empty input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite numbers or a failed factorization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Persisted artifact is unreadable: bad magic, version, truncation, checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was invoked before the stage producing its input.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace bvood
