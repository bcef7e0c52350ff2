/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef EXITLAB_ERROR_HPP_
#define EXITLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace exitlab {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument or configuration value was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Vector/matrix dimensions disagree with each other or with a config.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A distance was requested against a prototype that was never set.
class UninitializedPrototypeError : public Error {
 public:
  using Error::Error;
};

// File content could not be decoded (truncated, bad checksum, bad magic).
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

// Checkpoint written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Malformed line in a text dataset; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Filesystem problems (missing directory, refusing to overwrite, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace exitlab

#endif  // EXITLAB_ERROR_HPP_
