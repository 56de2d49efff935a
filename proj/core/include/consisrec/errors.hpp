// Copyright 2026 The ConsisRec Authors. All Rights Reserved.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace consisrec {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyper-parameter or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller violated a precondition (wrong node kind, shape mismatch, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Index outside the valid range of a graph or dataset.
class LookupError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what),
        path_(path),
        line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// Raised by the optimizer before any parameter is modified.
class NonFiniteGradientError : public Error {
 public:
  explicit NonFiniteGradientError(const std::string& param)
      : Error("non-finite gradient in " + param), param_(param) {}

  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

}  // namespace consisrec
