// Copyright (c) 2026 The pcbreid Authors. All Rights Reserved.
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

namespace pcb {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or cross-field inconsistency.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or parameter shapes that do not fit together.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Missing, malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file name that does not follow the declared naming convention.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcb
