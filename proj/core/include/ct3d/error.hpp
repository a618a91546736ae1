/*
 * Copyright 2026 The ct3d Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace ct3d {

/// Base class of every error thrown by the library. `kind()` is a short
/// machine-readable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error("parameter", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct MigrationError : Error {
  explicit MigrationError(const std::string& what) : Error("migration", what) {}
};

struct TrainingDiverged : Error {
  explicit TrainingDiverged(const std::string& what) : Error("diverged", what) {}
};

}  // namespace ct3d
