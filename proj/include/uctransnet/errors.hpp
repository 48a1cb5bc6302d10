/*
 * Copyright 2026 The UCTransNet-cpp Authors
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

namespace uct {

// Root of every error the library throws. Callers that only care about
// success/failure catch this; the CLI maps ConfigError to exit code 1 and
// everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Model or experiment configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Two feature maps meeting at a concatenation or gate disagree in shape.
class FusionError : public Error {
 public:
  using Error::Error;
};

// Input data violates its contract (bad labels, mismatched image sizes).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation engine (non-scalar seed and the like).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given inputs (e.g. Hausdorff on an empty mask).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { bad_magic, bad_crc, unsupported_version, io, mismatch };

  CheckpointError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct BadMagicError : CheckpointError {
  explicit BadMagicError(const std::string& what) : CheckpointError(Kind::bad_magic, what) {}
};

struct BadCrcError : CheckpointError {
  explicit BadCrcError(const std::string& what) : CheckpointError(Kind::bad_crc, what) {}
};

struct UnsupportedVersionError : CheckpointError {
  explicit UnsupportedVersionError(const std::string& what) : CheckpointError(Kind::unsupported_version, what) {}
};

}  // namespace uct
