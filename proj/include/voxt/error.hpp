// Copyright 2026 The voxt Authors
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
#include <string_view>

namespace voxt {

// Base for every error thrown by the library. `kind()` is a stable machine
// readable tag used by the CLI for structured diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

enum class IngestFault { kOpen, kBadMagic, kTruncated, kNonFinite, kMalformed };

std::string_view to_string(IngestFault fault);

// Raised while reading feature files, manifests and other external inputs.
class IngestError : public Error {
 public:
  IngestError(IngestFault fault, const std::string& what)
      : Error(std::string("ingest.") + std::string(to_string(fault)), what), fault_(fault) {}

  IngestFault fault() const noexcept { return fault_; }

 private:
  IngestFault fault_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

// Artifact written by an incompatible format version, or paired artifacts
// (vocab / codebook / checkpoint) that do not belong together.
class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error("version", what) {}
};

class CorruptError : public Error {
 public:
  explicit CorruptError(const std::string& what) : Error("corrupt", what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

}  // namespace voxt
