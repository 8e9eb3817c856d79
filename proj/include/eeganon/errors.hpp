// Copyright 2026 The eeganon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eeganon {

enum class ErrorCode {
  kParse,
  kUnsupportedFormat,
  kInvalidCalibration,
  kRange,
  kValidation,
  kContract,
  kNumericFailure,
  kIncompatibleCheckpoint,
  kDivergence,
  kEmptySleep,
  kDependency,
  kConfig,
  kIo,
  kInvalidArgument,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kInvalidCalibration: return "invalid calibration";
    case ErrorCode::kRange: return "range error";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kNumericFailure: return "numeric failure";
    case ErrorCode::kIncompatibleCheckpoint: return "incompatible checkpoint";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kEmptySleep: return "empty sleep period";
    case ErrorCode::kDependency: return "missing dependency";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "I/O error";
    case ErrorCode::kInvalidArgument: return "invalid argument";
  }
  return "error";
}

// Single exception type for the library. `location` carries a byte offset
// for parse errors and a layer index for numeric failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> location = std::nullopt)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        message_(message),
        location_(location) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }
  std::optional<std::int64_t> location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::int64_t> location_;
};

}  // namespace eeganon
