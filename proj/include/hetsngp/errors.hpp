/*
 * Copyright 2026 The HetSNGP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HETSNGP_ERRORS_HPP_
#define HETSNGP_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetsngp {

enum class ErrorCode {
  kDimensionMismatch,
  kNotPositiveDefinite,
  kTapeMismatch,
  kAlreadyFinalized,
  kNotFinalized,
  kNonFiniteLoss,
  kEmptySchedule,
  kInvalidConfig,
  kHeterogeneousEnsemble,
  kEmptyInput,
  kOneClassOnly,
  kParseError,
  kMissingColumn,
  kNonNumericFeature,
  kCheckpointError,
  kIoError,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kTapeMismatch: return "TapeMismatch";
    case ErrorCode::kAlreadyFinalized: return "AlreadyFinalized";
    case ErrorCode::kNotFinalized: return "NotFinalized";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptySchedule: return "EmptySchedule";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kHeterogeneousEnsemble: return "HeterogeneousEnsemble";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kOneClassOnly: return "OneClassOnly";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericFeature: return "NonNumericFeature";
    case ErrorCode::kCheckpointError: return "CheckpointError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

// All library failures are reported as Error; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace hetsngp

#endif  // HETSNGP_ERRORS_HPP_
