// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VOICECLOAK_ERRORS_HPP_
#define VOICECLOAK_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace voicecloak {

enum class ErrorCode {
  kInvalidParameter,
  kMalformedFile,
  kDimensionMismatch,
  kDegenerateCorpus,
  kUnknownLabel,
  kNonFiniteInput,
  kNonFiniteActivation,
  kInsufficientData,
  kEmptyInput,
  kZeroNormInput,
  kMissingClass,
  kMissingUtterance,
  kUnknownSpeaker,
  kShapeMismatch,
  kIoError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParameter: return "invalid-parameter";
    case ErrorCode::kMalformedFile: return "malformed-file";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kDegenerateCorpus: return "degenerate-corpus";
    case ErrorCode::kUnknownLabel: return "unknown-label";
    case ErrorCode::kNonFiniteInput: return "non-finite-input";
    case ErrorCode::kNonFiniteActivation: return "non-finite-activation";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kZeroNormInput: return "zero-norm-input";
    case ErrorCode::kMissingClass: return "missing-class";
    case ErrorCode::kMissingUtterance: return "missing-utterance";
    case ErrorCode::kUnknownSpeaker: return "unknown-speaker";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown-error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace voicecloak

#endif  // VOICECLOAK_ERRORS_HPP_
