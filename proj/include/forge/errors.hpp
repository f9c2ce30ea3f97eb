// Copyright 2026 The forge authors
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

namespace forge {

enum class ErrorCode {
  CoincidentPoints,
  DegeneratePolygon,
  SpanTooShort,
  OutOfBounds,
  DegenerateBounds,
  NonUniformSampling,
  ShapeMismatch,
  MissingGradient,
  EmptyDataset,
  WindowTooLarge,
  LengthMismatch,
  CovarianceNotPSD,
  FormatVersionMismatch,
  CorruptFile,
  NoTrajectoriesSurvive,
  ParseError,
  ConfigInvalid,
  InvalidArgument,
  IoFailure,
};

inline const char* error_code_name(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::CoincidentPoints: return "CoincidentPoints";
    case ErrorCode::DegeneratePolygon: return "DegeneratePolygon";
    case ErrorCode::SpanTooShort: return "SpanTooShort";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DegenerateBounds: return "DegenerateBounds";
    case ErrorCode::NonUniformSampling: return "NonUniformSampling";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::CovarianceNotPSD: return "CovarianceNotPSD";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::NoTrajectoriesSurvive: return "NoTrajectoriesSurvive";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "UnknownError";
}

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for errors caused by bad user input (config, CLI arguments,
  /// malformed files) rather than a failure at runtime. The CLI maps these
  /// to exit code 2.
  bool is_validation() const noexcept {
    return code_ == ErrorCode::ParseError || code_ == ErrorCode::ConfigInvalid ||
           code_ == ErrorCode::InvalidArgument;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace forge
