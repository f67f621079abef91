// Copyright 2026 The wsireg Authors
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

#ifndef WSIREG_ERROR_HPP_
#define WSIREG_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace wsireg {

enum class ErrorCode {
  AllBlack,
  ZeroVariance,
  InsufficientOverlap,
  NoValidPlacement,
  ShapeMismatch,
  NonFiniteLoss,
  ParseError,
  EmptyLandmarks,
  EmptyInput,
  EmptyCohort,
  InvalidSpec,
  InvalidConfig,
  OutOfGrid,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AllBlack: return "AllBlack";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::NoValidPlacement: return "NoValidPlacement";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyLandmarks: return "EmptyLandmarks";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::OutOfGrid: return "OutOfGrid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 protected:
  struct Verbatim {};
  Error(ErrorCode code, const std::string& message, Verbatim) : std::runtime_error(message), code_(code) {}

 private:
  ErrorCode code_;
};

}  // namespace wsireg

#endif  // WSIREG_ERROR_HPP_
