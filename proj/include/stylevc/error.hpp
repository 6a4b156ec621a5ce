// Copyright 2026 The stylevc Authors.
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

namespace stylevc {

// Failure classes. The CLI maps each to a fixed exit code.
enum class ErrorKind {
  kConfig,     // bad configuration or incompatible checkpoint
  kInput,      // caller passed something outside an operation's contract
  kIo,         // filesystem / file format
  kNumeric,    // non-finite value during a computation
  kData,       // corpus / manifest invariant violated
  kParse,      // malformed text input
  kIntegrity,  // checksum or truncation failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define STYLEVC_DEFINE_ERROR(Name, Kind)                               \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Kind, what) {}      \
  };

STYLEVC_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
STYLEVC_DEFINE_ERROR(InputError, ErrorKind::kInput)
STYLEVC_DEFINE_ERROR(IoError, ErrorKind::kIo)
STYLEVC_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)
STYLEVC_DEFINE_ERROR(DataError, ErrorKind::kData)
STYLEVC_DEFINE_ERROR(ParseError, ErrorKind::kParse)
STYLEVC_DEFINE_ERROR(IntegrityError, ErrorKind::kIntegrity)

#undef STYLEVC_DEFINE_ERROR

}  // namespace stylevc
