// include/avsep/error.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef AVSEP_ERROR_HPP_
#define AVSEP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace avsep {

// Base class for all domain errors. The kind string matches the error
// vocabulary used throughout the toolkit so callers can branch on it
// without catching every concrete type.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define AVSEP_DEFINE_ERROR(Name)                                      \
  struct Name : Error {                                               \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}      \
  }

AVSEP_DEFINE_ERROR(InvalidInput);
AVSEP_DEFINE_ERROR(ShapeError);
AVSEP_DEFINE_ERROR(SynthesisError);
AVSEP_DEFINE_ERROR(DegenerateSource);
AVSEP_DEFINE_ERROR(ParseError);
AVSEP_DEFINE_ERROR(MissingAsset);
AVSEP_DEFINE_ERROR(DuplicateId);
AVSEP_DEFINE_ERROR(SamplingExhausted);
AVSEP_DEFINE_ERROR(IoError);
AVSEP_DEFINE_ERROR(ConfigError);
AVSEP_DEFINE_ERROR(NumericalError);
AVSEP_DEFINE_ERROR(Diverged);
AVSEP_DEFINE_ERROR(IncompatibleCheckpoint);
AVSEP_DEFINE_ERROR(ClipTooShort);
AVSEP_DEFINE_ERROR(AlignmentError);
AVSEP_DEFINE_ERROR(DegenerateReference);
AVSEP_DEFINE_ERROR(SilentReference);

#undef AVSEP_DEFINE_ERROR

}  // namespace avsep

#endif  // AVSEP_ERROR_HPP_
