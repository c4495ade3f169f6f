/* Copyright 2026 The CILF Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");

You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef CILF_ERROR_HPP_
#define CILF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cilf {

// Base of every library error. `kind()` is the machine-parsable class the CLI
// prints on failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define CILF_DEFINE_ERROR(Name, tag)                    \
  class Name : public Error {                           \
   public:                                              \
    using Error::Error;                                 \
    const char* kind() const noexcept override { return tag; } \
  }

CILF_DEFINE_ERROR(ParseError, "parse_error");
CILF_DEFINE_ERROR(DataError, "data_error");
CILF_DEFINE_ERROR(ConfigError, "config_error");
CILF_DEFINE_ERROR(ArgumentError, "argument_error");
CILF_DEFINE_ERROR(NumericError, "numeric_error");
CILF_DEFINE_ERROR(IoError, "io_error");

#undef CILF_DEFINE_ERROR

}  // namespace cilf

#endif  // CILF_ERROR_HPP_
