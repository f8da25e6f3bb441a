//
// Copyright 2026 The dpfermi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPFERMI_ERROR_H_
#define DPFERMI_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpfermi {

enum class ErrorCode {
  kInvalidArgument,
  kSchema,
  kParse,
  kEmptyDataset,
  kDegenerateGroup,
  kDegenerateConditional,
  kNumeric,
  kSingularity,
  kCalibration,
  kDivergence,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported through this exception. The code lets
// callers (the CLI in particular) map failures onto exit statuses without
// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the optimizers when an iterate stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(long iteration, const std::string& what)
      : Error(ErrorCode::kDivergence,
              "non-finite " + what + " at iteration " +
                  std::to_string(iteration)),
        iteration_(iteration) {}

  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace dpfermi

#endif  // DPFERMI_ERROR_H_
