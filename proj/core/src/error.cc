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

#include "dpfermi/error.h"

namespace dpfermi {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid argument";
    case ErrorCode::kSchema:
      return "schema error";
    case ErrorCode::kParse:
      return "parse error";
    case ErrorCode::kEmptyDataset:
      return "empty dataset";
    case ErrorCode::kDegenerateGroup:
      return "degenerate group";
    case ErrorCode::kDegenerateConditional:
      return "degenerate conditional";
    case ErrorCode::kNumeric:
      return "numeric error";
    case ErrorCode::kSingularity:
      return "singularity";
    case ErrorCode::kCalibration:
      return "calibration error";
    case ErrorCode::kDivergence:
      return "divergence";
    case ErrorCode::kIo:
      return "i/o error";
  }
  return "error";
}

}  // namespace dpfermi
