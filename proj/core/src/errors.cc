/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "grm/errors.h"

namespace grm {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension_error";
    case ErrorCode::kDomain: return "domain_error";
    case ErrorCode::kDegenerateSlice: return "degenerate_slice_error";
    case ErrorCode::kParameter: return "parameter_error";
    case ErrorCode::kContract: return "contract_error";
    case ErrorCode::kDeterminism: return "determinism_error";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncated: return "truncated_payload";
    case ErrorCode::kInconsistentShape: return "inconsistent_shape";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kCorruptPayload: return "corrupt_payload";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kNumerical: return "numerical_error";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown_error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code) {}

void Throw(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace grm
