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

#ifndef GRM_GRAD_CHECK_H_
#define GRM_GRAD_CHECK_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grm/autograd.h"

namespace grm {

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Flat indices whose error reached `flag_tolerance`.
  std::vector<std::size_t> offending;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double MaxRelativeError() const;
  bool Passed(double tolerance) const { return MaxRelativeError() < tolerance; }
};

// Builds a scalar loss on the given tape; must bind parameters via
// tape.Leaf(...) and must be a deterministic function of their values.
using LossBuilder = std::function<Var(Tape&)>;

// Compares Tape::Backward against central differences (f(t+h) - f(t-h)) / 2h
// for every coordinate of every parameter. Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8). Throws a determinism error if two forward
// passes at the same point disagree.
GradCheckReport GradCheck(const LossBuilder& build_loss,
                          std::span<Parameter* const> params, double h = 1e-5,
                          double flag_tolerance = 1e-4);

double RelativeError(double analytic, double numeric);

}  // namespace grm

#endif  // GRM_GRAD_CHECK_H_
