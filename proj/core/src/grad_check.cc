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

#include "grm/grad_check.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "grm/errors.h"

namespace grm {

double GradCheckReport::MaxRelativeError() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

double RelativeError(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double Evaluate(const LossBuilder& build_loss) {
  Tape tape;
  const Var loss = build_loss(tape);
  return loss.value().item();
}

}  // namespace

GradCheckReport GradCheck(const LossBuilder& build_loss,
                          std::span<Parameter* const> params, double h,
                          double flag_tolerance) {
  if (!(h > 0.0)) Throw(ErrorCode::kParameter, "grad_check: h must be > 0");

  std::vector<Tensor> analytic;
  double reference = 0.0;
  {
    Tape tape;
    const Var loss = build_loss(tape);
    reference = loss.value().item();
    tape.Backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }
  const double again = Evaluate(build_loss);
  if (std::bit_cast<std::uint64_t>(again) != std::bit_cast<std::uint64_t>(reference)) {
    Throw(ErrorCode::kDeterminism, "grad_check: loss function is not deterministic");
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = *params[p];
    GradCheckEntry entry;
    entry.name = param.name;
    auto values = param.value.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double plus = Evaluate(build_loss);
      values[i] = original - h;
      const double minus = Evaluate(build_loss);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = RelativeError(a, numeric);
      if (err >= flag_tolerance) entry.offending.push_back(i);
      if (i == 0 || err > entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace grm
