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

#ifndef GRM_SWEEP_H_
#define GRM_SWEEP_H_

#include <string>
#include <string_view>
#include <vector>

#include "grm/embeddings.h"
#include "grm/eval.h"
#include "grm/train_config.h"

namespace grm {

enum class SweepAxis { kNumPrompts, kAbcWeights, kTau, kAblationArm };

SweepAxis ParseSweepAxis(std::string_view name);
std::string_view SweepAxisName(SweepAxis axis);

// The six (a, b) combinations of the weight study; c = 1 - a - b.
std::vector<std::string> WeightStudyValues();

// Copy of `base` with one sweep value applied. Values are "5" for K,
// "a:b" or "a:b:c" for weights, "0.5" for tau and an arm name such as
// "wo_rp" or "w/o RP" for ablations.
TrainConfig ApplySweepValue(const TrainConfig& base, SweepAxis axis, std::string_view value);

struct SweepRow {
  std::string axis;
  std::string value;
  TrainConfig config;
  std::string arm = "full";
  std::size_t steps = 0;
  double initial_total = 0.0;
  LossReport final_report;
  std::vector<RetrievalReport> retrieval;  // combined level, both directions
  bool aborted = false;
};

struct SweepTable {
  std::vector<SweepRow> rows;

  static const std::vector<std::string>& Columns();
  std::string ToCsv() const;
};

// Trains one model per value from the same seed and evaluates it on the
// training pairs.
SweepTable RunSweep(const TrainConfig& base, const TokenBatch& images, const TokenBatch& texts,
                    SweepAxis axis, const std::vector<std::string>& values);

}  // namespace grm

#endif  // GRM_SWEEP_H_
