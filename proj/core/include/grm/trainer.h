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

#ifndef GRM_TRAINER_H_
#define GRM_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grm/checkpoint.h"
#include "grm/embeddings.h"
#include "grm/grad_check.h"
#include "grm/losses.h"
#include "grm/train_config.h"

namespace grm {

struct StepRecord {
  std::uint64_t step = 0;
  LossReport report;
};

struct EvalRecord {
  std::uint64_t step = 0;
  double i2t_r1 = 0.0;
  double t2i_r1 = 0.0;
  double rsum = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // final state, or last good state on abort
  std::vector<StepRecord> log;
  std::vector<EvalRecord> evals;
  bool aborted = false;
  std::string diagnostic;
};

// Called after every optimizer step and at every epoch boundary.
struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(const Checkpoint&, std::size_t epoch)> on_epoch;
};

// Trains on paired batches (images[i] matches texts[i]). Resuming requires
// a checkpoint taken at an epoch boundary; the resumed run then matches an
// uninterrupted one exactly. A non-finite loss stops training and returns
// the state from before that step, with the offending term named.
TrainResult Train(const TokenBatch& images, const TokenBatch& texts, const TrainConfig& config,
                  const Checkpoint* resume = nullptr, const TrainHooks& hooks = {});

// One JSON object with keys step, l_con_ori, l_con_key, l_con_unc, l_recon,
// l_kl, l_ent, total.
std::string StepRecordJson(const StepRecord& record);

struct ProbeSizes {
  std::size_t batch = 4;
  std::size_t image_len = 6;
  std::size_t text_len = 4;
  std::size_t dim = 8;
  std::size_t num_prompts = 3;
};

struct GroupGradient {
  std::string group;
  double max_relative_error = 0.0;
  std::vector<std::string> offending;  // "<param>[<flat index>]"
};

struct GradientReport {
  std::vector<GroupGradient> groups;
  double tolerance = 1e-4;
  bool passed = false;
};

// Central-difference check of the full objective on a small synthetic
// probe with the stochastic draws frozen.
GradientReport VerifyGradients(const TrainConfig& config, const ProbeSizes& probe = {},
                               double tolerance = 1e-4, double h = 1e-5);

}  // namespace grm

#endif  // GRM_TRAINER_H_
