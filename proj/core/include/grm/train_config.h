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

#ifndef GRM_TRAIN_CONFIG_H_
#define GRM_TRAIN_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "grm/losses.h"
#include "grm/model.h"

namespace grm {

enum class OptimizerKind { kSgd, kAdamW };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 0.0;  // 0 disables clip-by-global-norm
  std::uint64_t seed = 7;
  std::size_t eval_every = 0;  // 0 disables periodic retrieval metrics
  ModelConfig model;
  LossWeights weights;

  void Validate() const;
};

std::string TrainConfigToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(std::string_view json);

// Module and loss ablations.
enum class AblationArm {
  kFull,
  kNoSignificanceAdapter,  // "w/o SA"
  kNoGranularityAdapter,   // "w/o GA"
  kNoRegionPrompts,        // "w/o RP"
  kNoUncertainty,          // "w/o UM"
  kNoConOri,
  kNoConKey,
  kNoConUnc,
  kNoRecon,
  kNoReg,
};

// Accepts canonical names ("wo_sa") and the table spelling ("w/o SA").
AblationArm ParseAblationArm(std::string_view name);
std::string_view AblationArmName(AblationArm arm);
std::vector<AblationArm> AllAblationArms();
void ApplyAblation(AblationArm arm, TrainConfig& config);

std::string_view OptimizerName(OptimizerKind kind);
std::string_view NegativeModeName(NegativeMode mode);
std::string_view EntropySourceName(EntropySource source);
std::string_view NoiseModeName(NoiseMode mode);
OptimizerKind ParseOptimizer(std::string_view name);
NegativeMode ParseNegativeMode(std::string_view name);
EntropySource ParseEntropySource(std::string_view name);
NoiseMode ParseNoiseMode(std::string_view name);

}  // namespace grm

#endif  // GRM_TRAIN_CONFIG_H_
