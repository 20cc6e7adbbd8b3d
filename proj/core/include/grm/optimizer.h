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

#ifndef GRM_OPTIMIZER_H_
#define GRM_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include "grm/autograd.h"
#include "grm/train_config.h"

namespace grm {

struct OptimizerState {
  std::uint64_t steps = 0;
  // One moment tensor per parameter, in parameter order. Empty for SGD.
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// SGD or AdamW over a fixed parameter list. AdamW applies decoupled decay
// first (theta *= 1 - lr*wd), then the bias-corrected Adam step.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::vector<Parameter*> params);

  // Consumes Parameter::grad. Returns the pre-clip global gradient norm.
  double Step();

  const OptimizerState& state() const { return state_; }
  void Restore(OptimizerState state);

 private:
  OptimizerKind kind_;
  double lr_, wd_, beta1_, beta2_, eps_, clip_norm_;
  std::vector<Parameter*> params_;
  OptimizerState state_;
};

double GlobalGradNorm(const std::vector<Parameter*>& params);

}  // namespace grm

#endif  // GRM_OPTIMIZER_H_
