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

#include "grm/optimizer.h"

#include <cmath>

#include "grm/errors.h"

namespace grm {

double GlobalGradNorm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

Optimizer::Optimizer(const TrainConfig& config, std::vector<Parameter*> params)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      wd_(config.weight_decay),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_epsilon),
      clip_norm_(config.clip_norm),
      params_(std::move(params)) {
  if (kind_ == OptimizerKind::kAdamW) {
    for (const Parameter* p : params_) {
      state_.first_moment.emplace_back(p->value.shape());
      state_.second_moment.emplace_back(p->value.shape());
    }
  }
}

void Optimizer::Restore(OptimizerState state) {
  if (kind_ == OptimizerKind::kAdamW) {
    if (state.first_moment.size() != params_.size() ||
        state.second_moment.size() != params_.size()) {
      Throw(ErrorCode::kCorruptPayload, "optimizer state does not match parameter list");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (state.first_moment[i].shape() != params_[i]->value.shape() ||
          state.second_moment[i].shape() != params_[i]->value.shape()) {
        Throw(ErrorCode::kCorruptPayload, "optimizer moment shape mismatch for " +
                                              params_[i]->name);
      }
    }
  }
  state_ = std::move(state);
}

double Optimizer::Step() {
  const double norm = GlobalGradNorm(params_);
  double grad_scale = 1.0;
  if (clip_norm_ > 0.0 && norm > clip_norm_) grad_scale = clip_norm_ / norm;
  ++state_.steps;

  if (kind_ == OptimizerKind::kSgd) {
    for (Parameter* p : params_) {
      auto w = p->value.mutable_data();
      const auto g = p->grad.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (wd_ != 0.0) w[i] *= 1.0 - lr_ * wd_;
        w[i] -= lr_ * grad_scale * g[i];
      }
    }
    return norm;
  }

  const double t = static_cast<double>(state_.steps);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter* p = params_[k];
    auto w = p->value.mutable_data();
    const auto g = p->grad.data();
    auto m = state_.first_moment[k].mutable_data();
    auto v = state_.second_moment[k].mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = grad_scale * g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] *= 1.0 - lr_ * wd_;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
  return norm;
}

}  // namespace grm
