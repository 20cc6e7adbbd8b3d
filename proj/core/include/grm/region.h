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

#ifndef GRM_REGION_H_
#define GRM_REGION_H_

#include <cstddef>
#include <vector>

#include "grm/autograd.h"
#include "grm/ops.h"
#include "grm/random.h"
#include "grm/tensor.h"

namespace grm {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Learnable region prompts plus the log-variance head. With phi_hidden == 0
// the head is one affine map d -> d; otherwise d -> phi_hidden -> d with GELU.
struct RegionParams {
  Parameter prompts;  // [K x d]
  Parameter phi_w;    // [d x d] or [d x h]
  Parameter phi_b;    // [d]     or [h]
  Parameter phi_w2;   // [h x d], two-layer head only
  Parameter phi_b2;   // [d],     two-layer head only
  std::size_t phi_hidden = 0;

  static RegionParams Create(std::size_t num_prompts, std::size_t dim, std::size_t phi_hidden,
                             Rng& rng);

  std::size_t num_prompts() const { return prompts.value.dim(0); }
  std::size_t dim() const { return prompts.value.dim(1); }
  std::vector<Parameter*> Trainable();
};

struct BoundRegion {
  Var prompts, phi_w, phi_b, phi_w2, phi_b2;
  bool two_layer = false;
};

BoundRegion Bind(Tape& tape, RegionParams& params);

struct RegionAttention {
  Var raw;   // [B x L x K], sigmoid affinities, 0 on masked patches
  Var norm;  // [B x L x K], each (b, k) column sums to 1 over patches
};

// Affinity between gated patches and L2-normalised prompts.
RegionAttention Attend(Var gated_features, const Mask& mask, Var prompts);

// mu[b, k] = sum_l norm[b, l, k] * features[b, l].
Var RegionMeans(Var attn_norm, Var gated_features);

// clamp(phi(mu), -10, 10), applied per region.
Var PredictLogVar(Var mu, const BoundRegion& params);

enum class NoiseMode { kPerPatch, kPerRegion };

// Standard normal draws shaped [B x L x K x d]. kPerRegion repeats one draw
// per (instance, region) across every patch.
Tensor SampleRegionNoise(std::size_t batch, std::size_t length, std::size_t num_prompts,
                         std::size_t dim, NoiseMode mode, Rng& rng);

// u_k = sum_l norm_lk (mu_k + eps_lk * exp(log_var_k / 2)). Because each
// column of `attn_norm` sums to one this is evaluated as
// mu_k + exp(log_var_k / 2) * sum_l norm_lk eps_lk. A null eps returns mu
// itself (the noiseless case).
Var SampleRegions(Var mu, Var log_var, Var attn_norm, const Tensor* eps);

struct GaussianRegions {
  Var mu;        // [B x K x d]
  Var log_var;   // [B x K x d]
  Var attn_raw;  // [B x L x K]
  Var attn_norm; // [B x L x K]
  Var u;         // [B x K x d]
};

}  // namespace grm

#endif  // GRM_REGION_H_
