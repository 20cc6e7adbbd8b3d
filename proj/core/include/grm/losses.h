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

#ifndef GRM_LOSSES_H_
#define GRM_LOSSES_H_

#include <string>

#include "grm/adapter.h"
#include "grm/autograd.h"
#include "grm/region.h"
#include "grm/similarity.h"

namespace grm {

enum class NegativeMode { kSumAll, kHardest };
enum class EntropySource { kRaw, kNormalized };

struct LossWeights {
  // Multi-level weights; a + b + c must equal 1.
  double a = 0.4;
  double b = 0.4;
  double c = 0.2;
  double alpha = 0.2;
  double lambda_recon = 0.1;
  double lambda_reg = 0.1;
  NegativeMode negative_mode = NegativeMode::kSumAll;
  EntropySource entropy_source = EntropySource::kRaw;
  // Divide the KL sum by B*d (true) or by B only.
  bool kl_average_over_dim = true;

  // Ablation switches: a disabled term contributes 0 and is reported as 0.
  bool use_con_ori = true;
  bool use_con_key = true;
  bool use_con_unc = true;
  bool use_recon = true;
  bool use_kl = true;
  bool use_entropy = true;

  void Validate() const;
};

struct LossReport {
  double l_con_ori = 0.0;
  double l_con_key = 0.0;
  double l_con_unc = 0.0;
  double l_con = 0.0;
  double l_recon = 0.0;
  double l_kl = 0.0;
  double l_ent = 0.0;
  double l_reg = 0.0;
  double total = 0.0;

  // Name of the first non-finite field, or empty.
  std::string FirstNonFinite() const;
};

// Hinge ranking loss over an [N x N] similarity matrix whose diagonal holds
// the matched pairs. kSumAll sums every violating negative in both
// directions; kHardest keeps only the largest per query. Divided by N.
Var Contrastive(Var similarity, double alpha, NegativeMode mode);

double CombineLevels(double l_ori, double l_key, double l_unc, const LossWeights& weights);

// mean_b || mean_k u[b,k] - masked-mean_l v_hat[b,l] ||^2
Var Reconstruction(Var u, Var v_hat, const Mask& mask);

// -1/2 sum (1 + log_var - mu^2 - exp(log_var)) over K and d, divided by
// B*d (average_over_dim) or B.
Var KlDivergence(Var mu, Var log_var, bool average_over_dim = true);

// -(1/K) sum_k sum_l a log a, averaged over the batch. Entries must lie in
// [0, 1]; zeros contribute nothing.
Var EntropyRegularizer(Var attention);

struct LossTerms {
  Var total;
  LossReport report;
};

// Assembles the full objective. `regions` may be null when region prompting
// is bypassed, in which case the region terms are reported as 0.
LossTerms TotalLoss(const SimilarityLevels& levels, const GaussianRegions* regions,
                    const GatedTokens& gated_image, const Mask& image_mask,
                    const LossWeights& weights);

}  // namespace grm

#endif  // GRM_LOSSES_H_
