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

#ifndef GRM_SIMILARITY_H_
#define GRM_SIMILARITY_H_

#include "grm/autograd.h"
#include "grm/tensor.h"

namespace grm {

// kCosine L2-normalises each token before the dot product; kDot uses the
// tokens as given.
enum class TokenMetric { kCosine, kDot };

// Token map S = text . image^T, shaped [L_t x L_i]. Masks are not applied.
Tensor TokenSimilarityMap(const Tensor& image_tokens, const Tensor& text_tokens,
                          TokenMetric metric = TokenMetric::kCosine);

// Bidirectional max-mean similarity of one image/text pair:
// mean over valid text tokens of the best valid image token, plus mean over
// valid image tokens of the best valid text token.
// image_tokens is [L_i x d], image_mask [L_i]; likewise for text.
double PairSimilarity(const Tensor& image_tokens, const Mask& image_mask,
                      const Tensor& text_tokens, const Mask& text_mask,
                      TokenMetric metric = TokenMetric::kCosine);

// s[i][j] = PairSimilarity(image i, text j) for [N_i x L_i x d] images and
// [N_t x L_t x d] texts, recorded as one differentiable op. Max terms route
// gradient to the lowest-index maximiser.
Var BatchSimilarity(Var images, const Mask& image_mask, Var texts, const Mask& text_mask,
                    TokenMetric metric);

// Instance-level similarity for the three feature levels (original,
// adapter-gated, region/uncertainty), each [N_i x N_t]; entry [i][j] scores
// image i against text j.
struct SimilarityLevels {
  Var ori;
  Var key;
  Var unc;
};

}  // namespace grm

#endif  // GRM_SIMILARITY_H_
