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

#ifndef GRM_ADAPTER_H_
#define GRM_ADAPTER_H_

#include <cstddef>
#include <string>
#include <vector>

#include "grm/autograd.h"
#include "grm/embeddings.h"
#include "grm/ops.h"
#include "grm/random.h"

namespace grm {

// Two-layer token scorer followed by a two-way Gumbel-Softmax gate. The same
// structure backs the significance-aware (image) and granularity-aware (text)
// adapters; only the parameter values differ.
struct AdapterParams {
  Parameter w1;  // [d x d_h]
  Parameter b1;  // [d_h]
  Parameter w2;  // [d_h x 2]
  Parameter b2;  // [2]
  double tau = 1.0;
  // Biases are an extension over the bias-free scorer; with use_bias off they
  // stay at zero and are neither applied nor trained.
  bool use_bias = true;

  static AdapterParams Create(const std::string& prefix, std::size_t dim,
                              std::size_t hidden, double tau, bool use_bias, Rng& rng);

  std::size_t input_dim() const { return w1.value.dim(0); }
  std::size_t hidden_dim() const { return w1.value.dim(1); }

  std::vector<Parameter*> Trainable();
  std::vector<Parameter*> All();
};

struct BoundAdapter {
  Var w1, b1, w2, b2;
  double tau = 1.0;
  bool use_bias = true;
};

BoundAdapter Bind(Tape& tape, AdapterParams& params);

struct GatedTokens {
  Var features;  // [B x L x d], each token scaled by its gate
  Var gate;      // [B x L], keep-probability, exactly 0 on masked tokens
};

// Noise tensor for one adapter call, shaped [B*L x 2].
Tensor SampleAdapterNoise(std::size_t batch, std::size_t length, Rng& rng);

// logits = W2 . GELU(W1 . x + b1) + b2 per token; gate = column 1 of the
// Gumbel-Softmax over logits (plain softmax when `gumbel_noise` is null).
GatedTokens Adapt(Var tokens, const Mask& mask, const BoundAdapter& params,
                  const Tensor* gumbel_noise);

// Identity gating used when an adapter is ablated: gate = mask.
GatedTokens PassThrough(Var tokens, const Mask& mask);

// Value-level entry point: binds params on a private tape.
struct GatedValues {
  Tensor features;
  Tensor gate;
};
GatedValues Adapt(const TokenBatch& tokens, AdapterParams& params, GateMode mode, Rng& rng);

}  // namespace grm

#endif  // GRM_ADAPTER_H_
