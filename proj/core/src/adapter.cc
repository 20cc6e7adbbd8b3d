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

#include "grm/adapter.h"

#include <cmath>

#include "grm/errors.h"

namespace grm {

AdapterParams AdapterParams::Create(const std::string& prefix, std::size_t dim,
                                    std::size_t hidden, double tau, bool use_bias, Rng& rng) {
  if (dim == 0 || hidden == 0) Throw(ErrorCode::kParameter, "adapter widths must be positive");
  if (!(tau > 0.0)) Throw(ErrorCode::kParameter, "adapter tau must be > 0");
  AdapterParams p;
  p.w1 = Parameter(prefix + ".w1", rng.NormalTensor({dim, hidden}, 1.0 / std::sqrt(double(dim))));
  p.b1 = Parameter(prefix + ".b1", Tensor({hidden}));
  p.w2 = Parameter(prefix + ".w2", rng.NormalTensor({hidden, 2}, 1.0 / std::sqrt(double(hidden))));
  p.b2 = Parameter(prefix + ".b2", Tensor({2}));
  p.tau = tau;
  p.use_bias = use_bias;
  p.b1.trainable = use_bias;
  p.b2.trainable = use_bias;
  return p;
}

std::vector<Parameter*> AdapterParams::Trainable() {
  if (use_bias) return {&w1, &b1, &w2, &b2};
  return {&w1, &w2};
}

std::vector<Parameter*> AdapterParams::All() { return {&w1, &b1, &w2, &b2}; }

BoundAdapter Bind(Tape& tape, AdapterParams& params) {
  return BoundAdapter{tape.Leaf(params.w1), tape.Leaf(params.b1), tape.Leaf(params.w2),
                      tape.Leaf(params.b2), params.tau, params.use_bias};
}

Tensor SampleAdapterNoise(std::size_t batch, std::size_t length, Rng& rng) {
  return SampleGumbelNoise({batch * length, 2}, rng);
}

GatedTokens Adapt(Var tokens, const Mask& mask, const BoundAdapter& params,
                  const Tensor* gumbel_noise) {
  const Shape& shape = tokens.shape();
  if (shape.size() != 3) {
    Throw(ErrorCode::kParameter, "adapter expects [B x L x d] tokens, got " + ShapeToString(shape));
  }
  const std::size_t B = shape[0], L = shape[1], d = shape[2];
  if (params.w1.shape()[0] != d) {
    Throw(ErrorCode::kParameter, "adapter input width " + std::to_string(params.w1.shape()[0]) +
                                     " does not match token width " + std::to_string(d));
  }
  if (mask.shape() != Shape{B, L}) {
    Throw(ErrorCode::kParameter, "adapter mask " + ShapeToString(mask.shape()) +
                                     " does not match tokens " + ShapeToString(shape));
  }
  Tape& tape = *tokens.tape();
  Var flat = Reshape(tokens, {B * L, d});
  Var hidden = Matmul(flat, params.w1);
  if (params.use_bias) hidden = AddBias(hidden, params.b1);
  hidden = Activate(Activation::kGelu, hidden);
  Var logits = Matmul(hidden, params.w2);
  if (params.use_bias) logits = AddBias(logits, params.b2);
  Var probs = GumbelSoftmax(logits, params.tau, gumbel_noise);
  Var keep = SelectColumn(probs, 1);
  Var gate = Mul(keep, tape.Constant(mask.AsTensor().Reshaped({B * L})));
  gate = Reshape(gate, {B, L});
  return GatedTokens{ScaleRows(tokens, gate), gate};
}

GatedTokens PassThrough(Var tokens, const Mask& mask) {
  Var gate = tokens.tape()->Constant(mask.AsTensor());
  return GatedTokens{ScaleRows(tokens, gate), gate};
}

GatedValues Adapt(const TokenBatch& tokens, AdapterParams& params, GateMode mode, Rng& rng) {
  tokens.Validate();
  Tape tape;
  BoundAdapter bound = Bind(tape, params);
  Var input = tape.Constant(tokens.embeddings);
  Tensor noise;
  const Tensor* noise_ptr = nullptr;
  if (mode == GateMode::kStochastic) {
    noise = SampleAdapterNoise(tokens.batch(), tokens.length(), rng);
    noise_ptr = &noise;
  }
  GatedTokens gated = Adapt(input, tokens.mask, bound, noise_ptr);
  return GatedValues{gated.features.value(), gated.gate.value()};
}

}  // namespace grm
