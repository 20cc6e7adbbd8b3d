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

#include "grm/region.h"

#include <cmath>

#include "grm/errors.h"

namespace grm {

RegionParams RegionParams::Create(std::size_t num_prompts, std::size_t dim,
                                  std::size_t phi_hidden, Rng& rng) {
  if (num_prompts == 0 || dim == 0) {
    Throw(ErrorCode::kParameter, "region prompts need K >= 1 and d >= 1");
  }
  RegionParams p;
  p.phi_hidden = phi_hidden;
  p.prompts = Parameter("region.prompts", rng.NormalTensor({num_prompts, dim}));
  const std::size_t head = phi_hidden ? phi_hidden : dim;
  p.phi_w = Parameter("region.phi_w", rng.NormalTensor({dim, head}, 1.0 / std::sqrt(double(dim))));
  p.phi_b = Parameter("region.phi_b", Tensor({head}));
  if (phi_hidden) {
    p.phi_w2 = Parameter("region.phi_w2",
                         rng.NormalTensor({phi_hidden, dim}, 1.0 / std::sqrt(double(phi_hidden))));
    p.phi_b2 = Parameter("region.phi_b2", Tensor({dim}));
  }
  return p;
}

std::vector<Parameter*> RegionParams::Trainable() {
  if (phi_hidden) return {&prompts, &phi_w, &phi_b, &phi_w2, &phi_b2};
  return {&prompts, &phi_w, &phi_b};
}

BoundRegion Bind(Tape& tape, RegionParams& params) {
  BoundRegion bound;
  bound.prompts = tape.Leaf(params.prompts);
  bound.phi_w = tape.Leaf(params.phi_w);
  bound.phi_b = tape.Leaf(params.phi_b);
  if (params.phi_hidden) {
    bound.two_layer = true;
    bound.phi_w2 = tape.Leaf(params.phi_w2);
    bound.phi_b2 = tape.Leaf(params.phi_b2);
  }
  return bound;
}

RegionAttention Attend(Var gated_features, const Mask& mask, Var prompts) {
  const Shape& shape = gated_features.shape();
  if (shape.size() != 3) {
    Throw(ErrorCode::kDimension, "attend expects [B x L x d] features, got " + ShapeToString(shape));
  }
  const std::size_t B = shape[0], L = shape[1], d = shape[2];
  if (prompts.shape().size() != 2 || prompts.shape()[1] != d) {
    Throw(ErrorCode::kDimension, "prompts " + ShapeToString(prompts.shape()) +
                                     " do not match feature width " + std::to_string(d));
  }
  if (mask.shape() != Shape{B, L}) {
    Throw(ErrorCode::kDimension, "attend mask " + ShapeToString(mask.shape()) +
                                     " does not match " + ShapeToString(shape));
  }
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t l = 0; l < L && !any; ++l) any = mask.at(b, l);
    if (!any) {
      Throw(ErrorCode::kDegenerateSlice, "image " + std::to_string(b) + " has no valid patch");
    }
  }
  const std::size_t K = prompts.shape()[0];
  Tape& tape = *gated_features.tape();

  Var unit_prompts = L2NormalizeRows(prompts, 1e-12);
  Var scores = Matmul(Reshape(gated_features, {B * L, d}), Transpose(unit_prompts));
  Var affinity = Activate(Activation::kSigmoid, scores);

  Tensor row_mask({B * L, K});
  for (std::size_t r = 0; r < B * L; ++r) {
    for (std::size_t k = 0; k < K; ++k) row_mask[r * K + k] = mask[r] ? 1.0 : 0.0;
  }
  Var raw = Reshape(Mul(affinity, tape.Constant(std::move(row_mask))), {B, L, K});
  return RegionAttention{raw, NormalizeAlongAxis(raw, 1)};
}

Var RegionMeans(Var attn_norm, Var gated_features) {
  return BatchedMatmul(attn_norm, gated_features, /*transpose_a=*/true);
}

Var PredictLogVar(Var mu, const BoundRegion& params) {
  const Shape& shape = mu.shape();
  if (shape.size() != 3) Throw(ErrorCode::kDimension, "region means must be [B x K x d]");
  const std::size_t B = shape[0], K = shape[1], d = shape[2];
  Var h = AddBias(Matmul(Reshape(mu, {B * K, d}), params.phi_w), params.phi_b);
  if (params.two_layer) {
    h = AddBias(Matmul(Activate(Activation::kGelu, h), params.phi_w2), params.phi_b2);
  }
  if (h.shape()[1] != d) {
    Throw(ErrorCode::kDimension, "log-variance head must map back to width " + std::to_string(d));
  }
  return Reshape(Clamp(h, kLogVarMin, kLogVarMax), {B, K, d});
}

Tensor SampleRegionNoise(std::size_t batch, std::size_t length, std::size_t num_prompts,
                         std::size_t dim, NoiseMode mode, Rng& rng) {
  Tensor eps({batch, length, num_prompts, dim});
  auto data = eps.mutable_data();
  if (mode == NoiseMode::kPerPatch) {
    for (double& v : data) v = rng.Normal();
    return eps;
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < num_prompts; ++k) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double draw = rng.Normal();
        for (std::size_t l = 0; l < length; ++l) {
          data[((b * length + l) * num_prompts + k) * dim + j] = draw;
        }
      }
    }
  }
  return eps;
}

namespace {

// out[b, k, j] = sum_l attn[b, l, k] * eps[b, l, k, j]; differentiable in attn.
Var AggregateNoise(Var attn_norm, const Tensor& eps) {
  const Shape& as = attn_norm.shape();
  const std::size_t B = as[0], L = as[1], K = as[2];
  if (eps.rank() != 4 || eps.dim(0) != B || eps.dim(1) != L || eps.dim(2) != K) {
    Throw(ErrorCode::kDimension, "region noise " + ShapeToString(eps.shape()) +
                                     " does not match attention " + ShapeToString(as));
  }
  const std::size_t d = eps.dim(3);
  const Tensor& a = attn_norm.value();
  Tensor out({B, K, d});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < K; ++k) {
        const double w = a[(b * L + l) * K + k];
        const double* e = eps.data().data() + ((b * L + l) * K + k) * d;
        double* o = out.mutable_data().data() + (b * K + k) * d;
        for (std::size_t j = 0; j < d; ++j) o[j] += w * e[j];
      }
    }
  }
  return attn_norm.tape()->Record(
      OpKind::kNoiseAggregate, std::move(out), {attn_norm},
      [attn_norm, eps, B, L, K, d](const Tensor& g, Tape& tape) {
        Tensor* ga = tape.GradBuffer(attn_norm);
        if (!ga) return;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t k = 0; k < K; ++k) {
              const double* e = eps.data().data() + ((b * L + l) * K + k) * d;
              const double* gk = g.data().data() + (b * K + k) * d;
              double acc = 0.0;
              for (std::size_t j = 0; j < d; ++j) acc += gk[j] * e[j];
              (*ga)[(b * L + l) * K + k] += acc;
            }
          }
        }
      });
}

}  // namespace

Var SampleRegions(Var mu, Var log_var, Var attn_norm, const Tensor* eps) {
  if (mu.shape() != log_var.shape()) {
    Throw(ErrorCode::kDimension, "mu " + ShapeToString(mu.shape()) + " vs log_var " +
                                     ShapeToString(log_var.shape()));
  }
  if (!eps) return mu;
  if (eps->dim(3) != mu.shape()[2]) {
    Throw(ErrorCode::kDimension, "region noise width does not match mu");
  }
  Var spread = AggregateNoise(attn_norm, *eps);
  Var sigma = Activate(Activation::kExp, Scale(log_var, 0.5));
  return Add(mu, Mul(sigma, spread));
}

}  // namespace grm
