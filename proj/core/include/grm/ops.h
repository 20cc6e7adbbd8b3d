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

#ifndef GRM_OPS_H_
#define GRM_OPS_H_

#include <cstddef>
#include <optional>
#include <vector>

#include "grm/autograd.h"
#include "grm/random.h"
#include "grm/tensor.h"

namespace grm {

// [m x k] . [k x n] -> [m x n].
Var Matmul(Var a, Var b);

// Per-batch product of [B x m x k] and [B x k x n]. With transpose_a the left
// operand is given as [B x k x m] and used transposed.
Var BatchedMatmul(Var a, Var b, bool transpose_a = false);

enum class Activation { kGelu, kSigmoid, kExp, kLog, kSquare };

// Elementwise activation with its analytic derivative. kLog rejects
// non-positive inputs with a domain error.
Var Activate(Activation kind, Var x);

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var x, double factor);

// x[..., m] + bias[m], broadcast over leading dims.
Var AddBias(Var x, Var bias);

// x[..., d] scaled per row by g[...] (g has x's shape minus the last axis).
Var ScaleRows(Var x, Var g);

Var Reshape(Var x, Shape shape);

// [m x n] -> [n x m].
Var Transpose(Var x);

// Column j of an [n x m] matrix, as a length-n vector.
Var SelectColumn(Var x, std::size_t column);

enum class Reduction { kMax, kMean, kSum };

struct ReduceResult {
  Var value;
  // Filled for kMax only: index along the reduced axis, one per output entry.
  std::vector<std::size_t> argmax;
};

// Reduces `axis`, skipping entries where `mask` is false. The mask must have
// the same rank as x with each extent equal to x's or 1. Max routes gradient
// to the lowest-index maximiser; mean divides by the unmasked count.
ReduceResult Reduce(Reduction kind, Var x, std::size_t axis,
                    const Mask* mask = nullptr);

// Sum of every element, as a scalar.
Var SumAll(Var x);

// Each row (last axis) divided by max(||row||_2, epsilon).
Var L2NormalizeRows(Var x, double epsilon);

// Gradient passes only where lo <= x <= hi.
Var Clamp(Var x, double lo, double hi);

// x divided by its sum along `axis`; every such sum must be positive.
Var NormalizeAlongAxis(Var x, std::size_t axis);

enum class GateMode { kStochastic, kDeterministic };

// i.i.d. Gumbel(0, 1) draws: -log(-log(u)), u clamped to [1e-12, 1 - 1e-12].
Tensor SampleGumbelNoise(const Shape& shape, Rng& rng);

// Row softmax of (logits + noise) / tau over the last axis. A null noise
// pointer gives the plain tempered softmax. The soft output is differentiated
// directly (no straight-through estimator).
Var GumbelSoftmax(Var logits, double tau, const Tensor* noise);
Var GumbelSoftmax(Var logits, double tau, GateMode mode, Rng& rng);

// Plain-tensor convenience wrappers for code paths that do not need gradients.
Tensor MatmulValue(const Tensor& a, const Tensor& b);

}  // namespace grm

#endif  // GRM_OPS_H_
