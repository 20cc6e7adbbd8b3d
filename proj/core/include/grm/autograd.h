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

#ifndef GRM_AUTOGRAD_H_
#define GRM_AUTOGRAD_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "grm/tensor.h"

namespace grm {

// A named learnable tensor. `grad` is overwritten by Tape::Backward for every
// leaf bound to this parameter.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kLeaf,
  kMatmul,
  kBatchedMatmul,
  kGelu,
  kSigmoid,
  kExp,
  kLog,
  kSquare,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddBias,
  kScaleRows,
  kReshape,
  kTranspose,
  kSelectColumn,
  kGumbelSoftmax,
  kReduceMax,
  kReduceMean,
  kReduceSum,
  kL2NormalizeRows,
  kClamp,
  kNormalizeAxis,
  kNoiseAggregate,
  kSimilarity,
  kContrastive,
  kKlDivergence,
  kEntropy,
  kReconstruction,
};

std::string_view OpKindName(OpKind kind);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order (which is a topological order), so
// Backward simply walks the node list in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // Binds a parameter as a leaf; non-trainable parameters become constants.
  Var Leaf(Parameter& param);

  // Appends an op node. The node requires grad iff any input does; the
  // backward rule is dropped otherwise.
  Var Record(OpKind kind, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  // Reverse sweep from a scalar loss; writes Parameter::grad for bound leaves.
  void Backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient accumulator for `v`, zero-allocated on first use; nullptr when
  // `v` does not require grad.
  Tensor* GradBuffer(Var v);
  // Accumulated gradient after Backward, or nullptr if none reached `v`.
  const Tensor* grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    Tensor grad = {};
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward = {};
  };

  void CheckOwned(Var v) const;

  std::vector<Node> nodes_;
};

namespace testing {

// Scales the upstream gradient fed to every backward rule of `kind` while in
// scope. Used as a negative control for gradient verification.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(OpKind kind, double scale);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

}  // namespace testing

}  // namespace grm

#endif  // GRM_AUTOGRAD_H_
