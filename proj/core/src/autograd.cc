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

#include "grm/autograd.h"

#include <optional>

#include "grm/errors.h"

namespace grm {

namespace {

struct FaultState {
  bool active = false;
  OpKind kind = OpKind::kConstant;
  double scale = 1.0;
};

FaultState& Fault() {
  static FaultState state;
  return state;
}

}  // namespace

std::string_view OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kBatchedMatmul: return "batched_matmul";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kScaleRows: return "scale_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSelectColumn: return "select_column";
    case OpKind::kGumbelSoftmax: return "gumbel_softmax";
    case OpKind::kReduceMax: return "reduce_max";
    case OpKind::kReduceMean: return "reduce_mean";
    case OpKind::kReduceSum: return "reduce_sum";
    case OpKind::kL2NormalizeRows: return "l2_normalize_rows";
    case OpKind::kClamp: return "clamp";
    case OpKind::kNormalizeAxis: return "normalize_axis";
    case OpKind::kNoiseAggregate: return "noise_aggregate";
    case OpKind::kSimilarity: return "similarity";
    case OpKind::kContrastive: return "contrastive";
    case OpKind::kKlDivergence: return "kl_divergence";
    case OpKind::kEntropy: return "entropy";
    case OpKind::kReconstruction: return "reconstruction";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) Throw(ErrorCode::kContract, "use of unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

void Tape::CheckOwned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    Throw(ErrorCode::kContract, "Var does not belong to this tape");
  }
}

Var Tape::Constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, std::move(value)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Leaf(Parameter& param) {
  Node node{OpKind::kLeaf, param.value};
  node.requires_grad = param.trainable;
  node.param = &param;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(OpKind kind, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  bool needs_grad = false;
  for (const Var& in : inputs) {
    CheckOwned(in);
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  Node node{kind, std::move(value)};
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::GradBuffer(Var v) {
  CheckOwned(v);
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return &node.grad;
}

const Tensor* Tape::grad(Var v) const {
  CheckOwned(v);
  const Node& node = nodes_[v.id_];
  return node.has_grad ? &node.grad : nullptr;
}

void Tape::Backward(Var loss) {
  if (nodes_.empty()) Throw(ErrorCode::kContract, "backward on an empty tape");
  CheckOwned(loss);
  if (nodes_[loss.id_].value.size() != 1) {
    Throw(ErrorCode::kContract, "backward needs a scalar loss, got shape " +
                                    ShapeToString(nodes_[loss.id_].value.shape()));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    if (node.param) node.param->grad = Tensor(node.param->value.shape());
  }
  if (Tensor* seed = GradBuffer(loss)) (*seed)[0] = 1.0;

  const FaultState fault = Fault();
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    if (fault.active && node.kind == fault.kind) {
      Tensor scaled = node.grad;
      for (double& g : scaled.mutable_data()) g *= fault.scale;
      node.backward(scaled, *this);
    } else {
      node.backward(node.grad, *this);
    }
  }

  for (Node& node : nodes_) {
    if (!node.param || !node.has_grad) continue;
    auto dst = node.param->grad.mutable_data();
    auto src = node.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

namespace testing {

ScopedBackwardFault::ScopedBackwardFault(OpKind kind, double scale) {
  Fault() = FaultState{true, kind, scale};
}

ScopedBackwardFault::~ScopedBackwardFault() { Fault() = FaultState{}; }

}  // namespace testing

}  // namespace grm
