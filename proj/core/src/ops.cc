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

#include "grm/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "grm/errors.h"

namespace grm {

namespace {

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    Throw(ErrorCode::kDimension, std::string(op) + ": shape mismatch " +
                                     ShapeToString(a.shape()) + " vs " +
                                     ShapeToString(b.shape()));
  }
}

void RequireRank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    Throw(ErrorCode::kDimension, std::string(op) + ": expected rank " +
                                     std::to_string(rank) + ", got " +
                                     ShapeToString(x.shape()));
  }
}

// C[m x n] (+)= A[m x k] . B[k x n], raw row-major buffers.
void GemmAccumulate(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[m x n] += A[m x k] . B[n x k]^T
void GemmABt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T . B[k x n]
void GemmAtB(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double api = a[p * m + i];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, extent, inner) loop counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit SplitAt(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor MatmulValue(const Tensor& a, const Tensor& b) {
  RequireRank("matmul", a, 2);
  RequireRank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    Throw(ErrorCode::kDimension, "matmul: inner dimensions disagree for " +
                                     ShapeToString(a.shape()) + " and " +
                                     ShapeToString(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  GemmAccumulate(a.data().data(), b.data().data(), c.mutable_data().data(), a.dim(0),
                 a.dim(1), b.dim(1));
  return c;
}

Var Matmul(Var a, Var b) {
  Tensor out = MatmulValue(a.value(), b.value());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  return a.tape()->Record(
      OpKind::kMatmul, std::move(out), {a, b},
      [a, b, m, k, n](const Tensor& g, Tape& tape) {
        if (Tensor* ga = tape.GradBuffer(a)) {
          GemmABt(g.data().data(), b.value().data().data(), ga->mutable_data().data(),
                  m, n, k);
        }
        if (Tensor* gb = tape.GradBuffer(b)) {
          GemmAtB(a.value().data().data(), g.data().data(), gb->mutable_data().data(),
                  k, m, n);
        }
      });
}

Var BatchedMatmul(Var a, Var b, bool transpose_a) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireRank("batched_matmul", av, 3);
  RequireRank("batched_matmul", bv, 3);
  const std::size_t batch = av.dim(0);
  const std::size_t m = transpose_a ? av.dim(2) : av.dim(1);
  const std::size_t k = transpose_a ? av.dim(1) : av.dim(2);
  const std::size_t n = bv.dim(2);
  if (bv.dim(0) != batch || bv.dim(1) != k) {
    Throw(ErrorCode::kDimension, "batched_matmul: incompatible " +
                                     ShapeToString(av.shape()) + " and " +
                                     ShapeToString(bv.shape()));
  }
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* ai = av.data().data() + i * m * k;
    const double* bi = bv.data().data() + i * k * n;
    double* ci = out.mutable_data().data() + i * m * n;
    if (transpose_a) {
      GemmAtB(ai, bi, ci, m, k, n);
    } else {
      GemmAccumulate(ai, bi, ci, m, k, n);
    }
  }
  return a.tape()->Record(
      OpKind::kBatchedMatmul, std::move(out), {a, b},
      [a, b, batch, m, k, n, transpose_a](const Tensor& g, Tape& tape) {
        Tensor* ga = tape.GradBuffer(a);
        Tensor* gb = tape.GradBuffer(b);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* ai = a.value().data().data() + i * m * k;
          const double* bi = b.value().data().data() + i * k * n;
          const double* gi = g.data().data() + i * m * n;
          if (ga) {
            double* gai = ga->mutable_data().data() + i * m * k;
            if (transpose_a) {
              // dA[k x m] = B . G^T
              GemmABt(bi, gi, gai, k, n, m);
            } else {
              GemmABt(gi, bi, gai, m, n, k);
            }
          }
          if (gb) {
            double* gbi = gb->mutable_data().data() + i * k * n;
            if (transpose_a) {
              // dB[k x n] = A[k x m] . G
              GemmAccumulate(ai, gi, gbi, k, m, n);
            } else {
              GemmAtB(ai, gi, gbi, k, m, n);
            }
          }
        }
      });
}

Var Activate(Activation kind, Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto o = out.mutable_data();
  auto in = xv.data();
  OpKind op = OpKind::kGelu;
  switch (kind) {
    case Activation::kGelu:
      op = OpKind::kGelu;
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = Gelu(in[i]);
      break;
    case Activation::kSigmoid:
      op = OpKind::kSigmoid;
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = Sigmoid(in[i]);
      break;
    case Activation::kExp:
      op = OpKind::kExp;
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::exp(in[i]);
      break;
    case Activation::kLog:
      op = OpKind::kLog;
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!(in[i] > 0.0)) {
          Throw(ErrorCode::kDomain, "log of non-positive value " + std::to_string(in[i]) +
                                        " at index " + std::to_string(i));
        }
        o[i] = std::log(in[i]);
      }
      break;
    case Activation::kSquare:
      op = OpKind::kSquare;
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * in[i];
      break;
  }
  Var out_var;
  out_var = x.tape()->Record(op, std::move(out), {x}, [x, kind](const Tensor& g, Tape& tape) {
    Tensor* gx = tape.GradBuffer(x);
    if (!gx) return;
    auto in = x.value().data();
    auto dst = gx->mutable_data();
    for (std::size_t i = 0; i < in.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::kGelu: d = GeluDerivative(in[i]); break;
        case Activation::kSigmoid: {
          const double s = Sigmoid(in[i]);
          d = s * (1.0 - s);
          break;
        }
        case Activation::kExp: d = std::exp(in[i]); break;
        case Activation::kLog: d = 1.0 / in[i]; break;
        case Activation::kSquare: d = 2.0 * in[i]; break;
      }
      dst[i] += g[i] * d;
    }
  });
  return out_var;
}

Var Add(Var a, Var b) {
  RequireSameShape("add", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b.value()[i];
  return a.tape()->Record(OpKind::kAdd, std::move(out), {a, b},
                          [a, b](const Tensor& g, Tape& tape) {
                            for (Var v : {a, b}) {
                              if (Tensor* gv = tape.GradBuffer(v)) {
                                for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
                              }
                            }
                          });
}

Var Sub(Var a, Var b) {
  RequireSameShape("sub", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= b.value()[i];
  return a.tape()->Record(OpKind::kSub, std::move(out), {a, b},
                          [a, b](const Tensor& g, Tape& tape) {
                            if (Tensor* ga = tape.GradBuffer(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                            }
                            if (Tensor* gb = tape.GradBuffer(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                            }
                          });
}

Var Mul(Var a, Var b) {
  RequireSameShape("mul", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= b.value()[i];
  return a.tape()->Record(OpKind::kMul, std::move(out), {a, b},
                          [a, b](const Tensor& g, Tape& tape) {
                            if (Tensor* ga = tape.GradBuffer(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*ga)[i] += g[i] * b.value()[i];
                              }
                            }
                            if (Tensor* gb = tape.GradBuffer(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gb)[i] += g[i] * a.value()[i];
                              }
                            }
                          });
}

Var Scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.mutable_data()) v *= factor;
  return x.tape()->Record(OpKind::kScale, std::move(out), {x},
                          [x, factor](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gx)[i] += g[i] * factor;
                              }
                            }
                          });
}

Var AddBias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() == 0 || bv.rank() != 1 || bv.dim(0) != xv.shape().back()) {
    Throw(ErrorCode::kDimension, "add_bias: bias " + ShapeToString(bv.shape()) +
                                     " does not match " + ShapeToString(xv.shape()));
  }
  const std::size_t m = bv.dim(0);
  Tensor out = xv;
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % m];
  return x.tape()->Record(OpKind::kAddBias, std::move(out), {x, bias},
                          [x, bias, m](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                            }
                            if (Tensor* gb = tape.GradBuffer(bias)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % m] += g[i];
                            }
                          });
}

Var ScaleRows(Var x, Var scale) {
  const Tensor& xv = x.value();
  const Tensor& sv = scale.value();
  if (xv.rank() == 0) Throw(ErrorCode::kDimension, "scale_rows: scalar input");
  Shape row_shape(xv.shape().begin(), xv.shape().end() - 1);
  if (sv.shape() != row_shape) {
    Throw(ErrorCode::kDimension, "scale_rows: scale " + ShapeToString(sv.shape()) +
                                     " does not match rows of " +
                                     ShapeToString(xv.shape()));
  }
  const std::size_t d = xv.shape().back();
  Tensor out = xv;
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= sv[i / d];
  return x.tape()->Record(OpKind::kScaleRows, std::move(out), {x, scale},
                          [x, scale, d](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gx)[i] += g[i] * scale.value()[i / d];
                              }
                            }
                            if (Tensor* gs = tape.GradBuffer(scale)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gs)[i / d] += g[i] * x.value()[i];
                              }
                            }
                          });
}

Var Reshape(Var x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return x.tape()->Record(OpKind::kReshape, std::move(out), {x},
                          [x](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                            }
                          });
}

Var Transpose(Var x) {
  const Tensor& xv = x.value();
  RequireRank("transpose", xv, 2);
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  return x.tape()->Record(OpKind::kTranspose, std::move(out), {x},
                          [x, m, n](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t j = 0; j < n; ++j) {
                                  (*gx)[i * n + j] += g[j * m + i];
                                }
                              }
                            }
                          });
}

Var SelectColumn(Var x, std::size_t column) {
  const Tensor& xv = x.value();
  RequireRank("select_column", xv, 2);
  if (column >= xv.dim(1)) {
    Throw(ErrorCode::kDimension, "select_column: column " + std::to_string(column) +
                                     " out of range for " + ShapeToString(xv.shape()));
  }
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i * m + column];
  return x.tape()->Record(OpKind::kSelectColumn, std::move(out), {x},
                          [x, column, n, m](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (std::size_t i = 0; i < n; ++i) (*gx)[i * m + column] += g[i];
                            }
                          });
}

ReduceResult Reduce(Reduction kind, Var x, std::size_t axis, const Mask* mask) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    Throw(ErrorCode::kDimension, "reduce: axis " + std::to_string(axis) +
                                     " invalid for " + ShapeToString(xv.shape()));
  }
  // Strides of the mask against x's index space (0 on broadcast axes).
  std::vector<std::size_t> mask_strides;
  if (mask) {
    if (mask->shape().size() != xv.rank()) {
      Throw(ErrorCode::kDimension, "reduce: mask " + ShapeToString(mask->shape()) +
                                       " not broadcastable to " + ShapeToString(xv.shape()));
    }
    mask_strides.assign(xv.rank(), 0);
    std::size_t stride = 1;
    for (std::size_t i = xv.rank(); i-- > 0;) {
      const std::size_t extent = mask->shape()[i];
      if (extent != xv.dim(i) && extent != 1) {
        Throw(ErrorCode::kDimension, "reduce: mask " + ShapeToString(mask->shape()) +
                                         " not broadcastable to " +
                                         ShapeToString(xv.shape()));
      }
      mask_strides[i] = extent == 1 ? 0 : stride;
      stride *= extent;
    }
  }
  const AxisSplit split = SplitAt(xv.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < xv.rank(); ++i) {
    if (i != axis) out_shape.push_back(xv.dim(i));
  }
  // Flat index of x -> mask bit.
  auto valid = [&](std::size_t flat) {
    if (!mask) return true;
    std::size_t offset = 0;
    for (std::size_t i = xv.rank(); i-- > 0;) {
      const std::size_t coord = flat % xv.dim(i);
      flat /= xv.dim(i);
      offset += coord * mask_strides[i];
    }
    return (*mask)[offset];
  };

  const std::size_t n_out = split.outer * split.inner;
  Tensor out(out_shape);
  std::vector<std::size_t> argmax(kind == Reduction::kMax ? n_out : 0);
  std::vector<double> counts(n_out, 0.0);
  // Per output slot: which extents are valid (needed for the backward pass).
  std::vector<std::uint8_t> valid_bits(xv.size(), 1);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t in = 0; in < split.inner; ++in) {
      const std::size_t slot = o * split.inner + in;
      double acc = kind == Reduction::kMax ? -std::numeric_limits<double>::infinity() : 0.0;
      std::size_t best = 0;
      std::size_t count = 0;
      for (std::size_t e = 0; e < split.extent; ++e) {
        const std::size_t flat = (o * split.extent + e) * split.inner + in;
        if (!valid(flat)) {
          valid_bits[flat] = 0;
          continue;
        }
        const double v = xv[flat];
        if (kind == Reduction::kMax) {
          if (count == 0 || v > acc) {
            acc = v;
            best = e;
          }
        } else {
          acc += v;
        }
        ++count;
      }
      if (count == 0) {
        Throw(ErrorCode::kDegenerateSlice,
              "reduce: slice " + std::to_string(slot) + " of " +
                  ShapeToString(xv.shape()) + " along axis " + std::to_string(axis) +
                  " is fully masked");
      }
      if (kind == Reduction::kMean) acc /= static_cast<double>(count);
      out[slot] = acc;
      counts[slot] = static_cast<double>(count);
      if (kind == Reduction::kMax) argmax[slot] = best;
    }
  }

  const OpKind op = kind == Reduction::kMax    ? OpKind::kReduceMax
                    : kind == Reduction::kMean ? OpKind::kReduceMean
                                               : OpKind::kReduceSum;
  Var value = x.tape()->Record(
      op, std::move(out), {x},
      [x, kind, split, argmax, counts, valid_bits](const Tensor& g, Tape& tape) {
        Tensor* gx = tape.GradBuffer(x);
        if (!gx) return;
        for (std::size_t o = 0; o < split.outer; ++o) {
          for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t slot = o * split.inner + in;
            if (kind == Reduction::kMax) {
              (*gx)[(o * split.extent + argmax[slot]) * split.inner + in] += g[slot];
              continue;
            }
            const double w = kind == Reduction::kMean ? 1.0 / counts[slot] : 1.0;
            for (std::size_t e = 0; e < split.extent; ++e) {
              const std::size_t flat = (o * split.extent + e) * split.inner + in;
              if (valid_bits[flat]) (*gx)[flat] += g[slot] * w;
            }
          }
        }
      });
  return ReduceResult{value, std::move(argmax)};
}

Var SumAll(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape()->Record(OpKind::kReduceSum, Tensor::Scalar(acc), {x},
                          [x](const Tensor& g, Tape& tape) {
                            if (Tensor* gx = tape.GradBuffer(x)) {
                              for (double& v : gx->mutable_data()) v += g[0];
                            }
                          });
}

Var L2NormalizeRows(Var x, double epsilon) {
  if (!(epsilon > 0.0)) Throw(ErrorCode::kParameter, "l2_normalize_rows: epsilon must be > 0");
  const Tensor& xv = x.value();
  if (xv.rank() == 0) Throw(ErrorCode::kDimension, "l2_normalize_rows: scalar input");
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  Tensor out = xv;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += xv[r * d + j] * xv[r * d + j];
    norms[r] = std::sqrt(sq);
    const double denom = std::max(norms[r], epsilon);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= denom;
  }
  Var y;
  y = x.tape()->Record(
      OpKind::kL2NormalizeRows, std::move(out), {x},
      [x, d, rows, norms, epsilon](const Tensor& g, Tape& tape) {
        Tensor* gx = tape.GradBuffer(x);
        if (!gx) return;
        const Tensor& xv = x.value();
        for (std::size_t r = 0; r < rows; ++r) {
          const double n = norms[r];
          if (n < epsilon) {
            for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += g[r * d + j] / epsilon;
            continue;
          }
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += xv[r * d + j] * g[r * d + j];
          for (std::size_t j = 0; j < d; ++j) {
            (*gx)[r * d + j] += (g[r * d + j] - xv[r * d + j] * dot / (n * n)) / n;
          }
        }
      });
  return y;
}

Var Clamp(Var x, double lo, double hi) {
  if (lo > hi) Throw(ErrorCode::kParameter, "clamp: lo > hi");
  Tensor out = x.value();
  for (double& v : out.mutable_data()) v = std::clamp(v, lo, hi);
  return x.tape()->Record(OpKind::kClamp, std::move(out), {x},
                          [x, lo, hi](const Tensor& g, Tape& tape) {
                            Tensor* gx = tape.GradBuffer(x);
                            if (!gx) return;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const double v = x.value()[i];
                              if (v >= lo && v <= hi) (*gx)[i] += g[i];
                            }
                          });
}

Var NormalizeAlongAxis(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    Throw(ErrorCode::kDimension, "normalize_axis: axis " + std::to_string(axis) +
                                     " invalid for " + ShapeToString(xv.shape()));
  }
  const AxisSplit split = SplitAt(xv.shape(), axis);
  std::vector<double> sums(split.outer * split.inner, 0.0);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t in = 0; in < split.inner; ++in) {
      double s = 0.0;
      for (std::size_t e = 0; e < split.extent; ++e) {
        s += xv[(o * split.extent + e) * split.inner + in];
      }
      // NaN passes through so a diverged run surfaces as a non-finite loss
      if (s <= 0.0) {
        Throw(ErrorCode::kDegenerateSlice,
              "normalize_axis: non-positive slice sum in " + ShapeToString(xv.shape()));
      }
      sums[o * split.inner + in] = s;
    }
  }
  Tensor out = xv;
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t e = 0; e < split.extent; ++e) {
      for (std::size_t in = 0; in < split.inner; ++in) {
        out[(o * split.extent + e) * split.inner + in] /= sums[o * split.inner + in];
      }
    }
  }
  Var y;
  y = x.tape()->Record(
      OpKind::kNormalizeAxis, out, {x},
      [x, split, sums, out](const Tensor& g, Tape& tape) {
        Tensor* gx = tape.GradBuffer(x);
        if (!gx) return;
        for (std::size_t o = 0; o < split.outer; ++o) {
          for (std::size_t in = 0; in < split.inner; ++in) {
            double weighted = 0.0;
            for (std::size_t e = 0; e < split.extent; ++e) {
              const std::size_t flat = (o * split.extent + e) * split.inner + in;
              weighted += g[flat] * out[flat];
            }
            const double s = sums[o * split.inner + in];
            for (std::size_t e = 0; e < split.extent; ++e) {
              const std::size_t flat = (o * split.extent + e) * split.inner + in;
              (*gx)[flat] += (g[flat] - weighted) / s;
            }
          }
        }
      });
  return y;
}

Tensor SampleGumbelNoise(const Shape& shape, Rng& rng) {
  Tensor noise(shape);
  for (double& v : noise.mutable_data()) {
    const double u = std::clamp(rng.Uniform(), 1e-12, 1.0 - 1e-12);
    v = -std::log(-std::log(u));
  }
  return noise;
}

Var GumbelSoftmax(Var logits, double tau, const Tensor* noise) {
  if (!(tau > 0.0)) {
    Throw(ErrorCode::kParameter, "gumbel_softmax: tau must be > 0, got " + std::to_string(tau));
  }
  const Tensor& lv = logits.value();
  if (lv.rank() == 0) Throw(ErrorCode::kDimension, "gumbel_softmax: scalar logits");
  if (noise && noise->shape() != lv.shape()) {
    Throw(ErrorCode::kDimension, "gumbel_softmax: noise " + ShapeToString(noise->shape()) +
                                     " vs logits " + ShapeToString(lv.shape()));
  }
  const std::size_t m = lv.shape().back();
  const std::size_t rows = lv.size() / m;
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double z = lv[r * m + j];
      if (noise) z += (*noise)[r * m + j];
      z /= tau;
      out[r * m + j] = z;
      peak = std::max(peak, z);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[r * m + j] = std::exp(out[r * m + j] - peak);
      total += out[r * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] /= total;
  }
  Var y;
  y = logits.tape()->Record(
      OpKind::kGumbelSoftmax, out, {logits},
      [logits, out, m, rows, tau](const Tensor& g, Tape& tape) {
        Tensor* gl = tape.GradBuffer(logits);
        if (!gl) return;
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += g[r * m + j] * out[r * m + j];
          for (std::size_t j = 0; j < m; ++j) {
            (*gl)[r * m + j] += out[r * m + j] * (g[r * m + j] - dot) / tau;
          }
        }
      });
  return y;
}

Var GumbelSoftmax(Var logits, double tau, GateMode mode, Rng& rng) {
  if (mode == GateMode::kDeterministic) return GumbelSoftmax(logits, tau, nullptr);
  const Tensor noise = SampleGumbelNoise(logits.shape(), rng);
  return GumbelSoftmax(logits, tau, &noise);
}

}  // namespace grm
