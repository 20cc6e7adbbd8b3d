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

// Independent reference computations. Everything here is written with plain
// loops over raw values and shares no code with the library kernels.

#ifndef GRM_TESTS_ORACLES_H_
#define GRM_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "grm/autograd.h"
#include "grm/grad_check.h"
#include "grm/ops.h"
#include "grm/tensor.h"

namespace grm::oracle {

class TestRng {
 public:
  explicit TestRng(std::uint64_t seed) : engine_(seed) {}
  double Uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double Normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t Index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline Tensor RandomTensor(const Shape& shape, TestRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.mutable_data()) v = rng.Uniform(lo, hi);
  return t;
}

// rows x cols mask with at least one valid entry per row.
inline Mask RandomMask(std::size_t rows, std::size_t cols, TestRng& rng, double p_valid = 0.7) {
  Mask m({rows, cols}, false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.set(r * cols + c, rng.Uniform(0.0, 1.0) < p_valid);
    m.set(r * cols + rng.Index(0, cols - 1), true);
  }
  return m;
}

inline Tensor Matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
      c.at(i, j) = s;
    }
  return c;
}

inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double Gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

inline std::vector<double> Row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(t.rank() - 1);
  return std::vector<double>(t.data().begin() + r * d, t.data().begin() + (r + 1) * d);
}

inline double Dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::sqrt(Dot(a, a)), nb = std::sqrt(Dot(b, b));
  return Dot(a, b) / (std::max(na, 1e-12) * std::max(nb, 1e-12));
}

// Tokens are [L x d]; masks are per-token booleans.
inline double PairSimilarity(const Tensor& img, const std::vector<bool>& img_mask,
                             const Tensor& txt, const std::vector<bool>& txt_mask,
                             bool cosine = true) {
  const std::size_t li = img.dim(0), lt = txt.dim(0);
  std::vector<std::vector<double>> s(lt, std::vector<double>(li));
  for (std::size_t t = 0; t < lt; ++t)
    for (std::size_t i = 0; i < li; ++i)
      s[t][i] = cosine ? Cosine(Row(txt, t), Row(img, i)) : Dot(Row(txt, t), Row(img, i));
  double text_side = 0.0, image_side = 0.0;
  std::size_t nt = 0, ni = 0;
  for (std::size_t t = 0; t < lt; ++t) {
    if (!txt_mask[t]) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < li; ++i)
      if (img_mask[i]) best = std::max(best, s[t][i]);
    text_side += best;
    ++nt;
  }
  for (std::size_t i = 0; i < li; ++i) {
    if (!img_mask[i]) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < lt; ++t)
      if (txt_mask[t]) best = std::max(best, s[t][i]);
    image_side += best;
    ++ni;
  }
  return text_side / nt + image_side / ni;
}

inline double Contrastive(const Tensor& s, double alpha, bool hardest) {
  const std::size_t n = s.dim(0);
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0, row_max = 0.0, col_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double h1 = std::max(0.0, alpha + s.at(i, j) - s.at(i, i));
      const double h2 = std::max(0.0, alpha + s.at(j, i) - s.at(i, i));
      row += h1;
      col += h2;
      row_max = std::max(row_max, h1);
      col_max = std::max(col_max, h2);
    }
    total += hardest ? row_max + col_max : row + col;
  }
  return total / static_cast<double>(n);
}

// u [B x K x d], v [B x L x d], mask [B x L].
inline double Reconstruction(const Tensor& u, const Tensor& v, const Mask& mask) {
  const std::size_t b = u.dim(0), k = u.dim(1), d = u.dim(2), l = v.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mu = 0.0, mv = 0.0;
      std::size_t cnt = 0;
      for (std::size_t r = 0; r < k; ++r) mu += u.at(i, r, j);
      for (std::size_t p = 0; p < l; ++p)
        if (mask.at(i, p)) {
          mv += v.at(i, p, j);
          ++cnt;
        }
      const double diff = mu / k - mv / cnt;
      sq += diff * diff;
    }
    total += sq;
  }
  return total / b;
}

inline double Kl(const Tensor& mu, const Tensor& lv, bool average_over_dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s += -0.5 * (1.0 + lv[i] - mu[i] * mu[i] - std::exp(lv[i]));
  const double b = static_cast<double>(mu.dim(0)), d = static_cast<double>(mu.dim(2));
  return s / (average_over_dim ? b * d : b);
}

// attn [B x L x K].
inline double Entropy(const Tensor& attn) {
  const std::size_t b = attn.dim(0), l = attn.dim(1), k = attn.dim(2);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < l; ++p)
      for (std::size_t r = 0; r < k; ++r) {
        const double a = attn.at(i, p, r);
        if (a > 0.0) s -= a * std::log(a);
      }
    total += s / k;
  }
  return total / b;
}

struct Attention {
  Tensor raw, norm;
};

// features [B x L x d], prompts [K x d].
inline Attention Attend(const Tensor& features, const Mask& mask, const Tensor& prompts) {
  const std::size_t b = features.dim(0), l = features.dim(1), d = features.dim(2);
  const std::size_t k = prompts.dim(0);
  Attention out{Tensor({b, l, k}), Tensor({b, l, k})};
  for (std::size_t r = 0; r < k; ++r) {
    std::vector<double> p = Row(prompts, r);
    const double n = std::max(std::sqrt(Dot(p, p)), 1e-12);
    for (double& x : p) x /= n;
    for (std::size_t i = 0; i < b; ++i) {
      double col = 0.0;
      for (std::size_t q = 0; q < l; ++q) {
        if (!mask.at(i, q)) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += features.at(i, q, j) * p[j];
        out.raw.at(i, q, r) = Sigmoid(dot);
        col += out.raw.at(i, q, r);
      }
      for (std::size_t q = 0; q < l; ++q) out.norm.at(i, q, r) = out.raw.at(i, q, r) / col;
    }
  }
  return out;
}

// norm [B x L x K], features [B x L x d] -> [B x K x d].
inline Tensor RegionMeans(const Tensor& norm, const Tensor& features) {
  const std::size_t b = norm.dim(0), l = norm.dim(1), k = norm.dim(2), d = features.dim(2);
  Tensor mu({b, k, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t q = 0; q < l; ++q) s += norm.at(i, q, r) * features.at(i, q, j);
        mu.at(i, r, j) = s;
      }
  return mu;
}

// Sort-and-check recall. ground_truth[i] lists the texts of image i.
inline double Recall(const Tensor& s, const std::vector<std::vector<std::size_t>>& gt,
                     std::size_t k, bool image_to_text) {
  const std::size_t ni = s.dim(0), nt = s.dim(1);
  std::size_t hits = 0, queries = 0;
  const std::size_t nq = image_to_text ? ni : nt;
  const std::size_t nc = image_to_text ? nt : ni;
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<std::size_t> order(nc);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto score = [&](std::size_t c) { return image_to_text ? s.at(q, c) : s.at(c, q); };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return score(x) > score(y); });
    bool hit = false;
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t c = order[r];
      if (image_to_text) {
        hit |= std::find(gt[q].begin(), gt[q].end(), c) != gt[q].end();
      } else {
        hit |= std::find(gt[c].begin(), gt[c].end(), q) != gt[c].end();
      }
    }
    hits += hit;
    ++queries;
  }
  return 100.0 * hits / queries;
}

// Gradient check of op(inputs) contracted with fixed random weights, so every
// output coordinate contributes.
inline GradCheckReport CheckOp(const std::function<Var(Tape&, const std::vector<Var>&)>& op,
                               std::vector<Parameter>& params, std::uint64_t seed = 1,
                               double h = 1e-5) {
  Tensor weights;
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.Leaf(p));
    TestRng rng(seed);
    weights = RandomTensor(op(tape, vars).shape(), rng, 0.5, 1.5);
  }
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  LossBuilder build = [&](Tape& tape) {
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.Leaf(p));
    return SumAll(Mul(op(tape, vars), tape.Constant(weights)));
  };
  return GradCheck(build, ptrs, h);
}

inline std::vector<bool> MaskRow(const Mask& m, std::size_t r) {
  const std::size_t cols = m.shape()[1];
  std::vector<bool> out(cols);
  for (std::size_t c = 0; c < cols; ++c) out[c] = m.at(r, c);
  return out;
}

inline Tensor Slice(const Tensor& t, std::size_t i) {
  const std::size_t l = t.dim(1), d = t.dim(2);
  Tensor out({l, d});
  std::copy(t.data().begin() + i * l * d, t.data().begin() + (i + 1) * l * d,
            out.mutable_data().begin());
  return out;
}

}  // namespace grm::oracle

#endif  // GRM_TESTS_ORACLES_H_
