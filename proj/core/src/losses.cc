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

#include "grm/losses.h"

#include <cmath>
#include <limits>
#include <vector>

#include "grm/errors.h"

namespace grm {

void LossWeights::Validate() const {
  if (a < 0.0 || b < 0.0 || c < 0.0) {
    Throw(ErrorCode::kParameter, "level weights must be non-negative");
  }
  if (std::abs(a + b + c - 1.0) > 1e-9) {
    Throw(ErrorCode::kParameter, "level weights must sum to 1, got a+b+c = " +
                                     std::to_string(a + b + c));
  }
  if (!(alpha > 0.0)) Throw(ErrorCode::kParameter, "margin alpha must be > 0");
  if (lambda_recon < 0.0 || lambda_reg < 0.0) {
    Throw(ErrorCode::kParameter, "auxiliary loss weights must be non-negative");
  }
}

std::string LossReport::FirstNonFinite() const {
  const std::pair<const char*, double> fields[] = {
      {"l_con_ori", l_con_ori}, {"l_con_key", l_con_key}, {"l_con_unc", l_con_unc},
      {"l_con", l_con},         {"l_recon", l_recon},     {"l_kl", l_kl},
      {"l_ent", l_ent},         {"l_reg", l_reg},         {"total", total}};
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value)) return name;
  }
  return {};
}

Var Contrastive(Var similarity, double alpha, NegativeMode mode) {
  const Tensor& s = similarity.value();
  if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
    Throw(ErrorCode::kDimension, "contrastive loss needs a square matrix, got " +
                                     ShapeToString(s.shape()));
  }
  const std::size_t n = s.dim(0);
  // Active hinge terms as (negative index, positive index) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> active;
  double total = 0.0;
  auto hinge = [&](std::size_t neg, std::size_t pos) {
    const double v = alpha + s[neg] - s[pos];
    if (v > 0.0) {
      total += v;
      active.emplace_back(neg, pos);
    }
  };
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    const std::size_t diag = i * n + i;
    if (mode == NegativeMode::kSumAll) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        hinge(i * n + j, diag);  // image i against caption j
        hinge(j * n + i, diag);  // caption i against image j
      }
      continue;
    }
    std::size_t best_row = n, best_col = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (best_row == n || s[i * n + j] > s[i * n + best_row]) best_row = j;
      if (best_col == n || s[j * n + i] > s[best_col * n + i]) best_col = j;
    }
    hinge(i * n + best_row, diag);
    hinge(best_col * n + i, diag);
  }
  const double scale = 1.0 / static_cast<double>(n);
  return similarity.tape()->Record(
      OpKind::kContrastive, Tensor::Scalar(n > 1 ? total * scale : 0.0), {similarity},
      [similarity, active, scale](const Tensor& g, Tape& tape) {
        Tensor* gs = tape.GradBuffer(similarity);
        if (!gs) return;
        const double w = g[0] * scale;
        for (const auto& [neg, pos] : active) {
          (*gs)[neg] += w;
          (*gs)[pos] -= w;
        }
      });
}

double CombineLevels(double l_ori, double l_key, double l_unc, const LossWeights& weights) {
  weights.Validate();
  return weights.a * l_ori + weights.b * l_key + weights.c * l_unc;
}

Var Reconstruction(Var u, Var v_hat, const Mask& mask) {
  const Tensor& uv = u.value();
  const Tensor& vv = v_hat.value();
  if (uv.rank() != 3 || vv.rank() != 3 || uv.dim(0) != vv.dim(0) || uv.dim(2) != vv.dim(2)) {
    Throw(ErrorCode::kDimension, "reconstruction: incompatible " + ShapeToString(uv.shape()) +
                                     " and " + ShapeToString(vv.shape()));
  }
  const std::size_t B = uv.dim(0), K = uv.dim(1), L = vv.dim(1), d = uv.dim(2);
  if (mask.shape() != Shape{B, L}) {
    Throw(ErrorCode::kDimension, "reconstruction: mask does not match patches");
  }
  // diff[b] = mean_k u - masked mean_l v_hat; counts[b] = valid patches.
  std::vector<double> diff(B * d, 0.0), counts(B, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < L; ++l) counts[b] += mask.at(b, l) ? 1.0 : 0.0;
    if (counts[b] == 0.0) {
      Throw(ErrorCode::kDegenerateSlice, "reconstruction: image " + std::to_string(b) +
                                             " has no valid patch");
    }
    for (std::size_t j = 0; j < d; ++j) {
      double mu = 0.0, mv = 0.0;
      for (std::size_t k = 0; k < K; ++k) mu += uv.at(b, k, j);
      for (std::size_t l = 0; l < L; ++l) {
        if (mask.at(b, l)) mv += vv.at(b, l, j);
      }
      const double delta = mu / static_cast<double>(K) - mv / counts[b];
      diff[b * d + j] = delta;
      total += delta * delta;
    }
  }
  return u.tape()->Record(
      OpKind::kReconstruction, Tensor::Scalar(total / static_cast<double>(B)), {u, v_hat},
      [u, v_hat, mask, diff, counts, B, K, L, d](const Tensor& g, Tape& tape) {
        const double w = 2.0 * g[0] / static_cast<double>(B);
        if (Tensor* gu = tape.GradBuffer(u)) {
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < K; ++k) {
              for (std::size_t j = 0; j < d; ++j) {
                gu->at(b, k, j) += w * diff[b * d + j] / static_cast<double>(K);
              }
            }
          }
        }
        if (Tensor* gv = tape.GradBuffer(v_hat)) {
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t l = 0; l < L; ++l) {
              if (!mask.at(b, l)) continue;
              for (std::size_t j = 0; j < d; ++j) {
                gv->at(b, l, j) -= w * diff[b * d + j] / counts[b];
              }
            }
          }
        }
      });
}

Var KlDivergence(Var mu, Var log_var, bool average_over_dim) {
  const Tensor& m = mu.value();
  const Tensor& lv = log_var.value();
  if (m.shape() != lv.shape() || m.rank() != 3) {
    Throw(ErrorCode::kDimension, "kl_divergence: mu " + ShapeToString(m.shape()) +
                                     " vs log_var " + ShapeToString(lv.shape()));
  }
  const double denom = static_cast<double>(m.dim(0)) *
                       (average_over_dim ? static_cast<double>(m.dim(2)) : 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    total += -0.5 * (1.0 + lv[i] - m[i] * m[i] - std::exp(lv[i]));
  }
  return mu.tape()->Record(OpKind::kKlDivergence, Tensor::Scalar(total / denom), {mu, log_var},
                           [mu, log_var, denom](const Tensor& g, Tape& tape) {
                             const double w = g[0] / denom;
                             if (Tensor* gm = tape.GradBuffer(mu)) {
                               for (std::size_t i = 0; i < gm->size(); ++i) {
                                 (*gm)[i] += w * mu.value()[i];
                               }
                             }
                             if (Tensor* gl = tape.GradBuffer(log_var)) {
                               for (std::size_t i = 0; i < gl->size(); ++i) {
                                 (*gl)[i] += w * 0.5 * (std::exp(log_var.value()[i]) - 1.0);
                               }
                             }
                           });
}

Var EntropyRegularizer(Var attention) {
  const Tensor& a = attention.value();
  if (a.rank() != 3) {
    Throw(ErrorCode::kDimension, "entropy regulariser needs [B x L x K], got " +
                                     ShapeToString(a.shape()));
  }
  const std::size_t B = a.dim(0), K = a.dim(2);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a[i];
    if (v < 0.0 || v > 1.0) {
      Throw(ErrorCode::kDomain, "attention entry " + std::to_string(v) + " outside [0, 1]");
    }
    if (v > 0.0) total -= v * std::log(v);
  }
  const double denom = static_cast<double>(B) * static_cast<double>(K);
  return attention.tape()->Record(OpKind::kEntropy, Tensor::Scalar(total / denom), {attention},
                                  [attention, denom](const Tensor& g, Tape& tape) {
                                    Tensor* ga = tape.GradBuffer(attention);
                                    if (!ga) return;
                                    const double w = g[0] / denom;
                                    for (std::size_t i = 0; i < ga->size(); ++i) {
                                      const double v = attention.value()[i];
                                      if (v > 0.0) (*ga)[i] -= w * (std::log(v) + 1.0);
                                    }
                                  });
}

LossTerms TotalLoss(const SimilarityLevels& levels, const GaussianRegions* regions,
                    const GatedTokens& gated_image, const Mask& image_mask,
                    const LossWeights& weights) {
  weights.Validate();
  Tape& tape = *levels.ori.tape();
  LossTerms out;
  LossReport& r = out.report;
  Var total = tape.Constant(Tensor::Scalar(0.0));
  auto accumulate = [&](Var term, double weight) {
    if (weight != 0.0) total = Add(total, Scale(term, weight));
  };

  if (weights.use_con_ori) {
    Var l = Contrastive(levels.ori, weights.alpha, weights.negative_mode);
    r.l_con_ori = l.value().item();
    accumulate(l, weights.a);
  }
  if (weights.use_con_key) {
    Var l = Contrastive(levels.key, weights.alpha, weights.negative_mode);
    r.l_con_key = l.value().item();
    accumulate(l, weights.b);
  }
  if (weights.use_con_unc) {
    Var l = Contrastive(levels.unc, weights.alpha, weights.negative_mode);
    r.l_con_unc = l.value().item();
    accumulate(l, weights.c);
  }
  r.l_con = weights.a * r.l_con_ori + weights.b * r.l_con_key + weights.c * r.l_con_unc;

  if (regions) {
    if (weights.use_recon) {
      Var l = Reconstruction(regions->u, gated_image.features, image_mask);
      r.l_recon = l.value().item();
      accumulate(l, weights.lambda_recon);
    }
    if (weights.use_kl) {
      Var l = KlDivergence(regions->mu, regions->log_var, weights.kl_average_over_dim);
      r.l_kl = l.value().item();
      accumulate(l, weights.lambda_reg);
    }
    if (weights.use_entropy) {
      Var attn = weights.entropy_source == EntropySource::kRaw ? regions->attn_raw
                                                               : regions->attn_norm;
      Var l = EntropyRegularizer(attn);
      r.l_ent = l.value().item();
      accumulate(l, weights.lambda_reg);
    }
  }
  r.l_reg = r.l_kl + r.l_ent;
  r.total = total.value().item();
  out.total = total;
  return out;
}

}  // namespace grm
