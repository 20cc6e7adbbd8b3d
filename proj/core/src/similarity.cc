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

#include "grm/similarity.h"

#include <cmath>
#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

#include "grm/errors.h"
#include "grm/parallel.h"

namespace grm {

namespace {

constexpr double kNormEpsilon = 1e-12;

// Token rows prepared for the dot products, plus their norms when the metric
// normalises (needed to chain gradients back to the raw tokens).
struct PreparedTokens {
  std::vector<double> rows;
  std::vector<double> norms;
};

PreparedTokens Prepare(const Tensor& tokens, TokenMetric metric) {
  const std::size_t d = tokens.shape().back();
  const std::size_t n = tokens.size() / d;
  PreparedTokens out{tokens.vec(), {}};
  if (metric == TokenMetric::kDot) return out;
  out.norms.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += out.rows[r * d + j] * out.rows[r * d + j];
    out.norms[r] = std::sqrt(sq);
    const double denom = std::max(out.norms[r], kNormEpsilon);
    for (std::size_t j = 0; j < d; ++j) out.rows[r * d + j] /= denom;
  }
  return out;
}

// One image/text pair over prepared rows. Fills the argmax tables when
// requested: best_image[t] for each valid text token, best_text[v] for each
// valid image token.
double MaxMean(const double* image, const std::uint8_t* image_mask, std::size_t Li,
               const double* text, const std::uint8_t* text_mask, std::size_t Lt,
               std::size_t d, std::vector<double>& scratch,
               std::vector<std::size_t>* best_image = nullptr,
               std::vector<std::size_t>* best_text = nullptr) {
  scratch.assign(Lt * Li, 0.0);
  for (std::size_t t = 0; t < Lt; ++t) {
    if (!text_mask[t]) continue;
    for (std::size_t v = 0; v < Li; ++v) {
      if (!image_mask[v]) continue;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += text[t * d + j] * image[v * d + j];
      scratch[t * Li + v] = acc;
    }
  }
  if (best_image) best_image->assign(Lt, 0);
  if (best_text) best_text->assign(Li, 0);

  double t2i = 0.0;
  std::size_t n_text = 0;
  for (std::size_t t = 0; t < Lt; ++t) {
    if (!text_mask[t]) continue;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t v = 0; v < Li; ++v) {
      if (image_mask[v] && scratch[t * Li + v] > best) {
        best = scratch[t * Li + v];
        arg = v;
      }
    }
    if (best_image) (*best_image)[t] = arg;
    t2i += best;
    ++n_text;
  }
  double i2t = 0.0;
  std::size_t n_image = 0;
  for (std::size_t v = 0; v < Li; ++v) {
    if (!image_mask[v]) continue;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t t = 0; t < Lt; ++t) {
      if (text_mask[t] && scratch[t * Li + v] > best) {
        best = scratch[t * Li + v];
        arg = t;
      }
    }
    if (best_text) (*best_text)[v] = arg;
    i2t += best;
    ++n_image;
  }
  return t2i / static_cast<double>(n_text) + i2t / static_cast<double>(n_image);
}

void RequireValidRows(const Mask& mask, const char* side) {
  const std::size_t n = mask.shape()[0], L = mask.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t l = 0; l < L && !any; ++l) any = mask.at(i, l);
    if (!any) {
      Throw(ErrorCode::kDegenerateSlice, std::string(side) + " instance " + std::to_string(i) +
                                             " has no valid token");
    }
  }
}

// d(loss)/d(raw row) from d(loss)/d(normalised row).
void ChainNormalization(const Tensor& raw, const PreparedTokens& prepared,
                        const std::vector<double>& grad_unit, Tensor& grad_raw) {
  const std::size_t d = raw.shape().back();
  const std::size_t n = raw.size() / d;
  for (std::size_t r = 0; r < n; ++r) {
    const double norm = prepared.norms[r];
    const double* g = grad_unit.data() + r * d;
    if (norm < kNormEpsilon) {
      for (std::size_t j = 0; j < d; ++j) grad_raw[r * d + j] += g[j] / kNormEpsilon;
      continue;
    }
    const double* y = prepared.rows.data() + r * d;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
    for (std::size_t j = 0; j < d; ++j) grad_raw[r * d + j] += (g[j] - y[j] * dot) / norm;
  }
}

}  // namespace

Tensor TokenSimilarityMap(const Tensor& image_tokens, const Tensor& text_tokens,
                          TokenMetric metric) {
  if (image_tokens.rank() != 2 || text_tokens.rank() != 2 ||
      image_tokens.dim(1) != text_tokens.dim(1)) {
    Throw(ErrorCode::kDimension, "token map needs [L_i x d] and [L_t x d], got " +
                                     ShapeToString(image_tokens.shape()) + " and " +
                                     ShapeToString(text_tokens.shape()));
  }
  const std::size_t Li = image_tokens.dim(0), Lt = text_tokens.dim(0), d = image_tokens.dim(1);
  const PreparedTokens img = Prepare(image_tokens, metric);
  const PreparedTokens txt = Prepare(text_tokens, metric);
  Tensor out({Lt, Li});
  for (std::size_t t = 0; t < Lt; ++t) {
    for (std::size_t v = 0; v < Li; ++v) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += txt.rows[t * d + j] * img.rows[v * d + j];
      out[t * Li + v] = acc;
    }
  }
  return out;
}

double PairSimilarity(const Tensor& image_tokens, const Mask& image_mask,
                      const Tensor& text_tokens, const Mask& text_mask, TokenMetric metric) {
  if (image_tokens.rank() != 2 || text_tokens.rank() != 2 ||
      image_tokens.dim(1) != text_tokens.dim(1)) {
    Throw(ErrorCode::kDimension, "pair similarity needs [L_i x d] and [L_t x d], got " +
                                     ShapeToString(image_tokens.shape()) + " and " +
                                     ShapeToString(text_tokens.shape()));
  }
  if (image_mask.shape() != Shape{image_tokens.dim(0)} ||
      text_mask.shape() != Shape{text_tokens.dim(0)}) {
    Throw(ErrorCode::kDimension, "pair similarity masks do not match token counts");
  }
  if (image_mask.CountValid() == 0 || text_mask.CountValid() == 0) {
    Throw(ErrorCode::kDegenerateSlice, "pair similarity needs a valid token on both sides");
  }
  const PreparedTokens img = Prepare(image_tokens, metric);
  const PreparedTokens txt = Prepare(text_tokens, metric);
  std::vector<double> scratch;
  return MaxMean(img.rows.data(), image_mask.bits().data(), image_tokens.dim(0),
                 txt.rows.data(), text_mask.bits().data(), text_tokens.dim(0),
                 image_tokens.dim(1), scratch);
}

Var BatchSimilarity(Var images, const Mask& image_mask, Var texts, const Mask& text_mask,
                    TokenMetric metric) {
  const Tensor& iv = images.value();
  const Tensor& tv = texts.value();
  if (iv.rank() != 3 || tv.rank() != 3 || iv.dim(2) != tv.dim(2)) {
    Throw(ErrorCode::kDimension, "batch similarity needs [N x L x d] inputs, got " +
                                     ShapeToString(iv.shape()) + " and " +
                                     ShapeToString(tv.shape()));
  }
  const std::size_t Ni = iv.dim(0), Li = iv.dim(1), Nt = tv.dim(0), Lt = tv.dim(1);
  const std::size_t d = iv.dim(2);
  if (image_mask.shape() != Shape{Ni, Li} || text_mask.shape() != Shape{Nt, Lt}) {
    Throw(ErrorCode::kDimension, "batch similarity masks do not match inputs");
  }
  RequireValidRows(image_mask, "image");
  RequireValidRows(text_mask, "text");

  auto img = std::make_shared<PreparedTokens>(Prepare(iv, metric));
  auto txt = std::make_shared<PreparedTokens>(Prepare(tv, metric));
  Tensor out({Ni, Nt});
  ParallelFor(Ni, [&](std::size_t i) {
    std::vector<double> scratch;
    for (std::size_t j = 0; j < Nt; ++j) {
      out[i * Nt + j] = MaxMean(img->rows.data() + i * Li * d, image_mask.bits().data() + i * Li,
                                Li, txt->rows.data() + j * Lt * d,
                                text_mask.bits().data() + j * Lt, Lt, d, scratch);
    }
  });

  return images.tape()->Record(
      OpKind::kSimilarity, std::move(out), {images, texts},
      [images, texts, image_mask, text_mask, metric, img, txt, Ni, Li, Nt, Lt, d](
          const Tensor& g, Tape& tape) {
        Tensor* gi = tape.GradBuffer(images);
        Tensor* gt = tape.GradBuffer(texts);
        if (!gi && !gt) return;
        std::vector<double> d_img(Ni * Li * d, 0.0), d_txt(Nt * Lt * d, 0.0);
        std::vector<double> scratch;
        std::vector<std::size_t> best_image, best_text;
        for (std::size_t i = 0; i < Ni; ++i) {
          const double* irows = img->rows.data() + i * Li * d;
          const std::uint8_t* imask = image_mask.bits().data() + i * Li;
          const double n_image = static_cast<double>(
              std::count(imask, imask + Li, std::uint8_t{1}));
          for (std::size_t j = 0; j < Nt; ++j) {
            const double gij = g[i * Nt + j];
            if (gij == 0.0) continue;
            const double* trows = txt->rows.data() + j * Lt * d;
            const std::uint8_t* tmask = text_mask.bits().data() + j * Lt;
            const double n_text = static_cast<double>(
                std::count(tmask, tmask + Lt, std::uint8_t{1}));
            MaxMean(irows, imask, Li, trows, tmask, Lt, d, scratch, &best_image, &best_text);
            // dS[t][v] contributions, applied directly to the two token sets.
            auto apply = [&](std::size_t t, std::size_t v, double w) {
              double* di = d_img.data() + (i * Li + v) * d;
              double* dt = d_txt.data() + (j * Lt + t) * d;
              for (std::size_t k = 0; k < d; ++k) {
                di[k] += w * trows[t * d + k];
                dt[k] += w * irows[v * d + k];
              }
            };
            for (std::size_t t = 0; t < Lt; ++t) {
              if (tmask[t]) apply(t, best_image[t], gij / n_text);
            }
            for (std::size_t v = 0; v < Li; ++v) {
              if (imask[v]) apply(best_text[v], v, gij / n_image);
            }
          }
        }
        if (metric == TokenMetric::kCosine) {
          if (gi) ChainNormalization(images.value(), *img, d_img, *gi);
          if (gt) ChainNormalization(texts.value(), *txt, d_txt, *gt);
        } else {
          if (gi) {
            for (std::size_t k = 0; k < d_img.size(); ++k) (*gi)[k] += d_img[k];
          }
          if (gt) {
            for (std::size_t k = 0; k < d_txt.size(); ++k) (*gt)[k] += d_txt[k];
          }
        }
      });
}

}  // namespace grm
