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

#include "grm/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

#include "grm/errors.h"
#include "grm/ops.h"

namespace grm {

std::string_view DirectionName(Direction direction) {
  return direction == Direction::kImageToText ? "image_to_text" : "text_to_image";
}

std::string_view LevelName(Level level) {
  switch (level) {
    case Level::kOri: return "ori";
    case Level::kKey: return "key";
    case Level::kUnc: return "unc";
    case Level::kCombined: return "combined";
  }
  return "unknown";
}

GroundTruth IdentityGroundTruth(std::size_t n) {
  GroundTruth gt(n);
  for (std::size_t i = 0; i < n; ++i) gt[i] = {i};
  return gt;
}

namespace {

// Rank of candidate `c` among `n` candidates scored by score(j): number of
// candidates that sort strictly ahead of it.
template <typename Score>
std::size_t RankOf(std::size_t c, std::size_t n, const Score& score) {
  const double sc = score(c);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double sj = score(j);
    if (sj > sc || (sj == sc && j < c)) ++rank;
  }
  return rank;
}

}  // namespace

double RecallAtK(const Tensor& s, const GroundTruth& gt, std::size_t k, Direction direction) {
  if (s.rank() != 2) Throw(ErrorCode::kDimension, "recall_at_k expects a matrix");
  const std::size_t n_img = s.dim(0), n_txt = s.dim(1);
  if (gt.size() != n_img) Throw(ErrorCode::kParameter, "ground truth must list every image");
  if (k < 1) Throw(ErrorCode::kParameter, "k must be >= 1");
  const std::size_t candidates = direction == Direction::kImageToText ? n_txt : n_img;
  if (k > candidates) {
    Throw(ErrorCode::kParameter, "k = " + std::to_string(k) + " exceeds " +
                                     std::to_string(candidates) + " candidates");
  }
  std::size_t hits = 0, queries = 0;
  if (direction == Direction::kImageToText) {
    for (std::size_t i = 0; i < n_img; ++i) {
      if (gt[i].empty()) Throw(ErrorCode::kParameter, "image query without a ground-truth text");
      auto score = [&](std::size_t j) { return s.at(i, j); };
      bool hit = false;
      for (std::size_t t : gt[i]) {
        if (t >= n_txt) Throw(ErrorCode::kParameter, "ground-truth text index out of range");
        if (RankOf(t, n_txt, score) < k) hit = true;
      }
      hits += hit;
      ++queries;
    }
  } else {
    std::vector<std::vector<std::size_t>> owners(n_txt);
    for (std::size_t i = 0; i < n_img; ++i) {
      for (std::size_t t : gt[i]) {
        if (t >= n_txt) Throw(ErrorCode::kParameter, "ground-truth text index out of range");
        owners[t].push_back(i);
      }
    }
    for (std::size_t t = 0; t < n_txt; ++t) {
      if (owners[t].empty()) Throw(ErrorCode::kParameter, "text query without a ground-truth image");
      auto score = [&](std::size_t i) { return s.at(i, t); };
      bool hit = false;
      for (std::size_t i : owners[t]) {
        if (RankOf(i, n_img, score) < k) hit = true;
      }
      hits += hit;
      ++queries;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(queries);
}

LevelScores ScoreLevels(ModelParams& params, const ModelConfig& config,
                        const LossWeights& weights, const TokenBatch& images,
                        const TokenBatch& texts) {
  Tape tape;
  const Encoded e = Encode(tape, params, config, images, texts, nullptr);
  LevelScores out;
  out.ori = e.levels.ori.value();
  out.key = e.levels.key.value();
  out.unc = e.levels.unc.value();
  out.combined = Tensor(out.ori.shape());
  auto c = out.combined.mutable_data();
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = weights.a * out.ori[i] + weights.b * out.key[i] + weights.c * out.unc[i];
  }
  return out;
}

std::vector<RetrievalReport> EvaluateScores(const LevelScores& scores, const GroundTruth& gt) {
  std::vector<RetrievalReport> out;
  const std::pair<Level, const Tensor*> levels[] = {{Level::kOri, &scores.ori},
                                                    {Level::kKey, &scores.key},
                                                    {Level::kUnc, &scores.unc},
                                                    {Level::kCombined, &scores.combined}};
  for (const auto& [level, s] : levels) {
    RetrievalReport pair[2];
    const Direction dirs[2] = {Direction::kImageToText, Direction::kTextToImage};
    for (int d = 0; d < 2; ++d) {
      const std::size_t candidates = d == 0 ? s->dim(1) : s->dim(0);
      auto recall = [&](std::size_t k) {
        return k > candidates ? 100.0 : RecallAtK(*s, gt, k, dirs[d]);
      };
      pair[d].level = level;
      pair[d].direction = dirs[d];
      pair[d].r1 = recall(1);
      pair[d].r5 = recall(5);
      pair[d].r10 = recall(10);
    }
    const double rsum = pair[0].r1 + pair[0].r5 + pair[0].r10 + pair[1].r1 + pair[1].r5 + pair[1].r10;
    for (auto& r : pair) {
      r.rsum = rsum;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<RetrievalReport> Evaluate(Checkpoint& checkpoint, const TokenBatch& images,
                                      const TokenBatch& texts, const GroundTruth& ground_truth) {
  const LevelScores scores = ScoreLevels(checkpoint.params, checkpoint.config.model,
                                         checkpoint.config.weights, images, texts);
  return EvaluateScores(scores, ground_truth);
}

const RetrievalReport& FindReport(const std::vector<RetrievalReport>& reports, Level level,
                                  Direction direction) {
  for (const auto& r : reports) {
    if (r.level == level && r.direction == direction) return r;
  }
  Throw(ErrorCode::kParameter, "no report for requested level/direction");
}

namespace {

struct PairView {
  Tensor image_features;  // [L_v x d]
  Tensor text_features;   // [L_t x d]
  std::vector<double> image_gate, text_gate;
  std::vector<std::size_t> words;  // valid text positions
  std::optional<Tensor> regions;   // [L_v x K]
};

PairView ViewPair(ModelParams& params, const ModelConfig& config, const TokenBatch& image,
                  const TokenBatch& text) {
  if (image.batch() != 1 || text.batch() != 1) {
    Throw(ErrorCode::kParameter, "heatmap export takes single-instance batches");
  }
  Tape tape;
  const Encoded e = Encode(tape, params, config, image, text, nullptr);
  PairView v;
  const std::size_t lv = image.length(), lt = text.length(), d = config.dim;
  v.image_features = e.image.features.value().Reshaped({lv, d});
  v.text_features = e.text.features.value().Reshaped({lt, d});
  const auto ig = e.image.gate.value().data();
  const auto tg = e.text.gate.value().data();
  v.image_gate.assign(ig.begin(), ig.end());
  v.text_gate.assign(tg.begin(), tg.end());
  for (std::size_t t = 0; t < lt; ++t) {
    if (text.mask[t]) v.words.push_back(t);
  }
  if (v.words.empty()) Throw(ErrorCode::kDegenerateSlice, "text has no valid tokens");
  if (e.regions) {
    v.regions = e.regions->attn_norm.value().Reshaped({lv, config.num_prompts});
  }
  return v;
}

Tensor MapFromView(const PairView& v) {
  const Tensor full = TokenSimilarityMap(v.image_features, v.text_features, TokenMetric::kCosine);
  const std::size_t lv = full.dim(1);
  Tensor out({v.words.size(), lv});
  for (std::size_t r = 0; r < v.words.size(); ++r) {
    for (std::size_t c = 0; c < lv; ++c) out.at(r, c) = full.at(v.words[r], c);
  }
  return out;
}

std::string Num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Throw(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) Throw(ErrorCode::kIo, "write failed for " + path.string());
}

std::filesystem::path WithSuffix(const std::filesystem::path& prefix, const std::string& suffix) {
  return prefix.parent_path() / (prefix.filename().string() + suffix);
}

}  // namespace

Tensor KeyTokenMap(ModelParams& params, const ModelConfig& config, const TokenBatch& image,
                   const TokenBatch& text) {
  return MapFromView(ViewPair(params, config, image, text));
}

HeatmapOutput ExportHeatmap(ModelParams& params, const ModelConfig& config,
                            const TokenBatch& image, const TokenBatch& text,
                            const std::filesystem::path& prefix) {
  const PairView v = ViewPair(params, config, image, text);
  const Tensor map = MapFromView(v);
  const std::size_t lv = map.dim(1);
  HeatmapOutput out;

  // Rows are words, columns patches; the last column holds each word's gate
  // and the last row each patch's gate.
  std::string csv = "word";
  for (std::size_t c = 0; c < lv; ++c) csv += "," + std::to_string(c);
  csv += ",gate\n";
  for (std::size_t r = 0; r < v.words.size(); ++r) {
    csv += std::to_string(v.words[r]);
    for (std::size_t c = 0; c < lv; ++c) csv += "," + Num(map.at(r, c));
    csv += "," + Num(v.text_gate[v.words[r]]) + "\n";
  }
  csv += "gate";
  for (std::size_t c = 0; c < lv; ++c) csv += "," + Num(v.image_gate[c]);
  csv += ",\n";
  const auto tokens_path = WithSuffix(prefix, "_tokens.csv");
  WriteText(tokens_path, csv);
  out.files.push_back(tokens_path);

  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(lv))));
  if (side * side == lv) {
    for (std::size_t r = 0; r < v.words.size(); ++r) {
      double lo = map.at(r, 0), hi = map.at(r, 0);
      for (std::size_t c = 1; c < lv; ++c) {
        lo = std::min(lo, map.at(r, c));
        hi = std::max(hi, map.at(r, c));
      }
      std::string pgm = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
      for (std::size_t c = 0; c < lv; ++c) {
        const double t = hi > lo ? (map.at(r, c) - lo) / (hi - lo) : 0.0;
        pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "_word%02zu.pgm", v.words[r]);
      const auto path = WithSuffix(prefix, name);
      WriteText(path, pgm);
      out.files.push_back(path);
    }
  } else {
    out.warnings.push_back("L_v = " + std::to_string(lv) +
                           " is not a perfect square; patch-grid PGM skipped");
  }

  if (v.regions) {
    const Tensor& a = *v.regions;
    std::string rcsv = "patch";
    for (std::size_t k = 0; k < a.dim(1); ++k) rcsv += ",region" + std::to_string(k);
    rcsv += "\n";
    for (std::size_t l = 0; l < a.dim(0); ++l) {
      rcsv += std::to_string(l);
      for (std::size_t k = 0; k < a.dim(1); ++k) rcsv += "," + Num(a.at(l, k));
      rcsv += "\n";
    }
    const auto path = WithSuffix(prefix, "_regions.csv");
    WriteText(path, rcsv);
    out.files.push_back(path);
  } else {
    out.warnings.push_back("region prompting disabled; region attention CSV skipped");
  }
  return out;
}

}  // namespace grm
