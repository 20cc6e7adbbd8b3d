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

#ifndef GRM_EVAL_H_
#define GRM_EVAL_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "grm/checkpoint.h"
#include "grm/embeddings.h"
#include "grm/model.h"

namespace grm {

enum class Direction { kImageToText, kTextToImage };
enum class Level { kOri, kKey, kUnc, kCombined };

std::string_view DirectionName(Direction direction);
std::string_view LevelName(Level level);

// ground_truth[i] lists the text indices matching image i.
using GroundTruth = std::vector<std::vector<std::size_t>>;

GroundTruth IdentityGroundTruth(std::size_t n);

// Percentage of queries with at least one match in the top k. Candidates
// are ranked by descending similarity, equal scores by lower index.
// `similarity` is [images x texts] for both directions.
double RecallAtK(const Tensor& similarity, const GroundTruth& ground_truth, std::size_t k,
                 Direction direction);

struct RetrievalReport {
  Level level = Level::kCombined;
  Direction direction = Direction::kImageToText;
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double rsum = 0.0;
};

struct LevelScores {
  Tensor ori, key, unc, combined;  // each [images x texts]
};

// Noiseless forward over all image/text pairs.
LevelScores ScoreLevels(ModelParams& params, const ModelConfig& config,
                        const LossWeights& weights, const TokenBatch& images,
                        const TokenBatch& texts);

// R@1/5/10 for each level and direction. When fewer than k candidates
// exist every query trivially hits, so R@k is 100.
std::vector<RetrievalReport> EvaluateScores(const LevelScores& scores,
                                            const GroundTruth& ground_truth);

std::vector<RetrievalReport> Evaluate(Checkpoint& checkpoint, const TokenBatch& images,
                                      const TokenBatch& texts, const GroundTruth& ground_truth);

const RetrievalReport& FindReport(const std::vector<RetrievalReport>& reports, Level level,
                                  Direction direction);

// Key-level token map [L_t x L_v] for one pair, restricted to valid rows
// and columns.
Tensor KeyTokenMap(ModelParams& params, const ModelConfig& config, const TokenBatch& image,
                   const TokenBatch& text);

struct HeatmapOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

// Writes <prefix>_tokens.csv (key-level map plus a final gate row/column),
// <prefix>_word<NN>.pgm per valid word when L_v is a perfect square, and
// <prefix>_regions.csv with the column-normalised attention.
HeatmapOutput ExportHeatmap(ModelParams& params, const ModelConfig& config,
                            const TokenBatch& image, const TokenBatch& text,
                            const std::filesystem::path& prefix);

}  // namespace grm

#endif  // GRM_EVAL_H_
