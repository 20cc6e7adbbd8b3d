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

#ifndef GRM_MODEL_H_
#define GRM_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grm/adapter.h"
#include "grm/embeddings.h"
#include "grm/losses.h"
#include "grm/region.h"
#include "grm/similarity.h"

namespace grm {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t hidden = 0;  // adapter hidden width; 0 means `dim`
  std::size_t num_prompts = 5;
  double tau = 1.0;
  bool adapter_bias = true;
  std::size_t phi_hidden = 0;
  NoiseMode noise_mode = NoiseMode::kPerPatch;

  // Module switches for ablations.
  bool visual_adapter = true;
  bool text_adapter = true;
  bool region_prompting = true;
  bool uncertainty = true;

  std::size_t hidden_dim() const { return hidden ? hidden : dim; }
  void Validate() const;
};

struct ParameterGroup {
  std::string name;
  std::vector<Parameter*> params;
};

struct ModelParams {
  AdapterParams visual;
  AdapterParams text;
  RegionParams region;

  static ModelParams Create(const ModelConfig& config, std::uint64_t seed);

  std::vector<Parameter*> Trainable();
  // Every tensor, trainable or not, in a fixed order (used for checkpoints).
  std::vector<Parameter*> All();
  std::vector<ParameterGroup> Groups();
  std::size_t TrainableCount();
};

// Closed-form trainable parameter count for a configuration.
std::size_t ExpectedParameterCount(const ModelConfig& config);

// Pre-drawn stochastic inputs for one forward pass. Holding them fixed makes
// the forward a deterministic function of the parameters.
struct ForwardNoise {
  Tensor image_gumbel;  // [B*L_v x 2]
  Tensor text_gumbel;   // [B*L_t x 2]
  Tensor region_eps;    // [B x L_v x K x d]
};

// Independent substreams so that freezing or skipping one kind of draw does
// not shift the other.
struct NoiseStreams {
  Rng gumbel;
  Rng gaussian;

  static NoiseStreams FromSeed(std::uint64_t seed);
  ForwardNoise Draw(std::size_t batch, std::size_t image_len, std::size_t text_len,
                    const ModelConfig& config);
};

struct Encoded {
  Var image_unit;  // L2-normalised input patches
  Var text_unit;   // L2-normalised input words
  GatedTokens image;
  GatedTokens text;
  std::optional<GaussianRegions> regions;
  SimilarityLevels levels;
};

// Runs adapters, region prompting and the three similarity levels. Images
// and texts may have different counts. A null `noise` gives the noiseless
// forward (softmax gates, u = mu).
Encoded Encode(Tape& tape, ModelParams& params, const ModelConfig& config,
               const TokenBatch& images, const TokenBatch& texts, const ForwardNoise* noise);

struct ForwardResult {
  Encoded encoded;
  LossTerms loss;
};

// Encode followed by the full objective; images[i] is paired with texts[i].
ForwardResult Forward(Tape& tape, ModelParams& params, const ModelConfig& config,
                      const LossWeights& weights, const TokenBatch& images,
                      const TokenBatch& texts, const ForwardNoise* noise);

// Rows L2-normalised with masked rows zeroed.
Tensor UnitTokens(const TokenBatch& batch);

}  // namespace grm

#endif  // GRM_MODEL_H_
