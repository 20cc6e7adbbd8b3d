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

#include "grm/model.h"

#include <algorithm>
#include <cmath>

#include "grm/errors.h"

namespace grm {

namespace {

enum SeedStream : std::uint64_t { kInitStream = 1, kGumbelStream = 2, kGaussianStream = 3 };

}  // namespace

void ModelConfig::Validate() const {
  if (dim == 0) Throw(ErrorCode::kParameter, "model width d must be positive");
  if (num_prompts == 0) Throw(ErrorCode::kParameter, "K must be >= 1");
  if (!(tau > 0.0)) Throw(ErrorCode::kParameter, "tau must be > 0");
}

ModelParams ModelParams::Create(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  Rng rng(MixSeed(seed, kInitStream));
  ModelParams p;
  p.visual = AdapterParams::Create("visual_adapter", config.dim, config.hidden_dim(),
                                   config.tau, config.adapter_bias, rng);
  p.text = AdapterParams::Create("text_adapter", config.dim, config.hidden_dim(), config.tau,
                                 config.adapter_bias, rng);
  p.region = RegionParams::Create(config.num_prompts, config.dim, config.phi_hidden, rng);
  return p;
}

std::vector<Parameter*> ModelParams::Trainable() {
  std::vector<Parameter*> out;
  for (auto* p : visual.Trainable()) out.push_back(p);
  for (auto* p : text.Trainable()) out.push_back(p);
  for (auto* p : region.Trainable()) out.push_back(p);
  return out;
}

std::vector<Parameter*> ModelParams::All() {
  std::vector<Parameter*> out;
  for (auto* p : visual.All()) out.push_back(p);
  for (auto* p : text.All()) out.push_back(p);
  for (auto* p : region.Trainable()) out.push_back(p);
  return out;
}

std::vector<ParameterGroup> ModelParams::Groups() {
  std::vector<ParameterGroup> groups;
  groups.push_back({"visual_adapter", visual.Trainable()});
  groups.push_back({"text_adapter", text.Trainable()});
  groups.push_back({"region_prompts", {&region.prompts}});
  ParameterGroup head{"log_variance_head", {&region.phi_w, &region.phi_b}};
  if (region.phi_hidden) {
    head.params.push_back(&region.phi_w2);
    head.params.push_back(&region.phi_b2);
  }
  groups.push_back(head);
  return groups;
}

std::size_t ModelParams::TrainableCount() {
  std::size_t n = 0;
  for (auto* p : Trainable()) n += p->value.size();
  return n;
}

std::size_t ExpectedParameterCount(const ModelConfig& config) {
  const std::size_t d = config.dim, h = config.hidden_dim(), K = config.num_prompts;
  const std::size_t adapter = d * h + h * 2 + (config.adapter_bias ? h + 2 : 0);
  const std::size_t head = config.phi_hidden
                               ? d * config.phi_hidden + config.phi_hidden +
                                     config.phi_hidden * d + d
                               : d * d + d;
  return 2 * adapter + K * d + head;
}

NoiseStreams NoiseStreams::FromSeed(std::uint64_t seed) {
  return NoiseStreams{Rng(MixSeed(seed, kGumbelStream)), Rng(MixSeed(seed, kGaussianStream))};
}

ForwardNoise NoiseStreams::Draw(std::size_t batch, std::size_t image_len, std::size_t text_len,
                                const ModelConfig& config) {
  ForwardNoise noise;
  noise.image_gumbel = SampleAdapterNoise(batch, image_len, gumbel);
  noise.text_gumbel = SampleAdapterNoise(batch, text_len, gumbel);
  noise.region_eps = SampleRegionNoise(batch, image_len, config.num_prompts, config.dim,
                                       config.noise_mode, gaussian);
  return noise;
}

Tensor UnitTokens(const TokenBatch& batch) {
  Tensor out = batch.embeddings;
  const std::size_t d = batch.dim();
  const std::size_t rows = batch.batch() * batch.length();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.mutable_data().data() + r * d;
    if (!batch.mask[r]) {
      std::fill(row, row + d, 0.0);
      continue;
    }
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
    const double denom = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t j = 0; j < d; ++j) row[j] /= denom;
  }
  return out;
}

Encoded Encode(Tape& tape, ModelParams& params, const ModelConfig& config,
               const TokenBatch& images, const TokenBatch& texts, const ForwardNoise* noise) {
  images.Validate();
  texts.Validate();
  if (images.dim() != config.dim || texts.dim() != config.dim) {
    Throw(ErrorCode::kConfig, "embedding width " + std::to_string(images.dim()) + "/" +
                                  std::to_string(texts.dim()) + " does not match model d = " +
                                  std::to_string(config.dim));
  }
  Encoded e;
  e.image_unit = tape.Constant(UnitTokens(images));
  e.text_unit = tape.Constant(UnitTokens(texts));

  if (config.visual_adapter) {
    e.image = Adapt(e.image_unit, images.mask, Bind(tape, params.visual),
                    noise ? &noise->image_gumbel : nullptr);
  } else {
    e.image = PassThrough(e.image_unit, images.mask);
  }
  if (config.text_adapter) {
    e.text = Adapt(e.text_unit, texts.mask, Bind(tape, params.text),
                   noise ? &noise->text_gumbel : nullptr);
  } else {
    e.text = PassThrough(e.text_unit, texts.mask);
  }

  e.levels.ori = BatchSimilarity(tape.Constant(images.embeddings), images.mask,
                                 tape.Constant(texts.embeddings), texts.mask,
                                 TokenMetric::kCosine);
  e.levels.key = BatchSimilarity(e.image.features, images.mask, e.text.features, texts.mask,
                                 TokenMetric::kDot);

  if (!config.region_prompting) {
    e.levels.unc = e.levels.key;
    return e;
  }
  BoundRegion region = Bind(tape, params.region);
  GaussianRegions g;
  RegionAttention attn = Attend(e.image.features, images.mask, region.prompts);
  g.attn_raw = attn.raw;
  g.attn_norm = attn.norm;
  g.mu = RegionMeans(attn.norm, e.image.features);
  g.log_var = PredictLogVar(g.mu, region);
  const bool stochastic = noise && config.uncertainty;
  g.u = SampleRegions(g.mu, g.log_var, g.attn_norm, stochastic ? &noise->region_eps : nullptr);
  e.regions = g;

  const Mask region_mask({images.batch(), config.num_prompts}, true);
  e.levels.unc = BatchSimilarity(g.u, region_mask, e.text.features, texts.mask, TokenMetric::kDot);
  return e;
}

ForwardResult Forward(Tape& tape, ModelParams& params, const ModelConfig& config,
                      const LossWeights& weights, const TokenBatch& images,
                      const TokenBatch& texts, const ForwardNoise* noise) {
  if (images.batch() != texts.batch()) {
    Throw(ErrorCode::kParameter, "paired batches differ in size");
  }
  ForwardResult out;
  out.encoded = Encode(tape, params, config, images, texts, noise);
  LossWeights effective = weights;
  if (!config.uncertainty) effective.use_kl = false;
  const GaussianRegions* regions =
      out.encoded.regions ? &*out.encoded.regions : nullptr;
  out.loss = TotalLoss(out.encoded.levels, regions, out.encoded.image, images.mask, effective);
  return out;
}

}  // namespace grm
