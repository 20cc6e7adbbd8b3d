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

#include "grm/trainer.h"

#include <cmath>
#include <numeric>

#include "grm/errors.h"
#include "grm/eval.h"
#include "grm/model.h"
#include "grm/optimizer.h"
#include "json.hpp"

namespace grm {

namespace {

constexpr std::uint64_t kDataStream = 4;

std::string ComparableConfig(TrainConfig c) {
  c.epochs = 1;
  c.eval_every = 0;
  return TrainConfigToJson(c);
}

void Shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.UniformInt(0, i - 1);
    std::swap(order[i - 1], order[j]);
  }
}

std::vector<std::vector<std::size_t>> Batches(const std::vector<std::size_t>& order,
                                              std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    // A singleton batch has no negatives.
    if (end - start < 2) break;
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

}  // namespace

std::string StepRecordJson(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["l_con_ori"] = r.report.l_con_ori;
  j["l_con_key"] = r.report.l_con_key;
  j["l_con_unc"] = r.report.l_con_unc;
  j["l_recon"] = r.report.l_recon;
  j["l_kl"] = r.report.l_kl;
  j["l_ent"] = r.report.l_ent;
  j["total"] = r.report.total;
  return j.dump();
}

TrainResult Train(const TokenBatch& images, const TokenBatch& texts, const TrainConfig& config,
                  const Checkpoint* resume, const TrainHooks& hooks) {
  config.Validate();
  images.Validate();
  texts.Validate();
  if (images.batch() != texts.batch()) {
    Throw(ErrorCode::kParameter, "image and text batches differ in size");
  }
  if (images.ids != texts.ids) {
    Throw(ErrorCode::kParameter, "image and text ids are not aligned index-wise");
  }
  if (images.dim() != config.model.dim || texts.dim() != config.model.dim) {
    Throw(ErrorCode::kConfig, "embedding width does not match model d");
  }

  Checkpoint state;
  state.config = config;
  NoiseStreams streams = NoiseStreams::FromSeed(config.seed);
  Rng data_rng(MixSeed(config.seed, kDataStream));
  if (resume) {
    if (ComparableConfig(resume->config) != ComparableConfig(config)) {
      Throw(ErrorCode::kConfig, "checkpoint was written with a different configuration");
    }
    state.params = resume->params;
    state.step = resume->step;
    streams.gumbel.RestoreState(resume->gumbel_rng);
    streams.gaussian.RestoreState(resume->gaussian_rng);
    data_rng.RestoreState(resume->data_rng);
  } else {
    state.params = ModelParams::Create(config.model, config.seed);
  }

  const std::size_t expected = ExpectedParameterCount(config.model);
  if (state.params.TrainableCount() != expected) {
    Throw(ErrorCode::kContract, "trainable parameter count " +
                                    std::to_string(state.params.TrainableCount()) +
                                    " != expected " + std::to_string(expected));
  }

  Optimizer optimizer(config, state.params.Trainable());
  if (resume) optimizer.Restore(resume->optimizer);

  const std::size_t n = images.batch();
  const std::size_t per_epoch = Batches(std::vector<std::size_t>(n), config.batch_size).size();
  if (per_epoch == 0) Throw(ErrorCode::kParameter, "need at least two training pairs");
  if (state.step % per_epoch != 0) {
    Throw(ErrorCode::kContract, "checkpoint is not at an epoch boundary");
  }
  const std::size_t start_epoch = state.step / per_epoch;

  auto snapshot = [&]() {
    state.optimizer = optimizer.state();
    state.gumbel_rng = streams.gumbel.SerializeState();
    state.gaussian_rng = streams.gaussian.SerializeState();
    state.data_rng = data_rng.SerializeState();
    return state;
  };

  TrainResult result;
  const GroundTruth truth = IdentityGroundTruth(n);
  for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Shuffle(order, data_rng);
    for (const auto& indices : Batches(order, config.batch_size)) {
      const TokenBatch img = images.Select(indices);
      const TokenBatch txt = texts.Select(indices);
      const ForwardNoise noise =
          streams.Draw(indices.size(), img.length(), txt.length(), config.model);
      Tape tape;
      const ForwardResult fwd =
          Forward(tape, state.params, config.model, config.weights, img, txt, &noise);
      const std::string bad = fwd.loss.report.FirstNonFinite();
      if (!bad.empty()) {
        result.aborted = true;
        result.diagnostic = "non-finite " + bad + " at step " + std::to_string(state.step + 1);
        result.checkpoint = snapshot();
        return result;
      }
      tape.Backward(fwd.loss.total);
      if (!std::isfinite(GlobalGradNorm(state.params.Trainable()))) {
        result.aborted = true;
        result.diagnostic = "non-finite gradient at step " + std::to_string(state.step + 1);
        result.checkpoint = snapshot();
        return result;
      }
      optimizer.Step();
      ++state.step;

      StepRecord record{state.step, fwd.loss.report};
      result.log.push_back(record);
      if (hooks.on_step) hooks.on_step(record);

      if (config.eval_every && state.step % config.eval_every == 0) {
        const LevelScores scores =
            ScoreLevels(state.params, config.model, config.weights, images, texts);
        const auto reports = EvaluateScores(scores, truth);
        EvalRecord ev;
        ev.step = state.step;
        ev.i2t_r1 = FindReport(reports, Level::kCombined, Direction::kImageToText).r1;
        ev.t2i_r1 = FindReport(reports, Level::kCombined, Direction::kTextToImage).r1;
        ev.rsum = FindReport(reports, Level::kCombined, Direction::kImageToText).rsum;
        result.evals.push_back(ev);
        if (hooks.on_eval) hooks.on_eval(ev);
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(snapshot(), epoch + 1);
  }
  result.checkpoint = snapshot();
  return result;
}

GradientReport VerifyGradients(const TrainConfig& config, const ProbeSizes& probe,
                               double tolerance, double h) {
  if (probe.batch < 2 || probe.batch > 4 || probe.image_len > 6 || probe.text_len > 6 ||
      probe.dim > 8 || probe.image_len == 0 || probe.text_len == 0 || probe.dim == 0 ||
      probe.num_prompts == 0) {
    Throw(ErrorCode::kParameter, "probe sizes must satisfy 2<=B<=4, 1<=L<=6, 1<=d<=8, K>=1");
  }
  TrainConfig cfg = config;
  cfg.model.dim = probe.dim;
  cfg.model.num_prompts = probe.num_prompts;
  if (cfg.model.hidden > probe.dim) cfg.model.hidden = probe.dim;
  if (cfg.model.phi_hidden > probe.dim) cfg.model.phi_hidden = probe.dim;
  cfg.model.Validate();
  cfg.weights.Validate();

  SyntheticSpec spec;
  spec.batch = probe.batch;
  spec.image_len = probe.image_len;
  spec.text_len = probe.text_len;
  spec.dim = probe.dim;
  spec.n_concepts = std::min<std::size_t>(2, std::min(probe.image_len, probe.text_len));
  spec.noise_scale = 0.5;
  spec.seed = config.seed;
  const auto [images, texts] = GenerateSynthetic(spec);

  ModelParams params = ModelParams::Create(cfg.model, config.seed);
  NoiseStreams streams = NoiseStreams::FromSeed(config.seed);
  const ForwardNoise noise = streams.Draw(probe.batch, probe.image_len, probe.text_len, cfg.model);

  LossBuilder build = [&](Tape& tape) {
    return Forward(tape, params, cfg.model, cfg.weights, images, texts, &noise).loss.total;
  };
  const std::vector<Parameter*> trainable = params.Trainable();
  const GradCheckReport check = GradCheck(build, trainable, h, tolerance);

  GradientReport report;
  report.tolerance = tolerance;
  report.passed = true;
  for (const ParameterGroup& group : params.Groups()) {
    GroupGradient g;
    g.group = group.name;
    for (const Parameter* p : group.params) {
      for (const GradCheckEntry& e : check.entries) {
        if (e.name != p->name) continue;
        g.max_relative_error = std::max(g.max_relative_error, e.max_relative_error);
        for (std::size_t idx : e.offending) {
          g.offending.push_back(e.name + "[" + std::to_string(idx) + "]");
        }
      }
    }
    if (!g.offending.empty()) report.passed = false;
    report.groups.push_back(std::move(g));
  }
  return report;
}

}  // namespace grm
