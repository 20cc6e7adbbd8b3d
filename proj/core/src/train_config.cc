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

#include "grm/train_config.h"

#include <algorithm>
#include <cctype>

#include "grm/errors.h"
#include "json.hpp"

namespace grm {

namespace {

using Json = nlohmann::ordered_json;

std::string Lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) Throw(ErrorCode::kParameter, "epochs must be >= 1");
  if (batch_size < 2) Throw(ErrorCode::kParameter, "batch_size must be >= 2");
  // A zero learning rate is accepted as a no-op probe.
  if (!(learning_rate >= 0.0)) Throw(ErrorCode::kParameter, "learning_rate must be >= 0");
  if (weight_decay < 0.0) Throw(ErrorCode::kParameter, "weight_decay must be >= 0");
  if (clip_norm < 0.0) Throw(ErrorCode::kParameter, "clip_norm must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    Throw(ErrorCode::kParameter, "Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) Throw(ErrorCode::kParameter, "adam_epsilon must be > 0");
  model.Validate();
  weights.Validate();
}

std::string_view OptimizerName(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adamw";
}
std::string_view NegativeModeName(NegativeMode mode) {
  return mode == NegativeMode::kSumAll ? "sum_all" : "hardest";
}
std::string_view EntropySourceName(EntropySource source) {
  return source == EntropySource::kRaw ? "raw" : "normalized";
}
std::string_view NoiseModeName(NoiseMode mode) {
  return mode == NoiseMode::kPerPatch ? "per_patch" : "per_region";
}

OptimizerKind ParseOptimizer(std::string_view name) {
  const std::string n = Lower(name);
  if (n == "sgd") return OptimizerKind::kSgd;
  if (n == "adamw") return OptimizerKind::kAdamW;
  Throw(ErrorCode::kParameter, "unknown optimizer '" + std::string(name) + "'");
}

NegativeMode ParseNegativeMode(std::string_view name) {
  const std::string n = Lower(name);
  if (n == "sum_all") return NegativeMode::kSumAll;
  if (n == "hardest") return NegativeMode::kHardest;
  Throw(ErrorCode::kParameter, "unknown negative mode '" + std::string(name) + "'");
}

EntropySource ParseEntropySource(std::string_view name) {
  const std::string n = Lower(name);
  if (n == "raw") return EntropySource::kRaw;
  if (n == "normalized") return EntropySource::kNormalized;
  Throw(ErrorCode::kParameter, "unknown entropy source '" + std::string(name) + "'");
}

NoiseMode ParseNoiseMode(std::string_view name) {
  const std::string n = Lower(name);
  if (n == "per_patch") return NoiseMode::kPerPatch;
  if (n == "per_region") return NoiseMode::kPerRegion;
  Throw(ErrorCode::kParameter, "unknown noise mode '" + std::string(name) + "'");
}

std::string TrainConfigToJson(const TrainConfig& c) {
  const ModelConfig& m = c.model;
  const LossWeights& w = c.weights;
  Json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["optimizer"] = OptimizerName(c.optimizer);
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["clip_norm"] = c.clip_norm;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["model"] = Json{{"dim", m.dim},
                    {"hidden", m.hidden},
                    {"num_prompts", m.num_prompts},
                    {"tau", m.tau},
                    {"adapter_bias", m.adapter_bias},
                    {"phi_hidden", m.phi_hidden},
                    {"noise_mode", NoiseModeName(m.noise_mode)},
                    {"visual_adapter", m.visual_adapter},
                    {"text_adapter", m.text_adapter},
                    {"region_prompting", m.region_prompting},
                    {"uncertainty", m.uncertainty}};
  j["weights"] = Json{{"a", w.a},
                      {"b", w.b},
                      {"c", w.c},
                      {"alpha", w.alpha},
                      {"lambda_recon", w.lambda_recon},
                      {"lambda_reg", w.lambda_reg},
                      {"negative_mode", NegativeModeName(w.negative_mode)},
                      {"entropy_source", EntropySourceName(w.entropy_source)},
                      {"kl_average_over_dim", w.kl_average_over_dim},
                      {"use_con_ori", w.use_con_ori},
                      {"use_con_key", w.use_con_key},
                      {"use_con_unc", w.use_con_unc},
                      {"use_recon", w.use_recon},
                      {"use_kl", w.use_kl},
                      {"use_entropy", w.use_entropy}};
  return j.dump();
}

TrainConfig TrainConfigFromJson(std::string_view text) {
  TrainConfig c;
  try {
    const Json j = Json::parse(text);
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.optimizer = ParseOptimizer(j.at("optimizer").get<std::string>());
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    const Json& m = j.at("model");
    c.model.dim = m.at("dim").get<std::size_t>();
    c.model.hidden = m.at("hidden").get<std::size_t>();
    c.model.num_prompts = m.at("num_prompts").get<std::size_t>();
    c.model.tau = m.at("tau").get<double>();
    c.model.adapter_bias = m.at("adapter_bias").get<bool>();
    c.model.phi_hidden = m.at("phi_hidden").get<std::size_t>();
    c.model.noise_mode = ParseNoiseMode(m.at("noise_mode").get<std::string>());
    c.model.visual_adapter = m.at("visual_adapter").get<bool>();
    c.model.text_adapter = m.at("text_adapter").get<bool>();
    c.model.region_prompting = m.at("region_prompting").get<bool>();
    c.model.uncertainty = m.at("uncertainty").get<bool>();
    const Json& w = j.at("weights");
    c.weights.a = w.at("a").get<double>();
    c.weights.b = w.at("b").get<double>();
    c.weights.c = w.at("c").get<double>();
    c.weights.alpha = w.at("alpha").get<double>();
    c.weights.lambda_recon = w.at("lambda_recon").get<double>();
    c.weights.lambda_reg = w.at("lambda_reg").get<double>();
    c.weights.negative_mode = ParseNegativeMode(w.at("negative_mode").get<std::string>());
    c.weights.entropy_source = ParseEntropySource(w.at("entropy_source").get<std::string>());
    c.weights.kl_average_over_dim = w.at("kl_average_over_dim").get<bool>();
    c.weights.use_con_ori = w.at("use_con_ori").get<bool>();
    c.weights.use_con_key = w.at("use_con_key").get<bool>();
    c.weights.use_con_unc = w.at("use_con_unc").get<bool>();
    c.weights.use_recon = w.at("use_recon").get<bool>();
    c.weights.use_kl = w.at("use_kl").get<bool>();
    c.weights.use_entropy = w.at("use_entropy").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    Throw(ErrorCode::kCorruptPayload, std::string("config JSON: ") + e.what());
  }
  return c;
}

namespace {

struct ArmName {
  AblationArm arm;
  std::string_view canonical;
  std::string_view table;
};

constexpr ArmName kArmNames[] = {
    {AblationArm::kFull, "full", "full"},
    {AblationArm::kNoSignificanceAdapter, "wo_sa", "w/o SA"},
    {AblationArm::kNoGranularityAdapter, "wo_ga", "w/o GA"},
    {AblationArm::kNoRegionPrompts, "wo_rp", "w/o RP"},
    {AblationArm::kNoUncertainty, "wo_um", "w/o UM"},
    {AblationArm::kNoConOri, "wo_con_ori", "w/o L_con_ori"},
    {AblationArm::kNoConKey, "wo_con_key", "w/o L_con_key"},
    {AblationArm::kNoConUnc, "wo_con_unc", "w/o L_con_unc"},
    {AblationArm::kNoRecon, "wo_recon", "w/o L_recon"},
    {AblationArm::kNoReg, "wo_reg", "w/o L_reg"},
};

}  // namespace

AblationArm ParseAblationArm(std::string_view name) {
  const std::string n = Lower(name);
  for (const auto& entry : kArmNames) {
    if (n == entry.canonical || n == Lower(entry.table)) return entry.arm;
  }
  Throw(ErrorCode::kParameter, "unknown ablation arm '" + std::string(name) + "'");
}

std::string_view AblationArmName(AblationArm arm) {
  for (const auto& entry : kArmNames) {
    if (entry.arm == arm) return entry.canonical;
  }
  return "unknown";
}

std::vector<AblationArm> AllAblationArms() {
  std::vector<AblationArm> arms;
  for (const auto& entry : kArmNames) arms.push_back(entry.arm);
  return arms;
}

void ApplyAblation(AblationArm arm, TrainConfig& config) {
  switch (arm) {
    case AblationArm::kFull: break;
    case AblationArm::kNoSignificanceAdapter: config.model.visual_adapter = false; break;
    case AblationArm::kNoGranularityAdapter: config.model.text_adapter = false; break;
    case AblationArm::kNoRegionPrompts: config.model.region_prompting = false; break;
    case AblationArm::kNoUncertainty: config.model.uncertainty = false; break;
    case AblationArm::kNoConOri: config.weights.use_con_ori = false; break;
    case AblationArm::kNoConKey: config.weights.use_con_key = false; break;
    case AblationArm::kNoConUnc: config.weights.use_con_unc = false; break;
    case AblationArm::kNoRecon: config.weights.use_recon = false; break;
    case AblationArm::kNoReg:
      config.weights.use_kl = false;
      config.weights.use_entropy = false;
      break;
  }
}

}  // namespace grm
