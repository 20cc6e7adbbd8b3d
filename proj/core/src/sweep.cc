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

#include "grm/sweep.h"

#include <charconv>
#include <cstdio>

#include "grm/errors.h"
#include "grm/trainer.h"

namespace grm {

namespace {

double ParseDouble(std::string_view s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    Throw(ErrorCode::kParameter, std::string("bad ") + what + " value '" + std::string(s) + "'");
  }
  return v;
}

std::size_t ParseSize(std::string_view s, const char* what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    Throw(ErrorCode::kParameter, std::string("bad ") + what + " value '" + std::string(s) + "'");
  }
  return v;
}

std::string Num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// RFC-4180 quoting for free-text cells.
std::string Cell(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

SweepAxis ParseSweepAxis(std::string_view name) {
  if (name == "K" || name == "k" || name == "num_prompts") return SweepAxis::kNumPrompts;
  if (name == "abc_weights" || name == "abc") return SweepAxis::kAbcWeights;
  if (name == "tau") return SweepAxis::kTau;
  if (name == "ablation_arm" || name == "arm") return SweepAxis::kAblationArm;
  Throw(ErrorCode::kParameter, "unknown sweep axis '" + std::string(name) + "'");
}

std::string_view SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kNumPrompts: return "K";
    case SweepAxis::kAbcWeights: return "abc_weights";
    case SweepAxis::kTau: return "tau";
    case SweepAxis::kAblationArm: return "ablation_arm";
  }
  return "unknown";
}

std::vector<std::string> WeightStudyValues() {
  return {"0.2:0.2", "0.2:0.4", "0.2:0.6", "0.4:0.2", "0.4:0.4", "0.6:0.2"};
}

TrainConfig ApplySweepValue(const TrainConfig& base, SweepAxis axis, std::string_view value) {
  TrainConfig c = base;
  switch (axis) {
    case SweepAxis::kNumPrompts:
      c.model.num_prompts = ParseSize(value, "K");
      break;
    case SweepAxis::kTau:
      c.model.tau = ParseDouble(value, "tau");
      break;
    case SweepAxis::kAbcWeights: {
      std::vector<std::string_view> parts;
      std::size_t start = 0;
      while (true) {
        const std::size_t colon = value.find(':', start);
        parts.push_back(value.substr(start, colon - start));
        if (colon == std::string_view::npos) break;
        start = colon + 1;
      }
      if (parts.size() != 2 && parts.size() != 3) {
        Throw(ErrorCode::kParameter, "weights must be 'a:b' or 'a:b:c'");
      }
      c.weights.a = ParseDouble(parts[0], "a");
      c.weights.b = ParseDouble(parts[1], "b");
      c.weights.c = parts.size() == 3 ? ParseDouble(parts[2], "c") : 1.0 - c.weights.a - c.weights.b;
      break;
    }
    case SweepAxis::kAblationArm:
      ApplyAblation(ParseAblationArm(value), c);
      break;
  }
  c.Validate();
  return c;
}

const std::vector<std::string>& SweepTable::Columns() {
  static const std::vector<std::string> columns = {
      "axis",     "value",     "K",         "a",         "b",         "c",
      "tau",      "arm",       "steps",     "initial_total", "l_con_ori", "l_con_key",
      "l_con_unc", "l_recon",  "l_kl",      "l_ent",     "total",     "i2t_r1",
      "i2t_r5",   "i2t_r10",   "t2i_r1",    "t2i_r5",    "t2i_r10",   "rsum",
      "aborted"};
  return columns;
}

std::string SweepTable::ToCsv() const {
  std::string csv;
  for (std::size_t i = 0; i < Columns().size(); ++i) csv += (i ? "," : "") + Columns()[i];
  csv += "\n";
  for (const SweepRow& r : rows) {
    const RetrievalReport& i2t = FindReport(r.retrieval, Level::kCombined, Direction::kImageToText);
    const RetrievalReport& t2i = FindReport(r.retrieval, Level::kCombined, Direction::kTextToImage);
    const LossReport& f = r.final_report;
    const std::vector<std::string> cells = {
        Cell(r.axis), Cell(r.value), std::to_string(r.config.model.num_prompts),
        Num(r.config.weights.a), Num(r.config.weights.b), Num(r.config.weights.c),
        Num(r.config.model.tau), Cell(r.arm), std::to_string(r.steps), Num(r.initial_total),
        Num(f.l_con_ori), Num(f.l_con_key), Num(f.l_con_unc), Num(f.l_recon), Num(f.l_kl),
        Num(f.l_ent), Num(f.total), Num(i2t.r1), Num(i2t.r5), Num(i2t.r10), Num(t2i.r1),
        Num(t2i.r5), Num(t2i.r10), Num(i2t.rsum), r.aborted ? "1" : "0"};
    for (std::size_t i = 0; i < cells.size(); ++i) csv += (i ? "," : "") + cells[i];
    csv += "\n";
  }
  return csv;
}

SweepTable RunSweep(const TrainConfig& base, const TokenBatch& images, const TokenBatch& texts,
                    SweepAxis axis, const std::vector<std::string>& values) {
  if (values.empty()) Throw(ErrorCode::kParameter, "sweep needs at least one value");
  // Parse everything first so a bad value fails before any training.
  std::vector<TrainConfig> configs;
  for (const auto& v : values) configs.push_back(ApplySweepValue(base, axis, v));

  SweepTable table;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row;
    row.axis = SweepAxisName(axis);
    row.value = values[i];
    row.config = configs[i];
    if (axis == SweepAxis::kAblationArm) row.arm = AblationArmName(ParseAblationArm(values[i]));
    TrainResult result = Train(images, texts, configs[i]);
    row.steps = result.log.size();
    if (!result.log.empty()) {
      row.initial_total = result.log.front().report.total;
      row.final_report = result.log.back().report;
    }
    row.aborted = result.aborted;
    const auto reports = Evaluate(result.checkpoint, images, texts, IdentityGroundTruth(images.batch()));
    for (const auto& r : reports) {
      if (r.level == Level::kCombined) row.retrieval.push_back(r);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace grm
