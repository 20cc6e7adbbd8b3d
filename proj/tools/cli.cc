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

#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "grm/checkpoint.h"
#include "grm/embeddings.h"
#include "grm/errors.h"
#include "grm/eval.h"
#include "grm/sweep.h"
#include "grm/trainer.h"
#include "json.hpp"

namespace grm::cli {

namespace {

namespace fs = std::filesystem;

enum Group : unsigned {
  kData = 1u << 0,
  kSeed = 1u << 1,
  kModel = 1u << 2,
  kLoss = 1u << 3,
  kTrain = 1u << 4,
  kInput = 1u << 5,
  kCheckpoint = 1u << 6,
  kResume = 1u << 7,
  kLog = 1u << 8,
  kSweep = 1u << 9,
  kPair = 1u << 10,
  kTruth = 1u << 11,
  kOut = 1u << 12,
};

struct KeyInfo {
  std::string_view key;
  std::string_view value;
  bool published;
  unsigned groups;
  std::string_view help;
};

constexpr KeyInfo kKeys[] = {
    {"B", "32", false, kData, "synthetic corpus size"},
    {"Lv", "16", false, kData, "image tokens per instance"},
    {"Lt", "8", false, kData, "text token slots per instance"},
    {"d", "32", false, kData | kModel, "embedding width"},
    {"n_concepts", "4", false, kData, "planted concepts per synthetic pair"},
    {"noise_scale", "0.1", false, kData, "synthetic token noise"},
    {"seed", "7", false, kSeed, "seed for data, initialisation and sampling"},
    {"K", "5", true, kModel, "number of region prompts"},
    {"hidden", "0", false, kModel, "adapter hidden width, 0 means d"},
    {"tau", "1", false, kModel, "Gumbel-Softmax temperature"},
    {"phi_hidden", "0", false, kModel, "log-variance head hidden width, 0 means affine"},
    {"noise_mode", "per_patch", false, kModel, "region noise: per_patch | per_region"},
    {"adapter_bias", "true", false, kModel, "adapter layers carry biases"},
    {"alpha", "0.2", true, kLoss, "contrastive margin"},
    {"a", "0.4", true, kLoss, "weight of the original-feature level"},
    {"b", "0.4", true, kLoss, "weight of the key-feature level"},
    {"c", "0.2", true, kLoss, "weight of the uncertainty level"},
    {"lambda_recon", "0.1", false, kLoss, "reconstruction loss weight"},
    {"lambda_reg", "0.1", false, kLoss, "KL + entropy regulariser weight"},
    {"negative_mode", "sum_all", false, kLoss, "hinge negatives: sum_all | hardest"},
    {"entropy_source", "raw", false, kLoss, "entropy over raw | normalized attention"},
    {"kl_average_over_dim", "true", false, kLoss, "divide the KL sum by B*d instead of B"},
    {"arm", "full", false, kTrain, "ablation arm (full, wo_sa, wo_ga, wo_rp, wo_um, ...)"},
    {"epochs", "30", true, kTrain, "training epochs"},
    {"batch_size", "32", false, kTrain, "mini-batch size"},
    {"lr", "0.001", false, kTrain, "learning rate"},
    {"weight_decay", "0.01", false, kTrain, "decoupled weight decay"},
    {"optimizer", "adamw", true, kTrain, "adamw | sgd"},
    {"beta1", "0.9", false, kTrain, "Adam first-moment decay"},
    {"beta2", "0.999", false, kTrain, "Adam second-moment decay"},
    {"adam_eps", "1e-08", false, kTrain, "Adam epsilon"},
    {"clip_norm", "0", false, kTrain, "global gradient-norm clip, 0 disables"},
    {"eval_every", "0", false, kTrain, "steps between training-set retrieval checks, 0 disables"},
    {"images", "", false, kInput, "GRT1 image batch; empty generates synthetic data"},
    {"texts", "", false, kInput, "GRT1 text batch; empty generates synthetic data"},
    {"captions_per_image", "1", false, kTruth, "text j belongs to image j / captions_per_image"},
    {"checkpoint", "", false, kCheckpoint, "GRMC checkpoint to load"},
    {"resume", "", false, kResume, "GRMC checkpoint to resume from"},
    {"log", "", false, kLog, "per-step JSON-lines log; empty means <out>/train_log.jsonl"},
    {"axis", "abc_weights", false, kSweep, "sweep axis: K | abc_weights | tau | ablation_arm"},
    {"values", "", false, kSweep, "comma-separated sweep values; empty uses the axis default"},
    {"pair", "0", false, kPair, "instance index exported by heatmap"},
    {"out", ".", false, kOut, "output directory"},
};

const KeyInfo* FindKey(std::string_view key) {
  for (const auto& k : kKeys) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

struct Subcommand {
  std::string_view name;
  std::string_view description;
  unsigned groups;
};

constexpr Subcommand kSubcommands[] = {
    {"gen-data", "write a synthetic paired corpus as GRT1 files", kData | kSeed | kOut},
    {"train", "train the alignment head",
     kData | kSeed | kModel | kLoss | kTrain | kInput | kResume | kLog | kOut},
    {"grad-check", "finite-difference check of every parameter group",
     kSeed | kModel | kLoss | kOut},
    {"eval", "retrieval metrics for a checkpoint",
     kData | kSeed | kInput | kCheckpoint | kTruth | kOut},
    {"sweep", "train one model per value along an axis and tabulate results",
     kData | kSeed | kModel | kLoss | kTrain | kInput | kSweep | kOut},
    {"heatmap", "export token and region alignment maps for one pair",
     kData | kSeed | kInput | kCheckpoint | kPair | kOut},
};

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class Resolved {
 public:
  explicit Resolved(Settings values) : values_(std::move(values)) {}

  const std::string& Str(const std::string& key) const { return values_.at(key); }

  std::size_t Size(const std::string& key) const {
    const std::string& s = Str(key);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) Bad(key, s);
    return v;
  }

  double Real(const std::string& key) const {
    const std::string& s = Str(key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) Bad(key, s);
    return v;
  }

  bool Flag(const std::string& key) const {
    const std::string& s = Str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    Bad(key, s);
  }

 private:
  [[noreturn]] static void Bad(const std::string& key, const std::string& value) {
    Throw(ErrorCode::kParameter, "invalid value '" + value + "' for " + key);
  }
  Settings values_;
};

TrainConfig BuildTrainConfig(const Resolved& r) {
  TrainConfig c;
  c.seed = r.Size("seed");
  c.model.dim = r.Size("d");
  c.model.num_prompts = r.Size("K");
  c.model.hidden = r.Size("hidden");
  c.model.tau = r.Real("tau");
  c.model.phi_hidden = r.Size("phi_hidden");
  c.model.noise_mode = ParseNoiseMode(r.Str("noise_mode"));
  c.model.adapter_bias = r.Flag("adapter_bias");
  c.weights.alpha = r.Real("alpha");
  c.weights.a = r.Real("a");
  c.weights.b = r.Real("b");
  c.weights.c = r.Real("c");
  c.weights.lambda_recon = r.Real("lambda_recon");
  c.weights.lambda_reg = r.Real("lambda_reg");
  c.weights.negative_mode = ParseNegativeMode(r.Str("negative_mode"));
  c.weights.entropy_source = ParseEntropySource(r.Str("entropy_source"));
  c.weights.kl_average_over_dim = r.Flag("kl_average_over_dim");
  c.epochs = r.Size("epochs");
  c.batch_size = r.Size("batch_size");
  c.learning_rate = r.Real("lr");
  c.weight_decay = r.Real("weight_decay");
  c.optimizer = ParseOptimizer(r.Str("optimizer"));
  c.beta1 = r.Real("beta1");
  c.beta2 = r.Real("beta2");
  c.adam_epsilon = r.Real("adam_eps");
  c.clip_norm = r.Real("clip_norm");
  c.eval_every = r.Size("eval_every");
  ApplyAblation(ParseAblationArm(r.Str("arm")), c);
  c.Validate();
  return c;
}

SyntheticPair LoadData(const Resolved& r) {
  const std::string& images = r.Str("images");
  const std::string& texts = r.Str("texts");
  if (images.empty() != texts.empty()) {
    Throw(ErrorCode::kParameter, "--images and --texts must be given together");
  }
  if (!images.empty()) return SyntheticPair{ReadBatch(images), ReadBatch(texts)};
  SyntheticSpec spec;
  spec.batch = r.Size("B");
  spec.image_len = r.Size("Lv");
  spec.text_len = r.Size("Lt");
  spec.dim = r.Size("d");
  spec.n_concepts = r.Size("n_concepts");
  spec.noise_scale = r.Real("noise_scale");
  spec.seed = r.Size("seed");
  return GenerateSynthetic(spec);
}

GroundTruth BuildTruth(const Resolved& r, std::size_t n_images, std::size_t n_texts) {
  const std::size_t per = r.Size("captions_per_image");
  if (per == 0) Throw(ErrorCode::kParameter, "captions_per_image must be >= 1");
  if (n_texts != n_images * per) {
    Throw(ErrorCode::kConfig, std::to_string(n_texts) + " texts for " + std::to_string(n_images) +
                                  " images at " + std::to_string(per) + " captions each");
  }
  GroundTruth gt(n_images);
  for (std::size_t j = 0; j < n_texts; ++j) gt[j / per].push_back(j);
  return gt;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string item = Trim(s.substr(start, comma == std::string::npos ? std::string::npos
                                                                             : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> DefaultSweepValues(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kNumPrompts: return {"1", "5", "20"};
    case SweepAxis::kAbcWeights: return WeightStudyValues();
    case SweepAxis::kTau: return {"0.5", "1", "2"};
    case SweepAxis::kAblationArm: {
      std::vector<std::string> arms;
      for (AblationArm arm : AllAblationArms()) arms.emplace_back(AblationArmName(arm));
      return arms;
    }
  }
  return {};
}

std::string Fixed(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::string LinesToCsv(const std::vector<RetrievalReport>& reports) {
  std::string csv = "level,direction,r1,r5,r10,rsum\n";
  for (const auto& r : reports) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g\n", LevelName(r.level).data(),
                  DirectionName(r.direction).data(), r.r1, r.r5, r.r10, r.rsum);
    csv += buf;
  }
  return csv;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) Throw(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
}

void PrintReports(std::ostream& out, const std::vector<RetrievalReport>& reports) {
  for (const auto& r : reports) {
    out << LevelName(r.level) << " " << DirectionName(r.direction) << " R@1=" << Fixed(r.r1, 1)
        << " R@5=" << Fixed(r.r5, 1) << " R@10=" << Fixed(r.r10, 1)
        << " rSum=" << Fixed(r.rsum, 1) << "\n";
  }
}

int GenData(const Resolved& r, const fs::path& out_dir, std::ostream& out) {
  const SyntheticPair data = LoadData(r);
  WriteBatch(data.images, out_dir / "images.grt1");
  WriteBatch(data.texts, out_dir / "texts.grt1");
  out << "wrote " << (out_dir / "images.grt1").string() << " and "
      << (out_dir / "texts.grt1").string() << "\n";
  return kOk;
}

int TrainCommand(const Resolved& r, const fs::path& out_dir, std::ostream& out) {
  const TrainConfig config = BuildTrainConfig(r);
  const SyntheticPair data = LoadData(r);
  std::optional<Checkpoint> resume;
  if (!r.Str("resume").empty()) resume = LoadCheckpoint(r.Str("resume"));

  const fs::path log_path = r.Str("log").empty() ? out_dir / "train_log.jsonl" : fs::path(r.Str("log"));
  const fs::path ckpt_path = out_dir / "checkpoint.grmc";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) Throw(ErrorCode::kIo, "cannot write " + log_path.string());
  std::ofstream eval_log;
  if (config.eval_every) {
    eval_log.open(out_dir / "eval_log.jsonl", std::ios::binary);
    if (!eval_log) Throw(ErrorCode::kIo, "cannot write eval_log.jsonl");
  }

  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& s) { log << StepRecordJson(s) << "\n"; };
  hooks.on_eval = [&](const EvalRecord& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["i2t_r1"] = e.i2t_r1;
    j["t2i_r1"] = e.t2i_r1;
    j["rsum"] = e.rsum;
    eval_log << j.dump() << "\n";
  };
  hooks.on_epoch = [&](const Checkpoint& c, std::size_t) { SaveCheckpoint(c, ckpt_path); };

  TrainResult result = Train(data.images, data.texts, config, resume ? &*resume : nullptr, hooks);
  log.close();
  SaveCheckpoint(result.checkpoint, ckpt_path);
  if (result.aborted) {
    Throw(ErrorCode::kNumerical, result.diagnostic + "; last good state saved to " + ckpt_path.string());
  }
  if (!result.log.empty()) {
    out << "steps " << result.log.size() << " initial_total "
        << Fixed(result.log.front().report.total) << " final_total "
        << Fixed(result.log.back().report.total) << "\n";
  }
  const auto reports = Evaluate(result.checkpoint, data.images, data.texts,
                                IdentityGroundTruth(data.images.batch()));
  PrintReports(out, reports);
  out << "checkpoint " << ckpt_path.string() << "\nlog " << log_path.string() << "\n";
  return kOk;
}

int GradCheckCommand(const Resolved& r, std::ostream& out) {
  const TrainConfig config = BuildTrainConfig(r);
  const GradientReport report = VerifyGradients(config);
  for (const auto& g : report.groups) {
    out << g.group << " max_relative_error " << g.max_relative_error
        << (g.offending.empty() ? " ok" : " FAIL") << "\n";
    for (std::size_t i = 0; i < g.offending.size() && i < 10; ++i) {
      out << "  offending " << g.offending[i] << "\n";
    }
  }
  if (!report.passed) {
    Throw(ErrorCode::kNumerical, "gradient check failed at tolerance " +
                                     std::to_string(report.tolerance));
  }
  return kOk;
}

Checkpoint RequireCheckpoint(const Resolved& r) {
  if (r.Str("checkpoint").empty()) Throw(ErrorCode::kParameter, "--checkpoint is required");
  return LoadCheckpoint(r.Str("checkpoint"));
}

int EvalCommand(const Resolved& r, const fs::path& out_dir, std::ostream& out) {
  Checkpoint ckpt = RequireCheckpoint(r);
  const SyntheticPair data = LoadData(r);
  const GroundTruth gt = BuildTruth(r, data.images.batch(), data.texts.batch());
  const auto reports = Evaluate(ckpt, data.images, data.texts, gt);
  PrintReports(out, reports);
  WriteText(out_dir / "retrieval.csv", LinesToCsv(reports));
  return kOk;
}

int SweepCommand(const Resolved& r, const fs::path& out_dir, std::ostream& out) {
  const TrainConfig base = BuildTrainConfig(r);
  const SyntheticPair data = LoadData(r);
  const SweepAxis axis = ParseSweepAxis(r.Str("axis"));
  std::vector<std::string> values = SplitList(r.Str("values"));
  if (values.empty()) values = DefaultSweepValues(axis);
  const SweepTable table = RunSweep(base, data.images, data.texts, axis, values);
  const std::string csv = table.ToCsv();
  WriteText(out_dir / "sweep.csv", csv);
  out << csv;
  return kOk;
}

int HeatmapCommand(const Resolved& r, const fs::path& out_dir, std::ostream& out) {
  Checkpoint ckpt = RequireCheckpoint(r);
  const SyntheticPair data = LoadData(r);
  const std::size_t pair = r.Size("pair");
  if (pair >= data.images.batch() || pair >= data.texts.batch()) {
    Throw(ErrorCode::kParameter, "pair index out of range");
  }
  const HeatmapOutput files =
      ExportHeatmap(ckpt.params, ckpt.config.model, data.images.Instance(pair),
                    data.texts.Instance(pair), out_dir / "heatmap");
  for (const auto& f : files.files) out << "wrote " << f.string() << "\n";
  for (const auto& w : files.warnings) out << "warning: " << w << "\n";
  return kOk;
}

int ExitFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return kUsage;
    case ErrorCode::kNumerical: return kNumerical;
    default: return kDataOrConfig;
  }
}

int Report(std::ostream& err, bool json, std::string_view code, const std::string& message,
           int exit_code) {
  if (json) {
    nlohmann::ordered_json j;
    j["error"] = code;
    j["message"] = message;
    j["exit_code"] = exit_code;
    err << j.dump() << "\n";
  } else {
    err << "grm: " << message << "\n";
  }
  return exit_code;
}

std::string SweepColumnsHelp() {
  std::string s = "sweep.csv columns:";
  for (const auto& c : SweepTable::Columns()) s += " " + c;
  return s;
}

}  // namespace

const Settings& DefaultSettings() {
  static const Settings defaults = [] {
    Settings s;
    for (const auto& k : kKeys) s[std::string(k.key)] = std::string(k.value);
    return s;
  }();
  return defaults;
}

Settings ParseConfigText(std::string_view text) {
  Settings out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      Throw(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!FindKey(key)) {
      Throw(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const bool json = std::find(args.begin(), args.end(), "--json") != args.end();

  CLI::App app{"Fine-grained image-text alignment head: training, evaluation and export.", "grm"};
  app.require_subcommand(1);
  app.footer("Environment: GRM_THREADS caps worker threads (default: all cores).\n"
             "Exit codes: 0 ok, 1 usage, 2 data/config, 3 numerical.");

  std::string config_path;
  bool json_flag = false;
  Settings flag_values;
  struct Bound {
    CLI::App* app;
    const Subcommand* spec;
    std::vector<std::pair<std::string, CLI::Option*>> options;
  };
  std::vector<Bound> bound;
  for (const auto& sc : kSubcommands) {
    CLI::App* sub = app.add_subcommand(std::string(sc.name), std::string(sc.description));
    Bound b{sub, &sc, {}};
    sub->add_option("--config", config_path, "key=value configuration file; flags override it");
    sub->add_flag("--json", json_flag, "print errors as JSON on stderr");
    for (const auto& k : kKeys) {
      if (!(k.groups & sc.groups)) continue;
      const std::string key(k.key);
      std::string desc = std::string(k.help) + " (default: " +
                         (k.value.empty() ? std::string("none") : std::string(k.value)) + ") " +
                         (k.published ? "[PAPER-default]" : "[artifact-default]");
      CLI::Option* opt = sub->add_option("--" + key, flag_values[key], desc);
      b.options.emplace_back(key, opt);
    }
    if (sc.name == "sweep") sub->footer(SweepColumnsHelp());
    bound.push_back(std::move(b));
  }

  std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kOk;
    }
    if (json) return Report(err, true, "usage", e.what(), kUsage);
    app.exit(e, out, err);
    return kUsage;
  }

  const Bound* active = nullptr;
  for (const auto& b : bound) {
    if (b.app->parsed()) active = &b;
  }

  try {
    Settings settings = DefaultSettings();
    if (!config_path.empty()) {
      std::ifstream f(config_path, std::ios::binary);
      if (!f) Throw(ErrorCode::kConfig, "cannot read config file " + config_path);
      const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      for (const auto& [k, v] : ParseConfigText(text)) settings[k] = v;
    }
    for (const auto& [key, opt] : active->options) {
      if (opt->count() > 0) settings[key] = flag_values[key];
    }

    out << "# resolved configuration: grm " << active->spec->name << "\n";
    for (const auto& k : kKeys) {
      if (k.groups & active->spec->groups) out << k.key << "=" << settings[std::string(k.key)] << "\n";
    }
    out.flush();

    const Resolved resolved(settings);
    const fs::path out_dir = resolved.Str("out");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) Throw(ErrorCode::kIo, "cannot create output directory " + out_dir.string());

    const std::string_view name = active->spec->name;
    if (name == "gen-data") return GenData(resolved, out_dir, out);
    if (name == "train") return TrainCommand(resolved, out_dir, out);
    if (name == "grad-check") return GradCheckCommand(resolved, out);
    if (name == "eval") return EvalCommand(resolved, out_dir, out);
    if (name == "sweep") return SweepCommand(resolved, out_dir, out);
    return HeatmapCommand(resolved, out_dir, out);
  } catch (const Error& e) {
    return Report(err, json, ErrorCodeName(e.code()), e.what(), ExitFor(e.code()));
  } catch (const std::exception& e) {
    return Report(err, json, "internal", e.what(), kDataOrConfig);
  }
}

}  // namespace grm::cli
