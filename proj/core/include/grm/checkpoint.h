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

#ifndef GRM_CHECKPOINT_H_
#define GRM_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "grm/model.h"
#include "grm/optimizer.h"
#include "grm/train_config.h"

namespace grm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume training bit-for-bit at an epoch boundary.
struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  std::string gumbel_rng;
  std::string gaussian_rng;
  std::string data_rng;
};

// "GRMC" | u32 version | u32 record count | records | config JSON |
// u64 step | u64 optimizer steps | three RNG state strings.
// A record is name, u32 rank, u32 extents, f64 payload. Optimizer moments
// are stored as records named "adam.m/<param>" and "adam.v/<param>".
std::string EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(std::string_view bytes);

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace grm

#endif  // GRM_CHECKPOINT_H_
