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

#ifndef GRM_RANDOM_H_
#define GRM_RANDOM_H_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "grm/tensor.h"

namespace grm {

// splitmix64 finalizer; derives independent substream seeds.
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream);

// Seeded 64-bit generator. Conversions to uniform/normal are done here
// rather than through <random> distributions so draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of resolution.
  double Uniform();
  // Standard normal via Box-Muller (one value per call, no cached spare).
  double Normal();
  // Uniform integer in [lo, hi].
  std::uint64_t UniformInt(std::uint64_t lo, std::uint64_t hi);

  Tensor NormalTensor(Shape shape, double stddev = 1.0);

  std::string SerializeState() const;
  void RestoreState(std::string_view state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace grm

#endif  // GRM_RANDOM_H_
