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

#ifndef GRM_EMBEDDINGS_H_
#define GRM_EMBEDDINGS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grm/tensor.h"

namespace grm {

enum class Modality : std::uint8_t { kImage = 0, kText = 1 };

// B instances of L tokens of width d. mask[b][l] marks valid tokens.
struct TokenBatch {
  Modality modality = Modality::kImage;
  Tensor embeddings;  // [B x L x d]
  Mask mask;          // [B x L]
  std::vector<std::string> ids;

  std::size_t batch() const { return embeddings.dim(0); }
  std::size_t length() const { return embeddings.dim(1); }
  std::size_t dim() const { return embeddings.dim(2); }

  // Throws kInconsistentShape on any structural violation (rank, mask shape,
  // id count, instance without a valid token).
  void Validate() const;

  // Instances at `indices`, in that order.
  TokenBatch Select(std::span<const std::size_t> indices) const;
  // One instance as a [1 x L x d] batch.
  TokenBatch Instance(std::size_t index) const;
};

struct SyntheticSpec {
  std::size_t batch = 32;
  std::size_t image_len = 16;
  std::size_t text_len = 8;
  std::size_t dim = 32;
  std::size_t n_concepts = 4;
  double noise_scale = 0.1;
  std::uint64_t seed = 7;

  void Validate() const;
};

struct SyntheticPair {
  TokenBatch images;
  TokenBatch texts;
};

// Planted-correspondence corpus. Instance i owns n_concepts random unit
// vectors. Image tokens are those concepts in contiguous blocks of
// floor(L_v / n_concepts) (leftover positions cycle through the concepts)
// plus Gaussian noise. Text i has a uniform length in [n_concepts, L_t]; each
// concept appears once at a random valid position, the other valid positions
// are pure noise, and positions past the length are masked and zero.
SyntheticPair GenerateSynthetic(const SyntheticSpec& spec);

// GRT1 container: "GRT1", u8 modality, u32 B, L, d (little endian), B*L mask
// bytes, B*L*d little-endian f64 values, then B u32-length-prefixed ids.
std::string EncodeBatch(const TokenBatch& batch);
TokenBatch DecodeBatch(std::string_view bytes);

void WriteBatch(const TokenBatch& batch, const std::filesystem::path& path);
TokenBatch ReadBatch(const std::filesystem::path& path);

// Whole-file helpers shared by the binary formats.
std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace grm

#endif  // GRM_EMBEDDINGS_H_
