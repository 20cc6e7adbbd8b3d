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

#include "grm/embeddings.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "grm/binary_io.h"
#include "grm/errors.h"
#include "grm/random.h"

namespace grm {

namespace {

constexpr std::string_view kBatchMagic = "GRT1";

[[noreturn]] void Inconsistent(const std::string& message) {
  Throw(ErrorCode::kInconsistentShape, message);
}

}  // namespace

void TokenBatch::Validate() const {
  if (embeddings.rank() != 3) {
    Inconsistent("token batch embeddings must be [B x L x d], got " +
                 ShapeToString(embeddings.shape()));
  }
  if (mask.shape() != Shape{batch(), length()}) {
    Inconsistent("mask " + ShapeToString(mask.shape()) + " does not match embeddings " +
                 ShapeToString(embeddings.shape()));
  }
  if (ids.size() != batch()) {
    Inconsistent("expected " + std::to_string(batch()) + " ids, got " +
                 std::to_string(ids.size()));
  }
  for (std::size_t b = 0; b < batch(); ++b) {
    bool any = false;
    for (std::size_t l = 0; l < length() && !any; ++l) any = mask.at(b, l);
    if (!any) Inconsistent("instance " + std::to_string(b) + " has no valid token");
  }
}

TokenBatch TokenBatch::Select(std::span<const std::size_t> indices) const {
  const std::size_t L = length(), d = dim();
  TokenBatch out;
  out.modality = modality;
  std::vector<double> data;
  std::vector<std::uint8_t> bits;
  data.reserve(indices.size() * L * d);
  for (std::size_t idx : indices) {
    if (idx >= batch()) {
      Throw(ErrorCode::kParameter, "instance index " + std::to_string(idx) + " out of range");
    }
    auto src = embeddings.data().subspan(idx * L * d, L * d);
    data.insert(data.end(), src.begin(), src.end());
    for (std::size_t l = 0; l < L; ++l) bits.push_back(mask.at(idx, l));
    out.ids.push_back(ids[idx]);
  }
  out.embeddings = Tensor({indices.size(), L, d}, std::move(data));
  out.mask = Mask({indices.size(), L}, std::move(bits));
  return out;
}

TokenBatch TokenBatch::Instance(std::size_t index) const {
  const std::size_t one[] = {index};
  return Select(one);
}

void SyntheticSpec::Validate() const {
  if (batch == 0 || image_len == 0 || text_len == 0 || dim == 0 || n_concepts == 0) {
    Throw(ErrorCode::kParameter, "synthetic spec extents must be positive");
  }
  if (dim < 2) Throw(ErrorCode::kParameter, "synthetic spec needs d >= 2");
  if (n_concepts > std::min(image_len, text_len)) {
    Throw(ErrorCode::kParameter, "n_concepts must not exceed min(L_v, L_t)");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    Throw(ErrorCode::kParameter, "noise_scale must be finite and non-negative");
  }
}

SyntheticPair GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  const std::size_t B = spec.batch, Lv = spec.image_len, Lt = spec.text_len, d = spec.dim;
  const std::size_t nc = spec.n_concepts;
  Rng rng(spec.seed);

  Tensor image({B, Lv, d});
  Tensor text({B, Lt, d});
  Mask text_mask({B, Lt}, false);
  std::vector<std::string> ids;

  std::vector<double> concepts(nc * d);
  const std::size_t block = Lv / nc;
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t c = 0; c < nc; ++c) {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          concepts[c * d + j] = rng.Normal();
          norm += concepts[c * d + j] * concepts[c * d + j];
        }
      } while (norm < 1e-24);
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < d; ++j) concepts[c * d + j] /= norm;
    }

    for (std::size_t l = 0; l < Lv; ++l) {
      const std::size_t c = l < block * nc ? l / block : l % nc;
      for (std::size_t j = 0; j < d; ++j) {
        image.at(i, l, j) = concepts[c * d + j] + spec.noise_scale * rng.Normal();
      }
    }

    const std::size_t length = rng.UniformInt(nc, Lt);
    std::vector<std::size_t> slots(length);
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t k = length; k > 1; --k) {
      std::swap(slots[k - 1], slots[rng.UniformInt(0, k - 1)]);
    }
    for (std::size_t s = 0; s < length; ++s) {
      const std::size_t l = slots[s];
      text_mask.set(i * Lt + l, true);
      for (std::size_t j = 0; j < d; ++j) {
        const double base = s < nc ? concepts[s * d + j] : 0.0;
        text.at(i, l, j) = base + spec.noise_scale * rng.Normal();
      }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "pair-%05zu", i);
    ids.emplace_back(id);
  }

  SyntheticPair pair;
  pair.images = TokenBatch{Modality::kImage, std::move(image), Mask({B, Lv}, true), ids};
  pair.texts = TokenBatch{Modality::kText, std::move(text), std::move(text_mask), ids};
  return pair;
}

std::string EncodeBatch(const TokenBatch& batch) {
  batch.Validate();
  const std::size_t B = batch.batch(), L = batch.length(), d = batch.dim();
  std::string out;
  out.reserve(17 + B * L + B * L * d * 8);
  out.append(kBatchMagic);
  binary::PutU8(out, static_cast<std::uint8_t>(batch.modality));
  binary::PutU32(out, static_cast<std::uint32_t>(B));
  binary::PutU32(out, static_cast<std::uint32_t>(L));
  binary::PutU32(out, static_cast<std::uint32_t>(d));
  for (auto bit : batch.mask.bits()) binary::PutU8(out, bit);
  for (double v : batch.embeddings.data()) binary::PutF64(out, v);
  for (const auto& id : batch.ids) binary::PutString(out, id);
  return out;
}

TokenBatch DecodeBatch(std::string_view bytes) {
  binary::Reader in(bytes);
  if (bytes.size() < kBatchMagic.size() || bytes.substr(0, kBatchMagic.size()) != kBatchMagic) {
    Throw(ErrorCode::kBadMagic, "not a GRT1 token batch");
  }
  in.Take(kBatchMagic.size(), "magic");
  const std::uint8_t modality = in.U8("modality");
  if (modality > 1) Inconsistent("unknown modality byte " + std::to_string(modality));
  const std::uint64_t B = in.U32("header"), L = in.U32("header"), d = in.U32("header");
  if (B == 0 || L == 0 || d == 0) Inconsistent("zero extent in GRT1 header");

  const std::uint64_t n_mask = B * L;
  const std::uint64_t n_values = B * L * d;
  if (in.remaining() < n_mask || (in.remaining() - n_mask) / 8 < n_values) {
    Throw(ErrorCode::kTruncated, "header declares " + std::to_string(n_values) +
                                     " values but payload is shorter");
  }
  std::vector<std::uint8_t> bits(n_mask);
  for (auto& bit : bits) {
    bit = in.U8("mask");
    if (bit > 1) Inconsistent("mask byte is neither 0 nor 1");
  }
  std::vector<double> values(n_values);
  for (double& v : values) v = in.F64("embeddings");
  std::vector<std::string> ids;
  for (std::uint64_t b = 0; b < B; ++b) ids.push_back(in.String("instance id"));
  if (in.remaining() != 0) {
    Inconsistent(std::to_string(in.remaining()) + " trailing bytes after GRT1 payload");
  }

  TokenBatch batch;
  batch.modality = static_cast<Modality>(modality);
  batch.embeddings = Tensor({B, L, d}, std::move(values));
  batch.mask = Mask({B, L}, std::move(bits));
  batch.ids = std::move(ids);
  batch.Validate();
  return batch;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Throw(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Throw(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Throw(ErrorCode::kIo, "short write to " + path.string());
}

void WriteBatch(const TokenBatch& batch, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeBatch(batch));
}

TokenBatch ReadBatch(const std::filesystem::path& path) {
  return DecodeBatch(ReadFileBytes(path));
}

}  // namespace grm
