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

#include "grm/checkpoint.h"

#include <map>

#include "grm/binary_io.h"
#include "grm/embeddings.h"
#include "grm/errors.h"

namespace grm {

namespace {

constexpr std::string_view kMagic = "GRMC";

void PutTensor(std::string& out, const std::string& name, const Tensor& t) {
  binary::PutString(out, name);
  binary::PutU32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) binary::PutU32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) binary::PutF64(out, v);
}

Tensor TakeTensor(binary::Reader& in, std::string* name) {
  *name = in.String("record name");
  const std::uint32_t rank = in.U32("record rank");
  if (rank == 0 || rank > 4) Throw(ErrorCode::kCorruptPayload, "bad rank for " + *name);
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t e = in.U32("record extent");
    if (e == 0) Throw(ErrorCode::kCorruptPayload, "zero extent in " + *name);
    shape.push_back(e);
    count *= e;
  }
  if (in.remaining() / 8 < count) Throw(ErrorCode::kCorruptPayload, "record " + *name + " truncated");
  Tensor t(shape);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < count; ++i) d[i] = in.F64("record payload");
  return t;
}

std::string MomentName(const char* which, const std::string& param) {
  return std::string("adam.") + which + "/" + param;
}

}  // namespace

std::string EncodeCheckpoint(const Checkpoint& c) {
  auto& params = const_cast<ModelParams&>(c.params);
  const std::vector<Parameter*> all = params.All();
  const std::vector<Parameter*> trainable = params.Trainable();

  std::string out(kMagic);
  binary::PutU32(out, kCheckpointVersion);
  const std::size_t moments = c.optimizer.first_moment.size();
  if (moments != 0 && (moments != trainable.size() || c.optimizer.second_moment.size() != moments)) {
    Throw(ErrorCode::kContract, "optimizer state does not match trainable parameters");
  }
  binary::PutU32(out, static_cast<std::uint32_t>(all.size() + 2 * moments));
  for (const Parameter* p : all) PutTensor(out, p->name, p->value);
  for (std::size_t i = 0; i < moments; ++i) {
    PutTensor(out, MomentName("m", trainable[i]->name), c.optimizer.first_moment[i]);
    PutTensor(out, MomentName("v", trainable[i]->name), c.optimizer.second_moment[i]);
  }
  binary::PutString(out, TrainConfigToJson(c.config));
  binary::PutU64(out, c.step);
  binary::PutU64(out, c.optimizer.steps);
  binary::PutString(out, c.gumbel_rng);
  binary::PutString(out, c.gaussian_rng);
  binary::PutString(out, c.data_rng);
  return out;
}

Checkpoint DecodeCheckpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    Throw(ErrorCode::kBadMagic, "not a checkpoint (magic mismatch)");
  }
  try {
    binary::Reader in(bytes.substr(kMagic.size()));
    const std::uint32_t version = in.U32("version");
    if (version != kCheckpointVersion) {
      Throw(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                             ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::uint32_t count = in.U32("record count");
    std::map<std::string, Tensor> records;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name;
      Tensor t = TakeTensor(in, &name);
      if (!records.emplace(name, std::move(t)).second) {
        Throw(ErrorCode::kCorruptPayload, "duplicate record " + name);
      }
    }
    Checkpoint c;
    c.config = TrainConfigFromJson(in.String("config"));
    try {
      c.config.Validate();
    } catch (const Error& e) {
      Throw(ErrorCode::kCorruptPayload, std::string("stored config invalid: ") + e.what());
    }
    c.step = in.U64("step");
    c.optimizer.steps = in.U64("optimizer steps");
    c.gumbel_rng = in.String("gumbel rng");
    c.gaussian_rng = in.String("gaussian rng");
    c.data_rng = in.String("data rng");
    if (in.remaining() != 0) Throw(ErrorCode::kCorruptPayload, "trailing bytes after checkpoint");

    c.params = ModelParams::Create(c.config.model, c.config.seed);
    std::size_t used = 0;
    auto take = [&](const std::string& name, const Shape& shape) {
      auto it = records.find(name);
      if (it == records.end()) Throw(ErrorCode::kCorruptPayload, "missing record " + name);
      if (it->second.shape() != shape) Throw(ErrorCode::kCorruptPayload, "shape mismatch for " + name);
      ++used;
      return it->second;
    };
    for (Parameter* p : c.params.All()) p->value = take(p->name, p->value.shape());
    const bool has_moments = records.size() > used;
    if (has_moments) {
      for (Parameter* p : c.params.Trainable()) {
        c.optimizer.first_moment.push_back(take(MomentName("m", p->name), p->value.shape()));
        c.optimizer.second_moment.push_back(take(MomentName("v", p->name), p->value.shape()));
      }
    }
    if (used != records.size()) Throw(ErrorCode::kCorruptPayload, "unexpected extra records");
    return c;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kTruncated) Throw(ErrorCode::kCorruptPayload, e.what());
    throw;
  }
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(ReadFileBytes(path));
}

}  // namespace grm
