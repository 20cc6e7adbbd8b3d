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

#include <algorithm>
#include <cmath>

#include "gtest/gtest.h"
#include "grm/errors.h"
#include "grm/grad_check.h"
#include "grm/region.h"
#include "oracles.h"

namespace grm {
namespace {

using oracle::TestRng;

struct Fixture {
  Tensor features;
  Mask mask;
  RegionParams params;
};

Fixture MakeFixture(std::uint64_t seed, std::size_t b, std::size_t l, std::size_t d,
                    std::size_t k, std::size_t phi_hidden = 0) {
  TestRng trng(seed);
  Rng rng(seed);
  Fixture f{oracle::RandomTensor({b, l, d}, trng), oracle::RandomMask(b, l, trng),
            RegionParams::Create(k, d, phi_hidden, rng)};
  // keep at least one patch per image
  for (std::size_t i = 0; i < b; ++i) f.mask.set(i * l, true);
  f.params.phi_b.value = oracle::RandomTensor(f.params.phi_b.value.shape(), trng, -0.3, 0.3);
  return f;
}

RegionAttention AttendValues(Tape& tape, const Tensor& features, const Mask& mask,
                             const Tensor& prompts) {
  return Attend(tape.Constant(features), mask, tape.Constant(prompts));
}

TEST(RegionTest, OrthogonalPromptsGiveUniformAttention) {
  // features live in dims 0..1, prompts in dims 2..3
  TestRng trng(1);
  Tensor features({2, 4, 4});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t j = 0; j < 2; ++j) features.at(i, l, j) = trng.Uniform(-1, 1);
  const Tensor prompts = Tensor::Matrix({{0, 0, 1, 0}, {0, 0, 0.3, -2}, {0, 0, 0, 5}});
  Mask mask({2, 4}, true);
  mask.set(6, false);
  Tape tape;
  const RegionAttention a = AttendValues(tape, features, mask, prompts);
  for (std::size_t i = 0; i < 2; ++i) {
    const double valid = i == 0 ? 4.0 : 3.0;
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t k = 0; k < 3; ++k) {
        const bool m = mask.at(i, l);
        EXPECT_EQ(a.raw.value().at(i, l, k), m ? 0.5 : 0.0);
        EXPECT_NEAR(a.norm.value().at(i, l, k), m ? 1.0 / valid : 0.0, 1e-15);
      }
  }
}

TEST(RegionTest, SinglePatchColumnIsOne) {
  TestRng trng(2);
  const Tensor features = oracle::RandomTensor({1, 5, 3}, trng, -4, 4);
  Mask mask({1, 5}, false);
  mask.set(3, true);
  const Tensor prompts = oracle::RandomTensor({4, 3}, trng);
  Tape tape;
  const RegionAttention a = AttendValues(tape, features, mask, prompts);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(a.norm.value().at(0, l, k), l == 3 ? 1.0 : 0.0);
}

TEST(RegionTest, AttentionMatchesLoopOracle) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Fixture f = MakeFixture(seed, 3, 6, 5, 4);
    Tape tape;
    const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
    const oracle::Attention want = oracle::Attend(f.features, f.mask, f.params.prompts.value);
    EXPECT_LT(MaxAbsDiff(a.raw.value(), want.raw), 1e-12);
    EXPECT_LT(MaxAbsDiff(a.norm.value(), want.norm), 1e-12);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        double col = 0.0;
        for (std::size_t l = 0; l < 6; ++l) col += a.norm.value().at(i, l, k);
        EXPECT_NEAR(col, 1.0, 1e-9);
      }
  }
}

TEST(RegionTest, AllMaskedImageIsDegenerate) {
  TestRng trng(3);
  const Tensor features = oracle::RandomTensor({2, 3, 2}, trng);
  Mask mask({2, 3}, true);
  for (std::size_t l = 3; l < 6; ++l) mask.set(l, false);
  Tape tape;
  try {
    AttendValues(tape, features, mask, oracle::RandomTensor({2, 2}, trng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateSlice);
  }
}

TEST(RegionTest, PromptWidthMismatch) {
  TestRng trng(4);
  Tape tape;
  try {
    AttendValues(tape, oracle::RandomTensor({1, 3, 2}, trng), Mask({1, 3}, true),
                 oracle::RandomTensor({2, 3}, trng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
  }
}

TEST(RegionTest, MaskedPatchesDoNotLeak) {
  Fixture f = MakeFixture(5, 2, 5, 4, 3);
  f.mask.set(2, false);
  Tape tape;
  const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
  const Tensor mu = RegionMeans(a.norm, tape.Constant(f.features)).value();
  Tensor poisoned = f.features;
  for (std::size_t j = 0; j < 4; ++j) poisoned.at(0, 2, j) = 1e6;
  Tape tape2;
  const RegionAttention b = AttendValues(tape2, poisoned, f.mask, f.params.prompts.value);
  // masked features only enter through zero weights, so mu is unchanged
  EXPECT_TRUE(BitwiseEqual(a.norm.value(), b.norm.value()));
  EXPECT_TRUE(BitwiseEqual(mu, RegionMeans(b.norm, tape2.Constant(poisoned)).value()));
}

TEST(RegionTest, MeansOfIdenticalPatches) {
  const Tensor x = Tensor::Vector({0.3, -1.2, 2.0});
  Tensor features({1, 4, 3});
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t j = 0; j < 3; ++j) features.at(0, l, j) = x[j];
  Tensor norm({1, 4, 2}, 0.25);
  Tape tape;
  const Tensor mu = RegionMeans(tape.Constant(norm), tape.Constant(features)).value();
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(mu.at(0, k, j), x[j], 1e-15);
}

TEST(RegionTest, OneHotAttentionSelectsPatch) {
  TestRng trng(6);
  const Tensor features = oracle::RandomTensor({1, 4, 3}, trng);
  Tensor norm({1, 4, 2});
  norm.at(0, 1, 0) = 1.0;
  norm.at(0, 3, 1) = 1.0;
  Tape tape;
  const Tensor mu = RegionMeans(tape.Constant(norm), tape.Constant(features)).value();
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(mu.at(0, 0, j), features.at(0, 1, j));
    EXPECT_EQ(mu.at(0, 1, j), features.at(0, 3, j));
  }
}

TEST(RegionTest, MeansMatchOracleAndStayInHull) {
  Fixture f = MakeFixture(7, 3, 6, 5, 4);
  Tape tape;
  const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
  const Tensor mu = RegionMeans(a.norm, tape.Constant(f.features)).value();
  EXPECT_LT(MaxAbsDiff(mu, oracle::RegionMeans(a.norm.value(), f.features)), 1e-12);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t l = 0; l < 6; ++l) {
        if (!f.mask.at(i, l)) continue;
        lo = std::min(lo, f.features.at(i, l, j));
        hi = std::max(hi, f.features.at(i, l, j));
      }
      for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_GE(mu.at(i, k, j), lo - 1e-12);
        EXPECT_LE(mu.at(i, k, j), hi + 1e-12);
      }
    }
}

TEST(RegionTest, LogVarHeadCases) {
  Fixture f = MakeFixture(8, 2, 3, 4, 3);
  TestRng trng(8);
  const Tensor mu = oracle::RandomTensor({2, 3, 4}, trng, -3, 3);
  f.params.phi_w.value = Tensor({4, 4});
  f.params.phi_b.value = Tensor({4});
  {
    Tape tape;
    const Tensor lv = PredictLogVar(tape.Constant(mu), Bind(tape, f.params)).value();
    for (double v : lv.data()) EXPECT_EQ(v, 0.0);
  }
  f.params.phi_b.value = Tensor({4}, 10.0);
  {
    Tape tape;
    const Tensor lv = PredictLogVar(tape.Constant(mu), Bind(tape, f.params)).value();
    for (double v : lv.data()) EXPECT_EQ(v, 10.0);
  }
  f.params.phi_b.value = Tensor({4}, 50.0);
  {
    Tape tape;
    const Tensor lv = PredictLogVar(tape.Constant(mu), Bind(tape, f.params)).value();
    for (double v : lv.data()) EXPECT_EQ(v, 10.0);
  }
}

TEST(RegionTest, LogVarMatchesAffineOracle) {
  Fixture f = MakeFixture(9, 2, 3, 4, 3);
  TestRng trng(9);
  f.params.phi_w.value = oracle::RandomTensor({4, 4}, trng, -3, 3);
  const Tensor mu = oracle::RandomTensor({2, 3, 4}, trng, -2, 2);
  Tape tape;
  const Tensor lv = PredictLogVar(tape.Constant(mu), Bind(tape, f.params)).value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t j = 0; j < 4; ++j) {
        double s = f.params.phi_b.value[j];
        for (std::size_t q = 0; q < 4; ++q) s += mu.at(i, k, q) * f.params.phi_w.value.at(q, j);
        EXPECT_NEAR(lv.at(i, k, j), std::clamp(s, -10.0, 10.0), 1e-12);
      }
}

TEST(RegionTest, NoiselessSamplingReturnsMean) {
  Fixture f = MakeFixture(10, 2, 4, 3, 2);
  Tape tape;
  const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
  Var mu = RegionMeans(a.norm, tape.Constant(f.features));
  Var lv = PredictLogVar(mu, Bind(tape, f.params));
  Var u = SampleRegions(mu, lv, a.norm, nullptr);
  EXPECT_TRUE(BitwiseEqual(u.value(), mu.value()));
}

TEST(RegionTest, TinyVarianceBound) {
  Fixture f = MakeFixture(11, 3, 6, 8, 4);
  Rng rng(11);
  Tape tape;
  const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
  Var mu = RegionMeans(a.norm, tape.Constant(f.features));
  Var lv = tape.Constant(Tensor(mu.shape(), kLogVarMin));
  const Tensor eps = SampleRegionNoise(3, 6, 4, 8, NoiseMode::kPerPatch, rng);
  const Tensor u = SampleRegions(mu, lv, a.norm, &eps).value();
  EXPECT_LT(MaxAbsDiff(u, mu.value()), std::exp(-5.0) * 6.0 * std::sqrt(8.0));
  EXPECT_FALSE(BitwiseEqual(u, mu.value()));
}

TEST(RegionTest, MonteCarloMoments) {
  TestRng trng(12);
  const std::size_t l = 5, k = 2, d = 3;
  Tensor norm({1, l, k});
  for (std::size_t r = 0; r < k; ++r) {
    double total = 0.0;
    for (std::size_t q = 0; q < l; ++q) total += norm.at(0, q, r) = trng.Uniform(0.1, 1.0);
    for (std::size_t q = 0; q < l; ++q) norm.at(0, q, r) /= total;
  }
  const Tensor mu = oracle::RandomTensor({1, k, d}, trng);
  const std::size_t draws = 10000;
  Tensor sum({1, k, d}), sum_sq({1, k, d});
  Rng rng(12);
  for (std::size_t s = 0; s < draws; ++s) {
    Tape tape;
    const Tensor eps = SampleRegionNoise(1, l, k, d, NoiseMode::kPerPatch, rng);
    const Tensor u = SampleRegions(tape.Constant(mu), tape.Constant(Tensor({1, k, d})),
                                   tape.Constant(norm), &eps)
                         .value();
    for (std::size_t i = 0; i < u.size(); ++i) {
      sum[i] += u[i];
      sum_sq[i] += u[i] * u[i];
    }
  }
  for (std::size_t r = 0; r < k; ++r) {
    double expected_var = 0.0;
    for (std::size_t q = 0; q < l; ++q) expected_var += norm.at(0, q, r) * norm.at(0, q, r);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      const double mean = sum[i] / draws;
      const double var = sum_sq[i] / draws - mean * mean;
      EXPECT_NEAR(mean, mu[i], 0.05);
      EXPECT_NEAR(var, expected_var, 0.2 * expected_var);
    }
  }
}

TEST(RegionTest, PerRegionNoiseRepeatsAcrossPatches) {
  Rng rng(13);
  const Tensor eps = SampleRegionNoise(2, 3, 2, 4, NoiseMode::kPerRegion, rng);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t l = 1; l < 3; ++l)
      for (std::size_t i = 0; i < 8; ++i)
        EXPECT_EQ(eps[(b * 3 + l) * 8 + i], eps[(b * 3) * 8 + i]);
}

TEST(RegionTest, PromptScaleInvariance) {
  Fixture f = MakeFixture(14, 2, 5, 4, 3);
  Tape tape;
  const RegionAttention a = AttendValues(tape, f.features, f.mask, f.params.prompts.value);
  Tensor scaled = f.params.prompts.value;
  const double factors[] = {0.01, 7.0, 1e4};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) scaled.at(r, j) *= factors[r];
  const RegionAttention b = AttendValues(tape, f.features, f.mask, scaled);
  EXPECT_LT(MaxAbsDiff(a.raw.value(), b.raw.value()), 1e-12);
  EXPECT_LT(MaxAbsDiff(a.norm.value(), b.norm.value()), 1e-12);
}

void CheckRegionGradients(std::size_t phi_hidden, NoiseMode mode) {
  Fixture f = MakeFixture(20 + phi_hidden, 2, 4, 3, 2, phi_hidden);
  Parameter features("features", f.features);
  TestRng trng(21);
  Rng rng(21);
  const Tensor eps = SampleRegionNoise(2, 4, 2, 3, mode, rng);
  const Tensor w_u = oracle::RandomTensor({2, 2, 3}, trng);
  const Tensor w_lv = oracle::RandomTensor({2, 2, 3}, trng);
  LossBuilder build = [&](Tape& tape) {
    BoundRegion bound = Bind(tape, f.params);
    RegionAttention a = Attend(tape.Leaf(features), f.mask, bound.prompts);
    Var mu = RegionMeans(a.norm, tape.Leaf(features));
    Var lv = PredictLogVar(mu, bound);
    Var u = SampleRegions(mu, lv, a.norm, &eps);
    return Add(SumAll(Mul(u, tape.Constant(w_u))), SumAll(Mul(lv, tape.Constant(w_lv))));
  };
  std::vector<Parameter*> params = f.params.Trainable();
  params.push_back(&features);
  const GradCheckReport report = GradCheck(build, params);
  for (const auto& e : report.entries) EXPECT_LT(e.max_relative_error, 1e-4) << e.name;
}

TEST(RegionTest, GradientsAffineHead) { CheckRegionGradients(0, NoiseMode::kPerPatch); }
TEST(RegionTest, GradientsTwoLayerHead) { CheckRegionGradients(5, NoiseMode::kPerPatch); }
TEST(RegionTest, GradientsPerRegionNoise) { CheckRegionGradients(0, NoiseMode::kPerRegion); }

}  // namespace
}  // namespace grm
