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

#include <cmath>
#include <string>

#include "gtest/gtest.h"
#include "grm/autograd.h"
#include "grm/errors.h"
#include "grm/grad_check.h"
#include "grm/ops.h"
#include "grm/random.h"
#include "oracles.h"

namespace grm {
namespace {

using oracle::CheckOp;
using oracle::RandomTensor;
using oracle::TestRng;

constexpr double kGradTol = 1e-4;

template <typename Fn>
ErrorCode CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no grm::Error thrown";
  return ErrorCode::kIo;
}

TEST(TensorTest, RejectsZeroExtent) {
  EXPECT_EQ(CodeOf([] { Tensor t({3, 0}); }), ErrorCode::kDimension);
}

TEST(TensorTest, SizeIsProductOfShape) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(Tensor::Scalar(5.0).size(), 1u);
}

TEST(MatmulTest, IdentityLeavesMatrix) {
  Tape tape;
  Var i2 = tape.Constant(Tensor::Matrix({{1, 0}, {0, 1}}));
  Var m = tape.Constant(Tensor::Matrix({{1, 2}, {3, 4}}));
  EXPECT_TRUE(BitwiseEqual(Matmul(i2, m).value(), Tensor::Matrix({{1, 2}, {3, 4}})));
}

TEST(MatmulTest, HandProduct) {
  Tape tape;
  Var a = tape.Constant(Tensor::Matrix({{1, 2}, {3, 4}}));
  Var b = tape.Constant(Tensor::Matrix({{5}, {6}}));
  const Tensor c = Matmul(a, b).value();
  EXPECT_EQ(c.at(0, 0), 17.0);
  EXPECT_EQ(c.at(1, 0), 39.0);
}

TEST(MatmulTest, MatchesTripleLoopOnRandomShapes) {
  TestRng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = rng.Index(1, 9), k = rng.Index(1, 9), n = rng.Index(1, 9);
    const Tensor a = RandomTensor({m, k}, rng), b = RandomTensor({k, n}, rng);
    Tape tape;
    const Tensor got = Matmul(tape.Constant(a), tape.Constant(b)).value();
    const Tensor want = oracle::Matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_LE(std::abs(got[i] - want[i]), 1e-10 * std::max(1.0, std::abs(want[i])));
    }
  }
}

TEST(MatmulTest, FourByThreeTimesThreeByFive) {
  TestRng rng(12);
  const Tensor a = RandomTensor({4, 3}, rng), b = RandomTensor({3, 5}, rng);
  Tape tape;
  EXPECT_LE(MaxAbsDiff(Matmul(tape.Constant(a), tape.Constant(b)).value(), oracle::Matmul(a, b)),
            1e-12);
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.Constant(Tensor({2, 3}));
  Var b = tape.Constant(Tensor({4, 5}));
  try {
    Matmul(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimension);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(ActivationTest, FixedPoints) {
  Tape tape;
  Var zero = tape.Constant(Tensor::Vector({0.0}));
  EXPECT_EQ(Activate(Activation::kSigmoid, zero).value()[0], 0.5);
  EXPECT_EQ(Activate(Activation::kGelu, zero).value()[0], 0.0);
}

TEST(ActivationTest, SigmoidMatchesScalarReference) {
  Tape tape;
  const Tensor x = Tensor::Vector({-2, -1, 1, 2});
  const Tensor y = Activate(Activation::kSigmoid, tape.Constant(x)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    const long double ref = 1.0L / (1.0L + std::exp(-static_cast<long double>(x[i])));
    EXPECT_NEAR(y[i], static_cast<double>(ref), 1e-12);
  }
}

TEST(ActivationTest, GeluMatchesErfcForm) {
  TestRng rng(3);
  const Tensor x = RandomTensor({50}, rng, -4, 4);
  Tape tape;
  const Tensor y = Activate(Activation::kGelu, tape.Constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], oracle::Gelu(x[i]), 1e-13);
}

TEST(ActivationTest, LogRejectsNonPositive) {
  Tape tape;
  Var x = tape.Constant(Tensor::Vector({1.0, 0.0}));
  EXPECT_EQ(CodeOf([&] { Activate(Activation::kLog, x); }), ErrorCode::kDomain);
}

TEST(ActivationTest, GradientsMatchFiniteDifferences) {
  TestRng rng(4);
  for (Activation kind : {Activation::kGelu, Activation::kSigmoid, Activation::kExp,
                          Activation::kLog, Activation::kSquare}) {
    std::vector<Parameter> params{{"x", RandomTensor({3, 4}, rng, 0.1, 2.0)}};
    auto report = CheckOp([&](Tape&, const std::vector<Var>& v) { return Activate(kind, v[0]); },
                          params);
    EXPECT_LT(report.MaxRelativeError(), kGradTol) << static_cast<int>(kind);
  }
}

TEST(ReduceTest, MaxReturnsArgmax) {
  Tape tape;
  ReduceResult r = Reduce(Reduction::kMax, tape.Constant(Tensor::Matrix({{1, 5, 3}})), 1);
  EXPECT_EQ(r.value.value()[0], 5.0);
  ASSERT_EQ(r.argmax.size(), 1u);
  EXPECT_EQ(r.argmax[0], 1u);
}

TEST(ReduceTest, MaskedMeanUsesUnmaskedCount) {
  Tape tape;
  Mask mask({1, 2}, std::vector<std::uint8_t>{1, 0});
  ReduceResult r = Reduce(Reduction::kMean, tape.Constant(Tensor::Matrix({{2, 4}})), 1, &mask);
  EXPECT_EQ(r.value.value()[0], 2.0);
}

TEST(ReduceTest, MaxTiesGoToLowestIndex) {
  Tape tape;
  ReduceResult r = Reduce(Reduction::kMax, tape.Constant(Tensor::Matrix({{1, 7, 7, 2}})), 1);
  EXPECT_EQ(r.argmax[0], 1u);
}

TEST(ReduceTest, FullyMaskedSliceIsDegenerate) {
  Tape tape;
  Mask mask({2, 2}, std::vector<std::uint8_t>{1, 1, 0, 0});
  Var x = tape.Constant(Tensor::Matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(CodeOf([&] { Reduce(Reduction::kMean, x, 1, &mask); }), ErrorCode::kDegenerateSlice);
}

TEST(NormalizeAxisTest, ZeroSliceIsDegenerateButNanPropagates) {
  Tape tape;
  Var zero = tape.Constant(Tensor::Matrix({{1, 2}, {0, 0}}));
  EXPECT_EQ(CodeOf([&] { NormalizeAlongAxis(zero, 1); }), ErrorCode::kDegenerateSlice);
  Var nan = tape.Constant(Tensor::Matrix({{1, 3}, {std::nan(""), 1}}));
  const Tensor out = NormalizeAlongAxis(nan, 1).value();
  EXPECT_EQ(out.at(0, 0), 0.25);
  EXPECT_TRUE(std::isnan(out.at(1, 1)));
}

TEST(ReduceTest, RandomMaskedMatchesLoopOracle) {
  TestRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = RandomTensor({3, 7}, rng);
    for (std::size_t axis : {0u, 1u}) {
      // Mask with at least one valid entry in every reduced slice.
      Mask mask({3, 7}, false);
      for (std::size_t i = 0; i < 21; ++i) mask.set(i, rng.Uniform(0, 1) < 0.6);
      for (std::size_t s = 0; s < (axis == 1 ? 3u : 7u); ++s) {
        const std::size_t other = rng.Index(0, axis == 1 ? 6 : 2);
        mask.set(axis == 1 ? s * 7 + other : other * 7 + s, true);
      }
      Tape tape;
      Var xv = tape.Constant(x);
      const Tensor mx = Reduce(Reduction::kMax, xv, axis, &mask).value.value();
      const Tensor mn = Reduce(Reduction::kMean, xv, axis, &mask).value.value();
      const Tensor sm = Reduce(Reduction::kSum, xv, axis, &mask).value.value();
      const std::size_t slices = axis == 1 ? 3 : 7, len = axis == 1 ? 7 : 3;
      for (std::size_t s = 0; s < slices; ++s) {
        double best = -1e300, sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t r = axis == 1 ? s : t, c = axis == 1 ? t : s;
          if (!mask.at(r, c)) continue;
          best = std::max(best, x.at(r, c));
          sum += x.at(r, c);
          ++count;
        }
        EXPECT_EQ(mx[s], best);
        EXPECT_NEAR(sm[s], sum, 1e-14);
        EXPECT_NEAR(mn[s], sum / count, 1e-14);
      }
    }
  }
}

TEST(ReduceTest, GradientsMatchFiniteDifferences) {
  TestRng rng(6);
  Mask mask({4, 5}, true);
  mask.set(3, false);
  mask.set(7, false);
  for (Reduction kind : {Reduction::kMax, Reduction::kMean, Reduction::kSum}) {
    for (std::size_t axis : {0u, 1u}) {
      std::vector<Parameter> params{{"x", RandomTensor({4, 5}, rng)}};
      auto report = CheckOp(
          [&](Tape&, const std::vector<Var>& v) { return Reduce(kind, v[0], axis, &mask).value; },
          params);
      EXPECT_LT(report.MaxRelativeError(), kGradTol);
    }
  }
}

TEST(L2NormalizeTest, ThreeFourFive) {
  Tape tape;
  const Tensor y = L2NormalizeRows(tape.Constant(Tensor::Matrix({{3, 4}})), 1e-12).value();
  EXPECT_NEAR(y[0], 0.6, 1e-15);
  EXPECT_NEAR(y[1], 0.8, 1e-15);
}

TEST(L2NormalizeTest, ZeroRowStaysZero) {
  Tape tape;
  const Tensor y = L2NormalizeRows(tape.Constant(Tensor::Matrix({{0, 0}})), 1e-12).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(L2NormalizeTest, RandomRowsHaveUnitNorm) {
  TestRng rng(7);
  Tape tape;
  const Tensor y = L2NormalizeRows(tape.Constant(RandomTensor({5, 8}, rng)), 1e-12).value();
  for (std::size_t r = 0; r < 5; ++r) {
    const auto row = oracle::Row(y, r);
    EXPECT_NEAR(std::sqrt(oracle::Dot(row, row)), 1.0, 1e-12);
  }
}

TEST(GumbelSoftmaxTest, EqualLogitsGiveHalf) {
  for (double tau : {0.1, 1.0, 7.0}) {
    Tape tape;
    const Tensor y = GumbelSoftmax(tape.Constant(Tensor::Matrix({{0, 0}})), tau, nullptr).value();
    EXPECT_EQ(y[0], 0.5);
    EXPECT_EQ(y[1], 0.5);
  }
}

TEST(GumbelSoftmaxTest, SharpLimit) {
  Tape tape;
  const Tensor y = GumbelSoftmax(tape.Constant(Tensor::Matrix({{10, 0}})), 0.1, nullptr).value();
  EXPECT_GT(y[0], 1.0 - 1e-6);
}

TEST(GumbelSoftmaxTest, NonPositiveTauRejected) {
  Tape tape;
  Var x = tape.Constant(Tensor::Matrix({{1, 0}}));
  EXPECT_EQ(CodeOf([&] { GumbelSoftmax(x, 0.0, nullptr); }), ErrorCode::kParameter);
  EXPECT_EQ(CodeOf([&] { GumbelSoftmax(x, -1.0, nullptr); }), ErrorCode::kParameter);
}

TEST(GumbelSoftmaxTest, ArgmaxFrequencyFollowsGumbelMax) {
  Rng rng(2024);
  const std::size_t n = 100000;
  Tensor logits({n, 2});
  for (std::size_t i = 0; i < n; ++i) logits.at(i, 0) = 1.0;
  Tape tape;
  const Tensor y = GumbelSoftmax(tape.Constant(logits), 1.0, GateMode::kStochastic, rng).value();
  std::size_t col0 = 0;
  for (std::size_t i = 0; i < n; ++i) col0 += y.at(i, 0) > y.at(i, 1);
  const double expected = std::exp(1.0) / (std::exp(1.0) + 1.0);
  EXPECT_NEAR(static_cast<double>(col0) / n, expected, 0.01);
}

TEST(GumbelSoftmaxTest, RowsSumToOne) {
  TestRng trng(8);
  Rng rng(8);
  for (GateMode mode : {GateMode::kStochastic, GateMode::kDeterministic}) {
    Tape tape;
    const Tensor y =
        GumbelSoftmax(tape.Constant(RandomTensor({200, 2}, trng, -30, 30)), 0.3, mode, rng).value();
    for (std::size_t r = 0; r < 200; ++r) EXPECT_NEAR(y.at(r, 0) + y.at(r, 1), 1.0, 1e-9);
  }
}

TEST(GumbelSoftmaxTest, GumbelNoiseMatchesFormula) {
  Rng a(77), b(77);
  const Tensor g = SampleGumbelNoise({1000}, a);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = std::clamp(b.Uniform(), 1e-12, 1.0 - 1e-12);
    EXPECT_EQ(g[i], -std::log(-std::log(u)));
  }
}

TEST(GumbelSoftmaxTest, GradientWithFrozenNoise) {
  TestRng trng(9);
  Rng rng(9);
  const Tensor noise = SampleGumbelNoise({6, 2}, rng);
  std::vector<Parameter> params{{"logits", RandomTensor({6, 2}, trng)}};
  auto report = CheckOp(
      [&](Tape&, const std::vector<Var>& v) { return GumbelSoftmax(v[0], 0.7, &noise); }, params);
  EXPECT_LT(report.MaxRelativeError(), kGradTol);
}

TEST(BackwardTest, SumGivesOnes) {
  Parameter x("x", Tensor({2, 3}, 4.0));
  Tape tape;
  tape.Backward(SumAll(tape.Leaf(x)));
  for (double g : x.grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SumOfSquares) {
  Parameter x("x", Tensor::Vector({1, 2, 3}));
  Tape tape;
  Var v = tape.Leaf(x);
  tape.Backward(SumAll(Mul(v, v)));
  EXPECT_EQ(x.grad[0], 2.0);
  EXPECT_EQ(x.grad[1], 4.0);
  EXPECT_EQ(x.grad[2], 6.0);
}

TEST(BackwardTest, NonScalarLossIsContractError) {
  Parameter x("x", Tensor({2}));
  Tape tape;
  Var v = tape.Leaf(x);
  EXPECT_EQ(CodeOf([&] { tape.Backward(v); }), ErrorCode::kContract);
}

TEST(BackwardTest, ReplayIsBitwiseDeterministic) {
  TestRng trng(10);
  Parameter w("w", RandomTensor({4, 3}, trng));
  const Tensor x = RandomTensor({5, 4}, trng);
  auto run = [&](Tensor* value) {
    Tape tape;
    Var y = Activate(Activation::kGelu, Matmul(tape.Constant(x), tape.Leaf(w)));
    Var loss = SumAll(Reduce(Reduction::kMax, L2NormalizeRows(y, 1e-12), 1).value);
    *value = loss.value();
    tape.Backward(loss);
    return w.grad;
  };
  Tensor v1, v2;
  const Tensor g1 = run(&v1), g2 = run(&v2);
  EXPECT_TRUE(BitwiseEqual(v1, v2));
  EXPECT_TRUE(BitwiseEqual(g1, g2));
}

TEST(GradCheckTest, QuadraticIsExact) {
  TestRng trng(13);
  Parameter theta("theta", RandomTensor({7}, trng));
  std::vector<Parameter*> ps{&theta};
  const auto report = GradCheck([&](Tape& t) {
    Var v = t.Leaf(theta);
    return SumAll(Mul(v, v));
  }, ps);
  EXPECT_LT(report.MaxRelativeError(), 1e-8);
}

TEST(GradCheckTest, DetectsNonDeterministicLoss) {
  Parameter theta("theta", Tensor::Vector({1.0}));
  std::vector<Parameter*> ps{&theta};
  int calls = 0;
  EXPECT_EQ(CodeOf([&] {
              GradCheck([&](Tape& t) {
                return Scale(SumAll(t.Leaf(theta)), 1.0 + 1e-3 * ++calls);
              }, ps);
            }),
            ErrorCode::kDeterminism);
}

TEST(GradCheckTest, RelativeErrorFloor) {
  EXPECT_EQ(RelativeError(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(RelativeError(1e-10, 0.0), 1e-10 / 1e-8);
  EXPECT_DOUBLE_EQ(RelativeError(2.0, 1.0), 0.5);
}

TEST(OpGradientTest, ElementwiseAndShapeOps) {
  TestRng rng(14);
  using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    Fn fn;
  };
  const std::vector<Case> cases = {
      {"add", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return Add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return Sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return Mul(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return Scale(v[0], -2.5); }},
      {"add_bias", {{2, 3, 4}, {4}},
       [](Tape&, const std::vector<Var>& v) { return AddBias(v[0], v[1]); }},
      {"scale_rows", {{2, 3, 4}, {2, 3}},
       [](Tape&, const std::vector<Var>& v) { return ScaleRows(v[0], v[1]); }},
      {"reshape", {{2, 6}},
       [](Tape&, const std::vector<Var>& v) { return Reshape(v[0], {3, 4}); }},
      {"transpose", {{2, 5}}, [](Tape&, const std::vector<Var>& v) { return Transpose(v[0]); }},
      {"select_column", {{5, 2}},
       [](Tape&, const std::vector<Var>& v) { return SelectColumn(v[0], 1); }},
      {"matmul", {{3, 4}, {4, 2}},
       [](Tape&, const std::vector<Var>& v) { return Matmul(v[0], v[1]); }},
      {"batched_matmul", {{2, 3, 4}, {2, 4, 5}},
       [](Tape&, const std::vector<Var>& v) { return BatchedMatmul(v[0], v[1]); }},
      {"batched_matmul_t", {{2, 4, 3}, {2, 4, 5}},
       [](Tape&, const std::vector<Var>& v) { return BatchedMatmul(v[0], v[1], true); }},
      {"l2_normalize", {{4, 5}},
       [](Tape&, const std::vector<Var>& v) { return L2NormalizeRows(v[0], 1e-12); }},
      {"normalize_axis", {{2, 3, 4}},
       [](Tape&, const std::vector<Var>& v) {
         return NormalizeAlongAxis(Activate(Activation::kExp, v[0]), 1);
       }},
      {"sum_all", {{3, 3}}, [](Tape&, const std::vector<Var>& v) { return SumAll(v[0]); }},
  };
  for (const auto& c : cases) {
    std::vector<Parameter> params;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
      params.emplace_back("p" + std::to_string(i), RandomTensor(c.shapes[i], rng));
    }
    const auto report = CheckOp(c.fn, params);
    EXPECT_LT(report.MaxRelativeError(), kGradTol) << c.name;
  }
}

TEST(OpGradientTest, ClampAwayFromBoundary) {
  std::vector<Parameter> params{{"x", Tensor::Vector({-3.0, -0.5, 0.2, 0.9, 4.0})}};
  const auto report = CheckOp(
      [](Tape&, const std::vector<Var>& v) { return Clamp(v[0], -1.0, 1.0); }, params);
  EXPECT_LT(report.MaxRelativeError(), kGradTol);
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(5), b(5), c(6);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    (void)c;
  }
  EXPECT_NE(Rng(5).NextU64(), Rng(6).NextU64());
}

TEST(RngTest, StateRoundTrip) {
  Rng a(99);
  for (int i = 0; i < 17; ++i) a.Normal();
  Rng b(0);
  b.RestoreState(a.SerializeState());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.Normal(), b.Normal());
}

TEST(RngTest, SubstreamsDiffer) {
  EXPECT_NE(MixSeed(7, 1), MixSeed(7, 2));
  EXPECT_NE(MixSeed(7, 1), MixSeed(8, 1));
}

TEST(RngTest, UniformIntWithinBounds) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.UniformInt(4, 9);
    EXPECT_GE(v, 4u);
    EXPECT_LE(v, 9u);
  }
}

}  // namespace
}  // namespace grm
