// Copyright 2026 The eeganon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "eeganon/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "eeganon/ops.hpp"
#include "eeganon/random.hpp"

namespace eeganon {
namespace {

using Builder = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

Tensor<double> RandomTensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.Normal();
  return t;
}

// Projects the op output onto fixed random weights and compares the
// reverse-mode gradient of that scalar with central differences.
double MaxGradientError(std::vector<Tensor<double>> inputs, const Builder& build,
                        std::uint64_t seed = 1) {
  Tensor<double> weights;
  auto scalar = [&](std::vector<Tensor<double>>& in, bool grad, std::vector<Tensor<double>>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto& t : in) leaves.push_back(tape.Leaf(t, grad));
    Var<double> out = build(tape, leaves);
    if (weights.empty()) {
      Rng r(seed);
      weights = RandomTensor(out.value().shape(), r);
    }
    Var<double> proj = tape.Op(Tensor<double>({1}, Dot(out.value().data(), weights.data(), weights.size())),
                               out.requires_grad(), [oi = out.id, &weights](Tape<double>& t, auto& self) {
                                 Axpy(self.grad[0], weights.data(), t.GradOf(oi).data(), weights.size());
                               });
    if (grads) {
      tape.Backpropagate(proj);
      for (auto& l : leaves) grads->push_back(l.grad());
    }
    return proj.value()[0];
  };
  std::vector<Tensor<double>> analytic;
  scalar(inputs, true, &analytic);
  double worst = 0;
  const double h = 1e-5;
  for (std::size_t a = 0; a < inputs.size(); ++a)
    for (std::size_t j = 0; j < inputs[a].size(); ++j) {
      const double saved = inputs[a][j];
      inputs[a][j] = saved + h;
      const double up = scalar(inputs, false, nullptr);
      inputs[a][j] = saved - h;
      const double down = scalar(inputs, false, nullptr);
      inputs[a][j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double an = analytic[a].empty() ? 0.0 : analytic[a][j];
      worst = std::max(worst, std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), 1e-6}));
    }
  return worst;
}

TEST(TapeTest, LeafGradientOfSum) {
  Tape<double> tape;
  Var<double> a = tape.Leaf(Tensor<double>({2}, std::vector<double>{1, 2}), true);
  Var<double> b = tape.Leaf(Tensor<double>({2}, std::vector<double>{3, 4}), false);
  Var<double> c = ops::Add(a, b);
  EXPECT_EQ(c.value()[1], 6.0);
  tape.Backpropagate(c);
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_TRUE(b.grad().empty());
}

TEST(TapeTest, ConstantsRecordNoBackward) {
  Tape<double> tape;
  Var<double> a = tape.Constant(Tensor<double>({3}, 1.0));
  Var<double> b = ops::Gelu(a);
  EXPECT_FALSE(b.requires_grad());
}

TEST(OpsGradientTest, Linear) {
  Rng r(1);
  EXPECT_LT(MaxGradientError({RandomTensor({4, 3}, r), RandomTensor({3, 5}, r), RandomTensor({5}, r)},
                             [](auto&, auto& v) { return ops::Linear(v[0], v[1], v[2]); }),
            1e-6);
}

TEST(OpsGradientTest, AddAndTiled) {
  Rng r(2);
  const Tensor<double> pattern = RandomTensor({2, 3}, r);
  EXPECT_LT(MaxGradientError({RandomTensor({4, 3}, r), RandomTensor({4, 3}, r)},
                             [&pattern](auto&, auto& v) {
                               return ops::AddTiled(ops::Add(v[0], v[1]), pattern);
                             }),
            1e-6);
}

TEST(OpsGradientTest, LayerNorm) {
  Rng r(3);
  EXPECT_LT(MaxGradientError({RandomTensor({5, 6}, r), RandomTensor({6}, r), RandomTensor({6}, r)},
                             [](auto&, auto& v) { return ops::LayerNorm(v[0], v[1], v[2]); }),
            1e-5);
}

TEST(OpsGradientTest, Gelu) {
  Rng r(4);
  EXPECT_LT(MaxGradientError({RandomTensor({3, 7}, r, 2.0)}, [](auto&, auto& v) { return ops::Gelu(v[0]); }),
            1e-6);
}

TEST(OpsGradientTest, GeluTanhFormValues) {
  Tape<double> tape;
  Var<double> x = tape.Constant(Tensor<double>({3}, std::vector<double>{-1.0, 0.0, 2.0}));
  const Tensor<double>& y = ops::Gelu(x).value();
  auto ref = [](double v) {
    return 0.5 * v * (1 + std::tanh(std::sqrt(2 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
  };
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], ref(x.value()[i]), 1e-12);
}

TEST(OpsGradientTest, MultiHeadAttention) {
  Rng r(5);
  // batch 2, 3 tokens, d 4, 2 heads
  EXPECT_LT(MaxGradientError({RandomTensor({6, 4}, r), RandomTensor({6, 4}, r), RandomTensor({6, 4}, r)},
                             [](auto&, auto& v) { return ops::Attention(v[0], v[1], v[2], 2, 2); }),
            1e-5);
}

TEST(OpsGradientTest, AttentionRowsAreConvexCombinations) {
  Tape<double> tape;
  Rng r(6);
  Var<double> q = tape.Constant(RandomTensor({3, 2}, r));
  Var<double> k = tape.Constant(RandomTensor({3, 2}, r));
  Var<double> v = tape.Constant(Tensor<double>({3, 2}, 1.0));
  const Tensor<double>& y = ops::Attention(q, k, v, 1, 1).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 1.0, 1e-12);
}

TEST(OpsGradientTest, DropoutWithFixedMask) {
  Rng r(7);
  EXPECT_LT(MaxGradientError({RandomTensor({4, 5}, r)},
                             [](auto&, auto& v) {
                               Rng mask(99);
                               return ops::Dropout(v[0], 0.3, &mask);
                             }),
            1e-6);
}

TEST(OpsGradientTest, StandardizeAndAffineRows) {
  Rng r(8);
  const std::vector<double> scale = {2.0, 0.5, 3.0}, shift = {1.0, -1.0, 0.0};
  EXPECT_LT(MaxGradientError({RandomTensor({1, 3, 8}, r, 4.0)},
                             [&](auto&, auto& v) {
                               return ops::AffineRows(ops::StandardizeRows(v[0], 8), 8,
                                                      std::span<const double>(scale),
                                                      std::span<const double>(shift));
                             }),
            1e-5);
}

TEST(OpsGradientTest, TokenizeDetokenize) {
  Rng r(9);
  EXPECT_LT(MaxGradientError({RandomTensor({2, 2, 6}, r)},
                             [](auto&, auto& v) {
                               return ops::Detokenize(ops::Gelu(ops::Tokenize(v[0], 3)), 2, 6);
                             }),
            1e-6);
}

TEST(OpsGradientTest, Conv1dStrided) {
  Rng r(10);
  EXPECT_LT(MaxGradientError({RandomTensor({2, 2, 11}, r), RandomTensor({3, 2, 4}, r), RandomTensor({3}, r)},
                             [](auto&, auto& v) { return ops::Conv1d(v[0], v[1], v[2], 3); }),
            1e-6);
}

TEST(OpsGradientTest, Conv1dValues) {
  // x = [1 2 3 4 5], w = [1 -1], stride 2, b = 0.5 -> [-0.5, -0.5]
  Tape<double> tape;
  Var<double> x = tape.Constant(Tensor<double>({1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5}));
  Var<double> w = tape.Constant(Tensor<double>({1, 1, 2}, std::vector<double>{1, -1}));
  Var<double> b = tape.Constant(Tensor<double>({1}, 0.5));
  const Tensor<double>& y = ops::Conv1d(x, w, b, 2).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(y[0], -0.5);
  EXPECT_EQ(y[1], -0.5);
}

TEST(OpsGradientTest, MeanReshapeConcat) {
  Rng r(11);
  EXPECT_LT(MaxGradientError({RandomTensor({2, 3, 4}, r), RandomTensor({2, 5}, r)},
                             [](auto&, auto& v) {
                               Var<double> m = ops::Reshape(ops::MeanMiddle(v[0], 2, 3, 4), {2, 4});
                               return ops::ConcatColumns(m, v[1]);
                             }),
            1e-6);
}

TEST(OpsGradientTest, CrossEntropyAndMse) {
  Rng r(12);
  const std::vector<int> labels = {2, 0, 1};
  EXPECT_LT(MaxGradientError({RandomTensor({3, 4}, r), RandomTensor({3, 4}, r)},
                             [&labels](auto&, auto& v) {
                               return ops::Add(ops::CrossEntropy(v[0], std::span<const int>(labels)),
                                               ops::MeanSquaredError(v[0], v[1]));
                             }),
            1e-6);
}

TEST(OpsValueTest, CrossEntropyOfUniformLogitsIsLogK) {
  Tape<double> tape;
  Var<double> logits = tape.Constant(Tensor<double>({2, 5}, 0.0));
  const std::vector<int> labels = {0, 3};
  EXPECT_NEAR(ops::CrossEntropy(logits, std::span<const int>(labels)).value()[0], std::log(5.0), 1e-12);
}

TEST(OpsValueTest, WeightedObjectiveArithmeticAndClipping) {
  Tape<double> tape;
  Var<double> u = tape.Leaf(Tensor<double>({1}, 0.5), true);
  Var<double> i = tape.Leaf(Tensor<double>({1}, 3.0), true);
  Var<double> d = tape.Leaf(Tensor<double>({1}, 0.01), true);
  Var<double> c = ops::WeightedObjective(u, i, d, 2000.0, 25.0, 1.0, 1e300);
  EXPECT_NEAR(c.value()[0], 925.01, 1e-9);
  tape.Backpropagate(c);
  EXPECT_EQ(i.grad()[0], -25.0);

  Tape<double> t2;
  Var<double> u2 = t2.Leaf(Tensor<double>({1}, 0.5), true);
  Var<double> i2 = t2.Leaf(Tensor<double>({1}, 3.0), true);
  Var<double> d2 = t2.Leaf(Tensor<double>({1}, 0.01), true);
  Var<double> c2 = ops::WeightedObjective(u2, i2, d2, 2000.0, 25.0, 1.0, 2.0);
  EXPECT_NEAR(c2.value()[0], 1000.0 - 50.0 + 0.01, 1e-9);
  t2.Backpropagate(c2);
  EXPECT_TRUE(i2.grad().empty() || i2.grad()[0] == 0.0);
  EXPECT_EQ(u2.grad()[0], 2000.0);
}

TEST(OpsValueTest, ShapeMismatchIsContractError) {
  Tape<double> tape;
  Var<double> a = tape.Constant(Tensor<double>({2, 3}));
  Var<double> b = tape.Constant(Tensor<double>({4, 5}));
  try {
    ops::Linear(a, b, tape.Constant(Tensor<double>({5})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
  }
  EXPECT_THROW(ops::Tokenize(tape.Constant(Tensor<double>({1, 2, 10})), 3), Error);
}

}  // namespace
}  // namespace eeganon
