// tests/optim_test.cpp

// Copyright 2026  The domgen authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "domgen/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/tensor.hpp"

namespace domgen {
namespace {

// Runs one backward pass that deposits `g` as the gradient of `p`.
void deposit_gradient(Tensor& p, const std::vector<double>& g) {
  Tape tape;
  Tensor pt = tape.watch(p);
  Tensor coef({static_cast<std::int64_t>(g.size())}, g);
  tape.backward(sum(mul(pt, coef)));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor p({3}, {0.1, -0.2, 0.3});
  Adam opt({&p});
  deposit_gradient(p, {0, 0, 0});
  opt.step();
  EXPECT_DOUBLE_EQ(p(0), 0.1);
  EXPECT_DOUBLE_EQ(p(1), -0.2);
  EXPECT_DOUBLE_EQ(p(2), 0.3);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is -lr * g / (|g| + eps),
  // i.e. almost exactly -lr * sign(g).
  Tensor p({1}, {0.5});
  Adam opt({&p}, 1e-4);
  deposit_gradient(p, {2.0});
  opt.step();
  EXPECT_NEAR(p(0) - 0.5, -1e-4, 1e-11);
}

TEST(Adam, ConstantGradientMovesMonotonically) {
  Tensor p({1}, {0.0});
  Adam opt({&p}, 1e-4);
  double prev = 0.0;
  for (int i = 0; i < 5; ++i) {
    deposit_gradient(p, {3.0});
    opt.step();
    EXPECT_LT(p(0), prev);
    prev = p(0);
  }
  EXPECT_EQ(opt.steps(), 5);
}

TEST(Adam, StepConsumesGradients) {
  Tensor p({1}, {0.0});
  Adam opt({&p}, 1e-4);
  deposit_gradient(p, {1.0});
  opt.step();
  EXPECT_DOUBLE_EQ(p.grad()[0], 0.0);
}

TEST(Adam, StepWithoutBackwardIsAnError) {
  Tensor p({1}, {0.0});
  Adam opt({&p});
  EXPECT_THROW(opt.step(), ValueError);
}

TEST(Adam, StrictModeRejectsNonFiniteGradient) {
  Tensor p({1}, {0.0});
  Adam opt({&p});
  deposit_gradient(p, {std::numeric_limits<double>::infinity()});
  StrictMathGuard guard(true);
  EXPECT_THROW(opt.step(), ValueError);
}

TEST(Clip, ClampsAboveAndKeepsInside) {
  Tensor p({2}, {0.05, -0.005});
  clip_weights({&p}, 0.01);
  EXPECT_DOUBLE_EQ(p(0), 0.01);
  EXPECT_DOUBLE_EQ(p(1), -0.005);
}

TEST(Clip, Idempotent) {
  Tensor p({4}, {0.3, -0.3, 0.001, 0.01});
  clip_weights({&p}, 0.01);
  std::vector<double> once = p.values();
  clip_weights({&p}, 0.01);
  EXPECT_EQ(p.values(), once);
}

TEST(Clip, AdamThenClipStaysWithinBound) {
  Rng rng(42);
  Tensor p({8});
  for (double& w : p.values()) w = rng.uniform(-0.01, 0.01);
  Adam opt({&p}, 1e-2);
  for (int cycle = 0; cycle < 50; ++cycle) {
    std::vector<double> g(8);
    for (double& x : g) x = rng.uniform(-5, 5);
    deposit_gradient(p, g);
    opt.step();
    clip_weights({&p}, 0.01);
    EXPECT_TRUE(weights_within({&p}, 0.01));
  }
}

}  // namespace
}  // namespace domgen
