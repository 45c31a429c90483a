// tests/tensor_test.cpp
//
// Oracle and property tests for the tensor op set and the tape.

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

#include "domgen/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/gradcheck.hpp"

namespace domgen {
namespace {

std::vector<double> fill_uniform(Rng& rng, std::int64_t n, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

TEST(Conv1d, KernelOneScales) {
  Tensor x({1, 3}, {1, 2, 3});
  Tensor w({1, 1, 1}, {2.0});
  Tensor y = conv1d(x, w);
  EXPECT_EQ(y.shape(), (std::vector<std::int64_t>{1, 3}));
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(y(0, 2), 6.0);
}

TEST(Conv1d, HandEvaluatedDifference) {
  Tensor x({1, 3}, {3, 1, 4});
  Tensor w({1, 1, 2}, {1, -1});
  Tensor y = conv1d(x, w, 1);
  ASSERT_EQ(y.size(), 2);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), -3.0);
}

TEST(Conv1d, DilationTwo) {
  Tensor x({1, 4}, {1, 2, 3, 4});
  Tensor w({1, 1, 2}, {1, 1});
  Tensor y = conv1d(x, w, 2);
  ASSERT_EQ(y.size(), 2);
  EXPECT_DOUBLE_EQ(y(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 6.0);
}

TEST(Conv1d, OutputLengthFormula) {
  Rng rng(11);
  for (int k = 1; k <= 4; ++k) {
    for (int dil = 1; dil <= 3; ++dil) {
      const std::int64_t span = 1 + static_cast<std::int64_t>(dil) * (k - 1);
      for (std::int64_t t = span; t <= span + 5; ++t) {
        Tensor x({2, t}, fill_uniform(rng, 2 * t, -1, 1));
        Tensor w({3, 2, k}, fill_uniform(rng, 6 * k, -1, 1));
        Tensor y = conv1d(x, w, dil);
        EXPECT_EQ(y.dim(1), t - static_cast<std::int64_t>(dil) * (k - 1));
      }
    }
  }
}

TEST(Conv1d, TooShortInputNamesRequiredLength) {
  Tensor x({1, 4}, {1, 2, 3, 4});
  Tensor w({1, 1, 3}, {1, 1, 1});
  try {
    conv1d(x, w, 2);
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
}

TEST(Conv1d, RejectsChannelMismatch) {
  Tensor x({2, 5}, std::vector<double>(10, 1.0));
  Tensor w({1, 3, 2}, std::vector<double>(6, 1.0));
  EXPECT_THROW(conv1d(x, w), ValueError);
}

TEST(Linear, IdentityPassesThrough) {
  Tensor x({3}, {1, 2, 3});
  Tensor w({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = linear(x, w);
  EXPECT_DOUBLE_EQ(y(0), 1.0);
  EXPECT_DOUBLE_EQ(y(1), 2.0);
  EXPECT_DOUBLE_EQ(y(2), 3.0);
}

TEST(Linear, HandMatrixProduct) {
  Tensor x({2}, {2, 3});
  Tensor w({2, 2}, {1, 1, 1, -1});
  Tensor y = linear(x, w);
  EXPECT_DOUBLE_EQ(y(0), 5.0);
  EXPECT_DOUBLE_EQ(y(1), -1.0);
}

TEST(Linear, ZeroWeightsZeroOutputAndGradient) {
  Tensor x({2}, {2, 3});
  Tensor w({2, 2}, {0, 0, 0, 0});
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor y = sum(linear(xt, w));
  EXPECT_DOUBLE_EQ(y.value(), 0.0);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Linear, BatchedRowsAreIndependent) {
  Tensor x({2, 2}, {1, 0, 0, 1});
  Tensor w({2, 2}, {3, 4, 5, 6});
  Tensor y = linear(x, w);
  EXPECT_EQ(y.shape(), (std::vector<std::int64_t>{2, 2}));
  EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(y(1, 1), 6.0);
}

TEST(Relu, ClampsNegatives) {
  Tensor x({3}, {-1, 0, 2});
  Tensor y = relu(x);
  EXPECT_DOUBLE_EQ(y(0), 0.0);
  EXPECT_DOUBLE_EQ(y(1), 0.0);
  EXPECT_DOUBLE_EQ(y(2), 2.0);
}

TEST(Relu, AllNegativeGivesZeroOutputAndGradient) {
  Tensor x({3}, {-1, -2, -3});
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor y = sum(relu(xt));
  EXPECT_DOUBLE_EQ(y.value(), 0.0);
  tape.backward(y);
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Relu, SumGradientIsIndicator) {
  Tensor x({2}, {-1, 3});
  Tape tape;
  Tensor xt = tape.watch(x);
  tape.backward(sum(relu(xt)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(GlobalMaxPool, PicksRowMaximum) {
  Tensor x({1, 3}, {1, 5, 2});
  Tensor y = global_max_pool(x);
  ASSERT_EQ(y.size(), 1);
  EXPECT_DOUBLE_EQ(y(0), 5.0);
}

TEST(GlobalMaxPool, TieRoutesGradientToFirstIndex) {
  Tensor x({1, 3}, {7, 7, 7});
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor y = global_max_pool(xt);
  EXPECT_DOUBLE_EQ(y(0), 7.0);
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
}

TEST(GlobalMaxPool, PerChannelMax) {
  Tensor x({2, 2}, {1, 2, 4, 3});
  Tensor y = global_max_pool(x);
  EXPECT_DOUBLE_EQ(y(0), 2.0);
  EXPECT_DOUBLE_EQ(y(1), 4.0);
}

TEST(Dropout, PZeroIsIdentity) {
  Rng rng(1);
  Tensor x({4}, {1, -2, 3, -4});
  Tensor y = dropout(x, 0.0, true, rng);
  for (std::int64_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y(i), x(i));
}

TEST(Dropout, InferenceIsIdentity) {
  Rng rng(1);
  Tensor x({4}, {1, -2, 3, -4});
  Tensor y = dropout(x, 0.9, false, rng);
  for (std::int64_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y(i), x(i));
}

TEST(Dropout, RejectsBadProbability) {
  Rng rng(1);
  Tensor x({1}, {1});
  EXPECT_THROW(dropout(x, 1.0, true, rng), ValueError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ValueError);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Rng rng(20240);
  Tensor x({2}, {2.0, -3.0});
  double acc0 = 0.0, acc1 = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    Tensor y = dropout(x, 0.5, true, rng);
    acc0 += y(0);
    acc1 += y(1);
  }
  EXPECT_NEAR(acc0 / draws, 2.0, 0.05);
  EXPECT_NEAR(acc1 / draws, -3.0, 0.05);
}

TEST(Softmax, UniformOnEqualLogits) {
  Tensor y = softmax(Tensor({3}, {0, 0, 0}));
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_NEAR(y(i), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  Tensor y = softmax(Tensor({3}, {1000, 0, 0}));
  EXPECT_NEAR(y(0), 1.0, 1e-12);
  EXPECT_NEAR(y(1), 0.0, 1e-12);
  EXPECT_NEAR(y(2), 0.0, 1e-12);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_TRUE(std::isfinite(y(i)));
}

TEST(Softmax, LogRatiosGiveExactFractions) {
  Tensor y = softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(y(0), 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(y(1), 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(y(2), 3.0 / 6.0, 1e-12);
}

TEST(Softmax, RowsSumToOneOnRandomInput) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t b = rng.uniform_int(1, 4), k = rng.uniform_int(2, 6);
    Tensor x({b, k}, fill_uniform(rng, b * k, -15, 15));
    Tensor y = softmax(x);
    for (std::int64_t r = 0; r < b; ++r) {
      double s = 0.0;
      for (std::int64_t i = 0; i < k; ++i) {
        EXPECT_GT(y(r, i), 0.0);
        EXPECT_LT(y(r, i), 1.0);
        s += y(r, i);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Reductions, MeanValueAndGradient) {
  Tensor x({3}, {1, 2, 3});
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor y = mean(xt);
  EXPECT_DOUBLE_EQ(y.value(), 2.0);
  tape.backward(y);
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 3.0);
}

TEST(Reductions, LogClampFloor) {
  Tensor y = log_clamped(Tensor({1}, {0.0}));
  EXPECT_DOUBLE_EQ(y.value(), std::log(1e-12));
}

TEST(Reductions, LogStrictModeRejectsNonPositive) {
  StrictMathGuard guard(true);
  EXPECT_THROW(log_clamped(Tensor({1}, {0.0})), ValueError);
  EXPECT_THROW(log_clamped(Tensor({1}, {-1.0})), ValueError);
  EXPECT_DOUBLE_EQ(log_clamped(Tensor({1}, {1.0})).value(), 0.0);
}

TEST(Backward, SumGradIsAllOnes) {
  Tensor x({2, 3}, {0.5, -1, 2, 7, 0, -4});
  Tape tape;
  Tensor xt = tape.watch(x);
  tape.backward(sum(xt));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x({2}, {1, 2});
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor loss = sum(xt);
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 2.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x({2}, {1, 2});
  Tape tape;
  Tensor xt = tape.watch(x);
  EXPECT_THROW(tape.backward(xt), ValueError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // y = x*x + x uses x three times; dy/dx = 2x + 1.
  Tensor x({3}, {0.5, -1.5, 2.0});
  Tape tape;
  Tensor xt = tape.watch(x);
  tape.backward(sum(add(mul(xt, xt), xt)));
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_NEAR(x.grad()[i], 2.0 * x(i) + 1.0, 1e-12);
}

TEST(Backward, TrackedForwardBitIdenticalToUntracked) {
  Rng rng(5);
  Tensor x({2, 9}, fill_uniform(rng, 18, -2, 2));
  Tensor w({3, 2, 3}, fill_uniform(rng, 18, -1, 1));
  Tensor w2({3, 3}, fill_uniform(rng, 9, -1, 1));

  Tensor plain = softmax(linear(global_max_pool(relu(conv1d(x, w, 2))), w2));

  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor wt = tape.watch(w);
  Tensor w2t = tape.watch(w2);
  Tensor tracked = softmax(linear(global_max_pool(relu(conv1d(xt, wt, 2))), w2t));

  ASSERT_EQ(plain.size(), tracked.size());
  for (std::int64_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain(i), tracked(i));
}

TEST(StackRows, ConcatenatesAndSplitsGradient) {
  Tensor a({2}, {1, 2});
  Tensor b({2}, {3, 4});
  Tape tape;
  Tensor at = tape.watch(a);
  Tensor bt = tape.watch(b);
  Tensor m = stack_rows({at, bt});
  EXPECT_EQ(m.shape(), (std::vector<std::int64_t>{2, 2}));
  EXPECT_DOUBLE_EQ(m(1, 0), 3.0);
  tape.backward(mean(m));
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.25);
  EXPECT_DOUBLE_EQ(b.grad()[1], 0.25);
}

// Finite-difference property checks. Each generator redraws inputs that sit
// too close to a nondifferentiability (ReLU kink, pooling tie) for a central
// difference at eps=1e-5 to be valid.

constexpr double kFdTol = 1e-4;
constexpr double kKinkMargin = 1e-3;

TEST(GradCheckProperty, QuadraticIsNearlyExact) {
  Tensor p({1}, {1.3});
  GradCheckReport rep =
      check_gradients({&p}, [](const std::vector<Tensor>& ps) { return mul(ps[0], ps[0]); });
  EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(GradCheckProperty, LinearSoftmaxCrossEntropy) {
  Rng rng(301);
  Tensor x({4}, fill_uniform(rng, 4, -1, 1));
  Tensor w({3, 4}, fill_uniform(rng, 12, -1, 1));
  Tensor target({3}, {0.2, 0.5, 0.3});
  GradCheckReport rep = check_gradients({&w}, [&](const std::vector<Tensor>& ps) {
    Tensor p = softmax(linear(x, ps[0]));
    return neg(sum(mul(target, log_clamped(p))));
  });
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheckProperty, DilatedConvolution) {
  Rng rng(302);
  Tensor x({2, 11}, fill_uniform(rng, 22, -1, 1));
  Tensor w({3, 2, 3}, fill_uniform(rng, 18, -1, 1));
  Tensor mix({3, 7}, fill_uniform(rng, 21, -1, 1));
  GradCheckReport rep = check_gradients({&x, &w}, [&](const std::vector<Tensor>& ps) {
    return sum(mul(conv1d(ps[0], ps[1], 2), mix));
  });
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheckProperty, EveryOpOverTwentySeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(derive_seed(900, "op-fd", seed));

    {
      const std::int64_t cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
      const int k = static_cast<int>(rng.uniform_int(1, 3));
      const int dil = static_cast<int>(rng.uniform_int(1, 2));
      const std::int64_t t = 1 + dil * (k - 1) + rng.uniform_int(0, 5);
      Tensor x({cin, t}, fill_uniform(rng, cin * t, -2, 2));
      Tensor w({cout, cin, k}, fill_uniform(rng, cout * cin * k, -2, 2));
      const std::int64_t t_out = t - dil * (k - 1);
      Tensor mix({cout, t_out}, fill_uniform(rng, cout * t_out, -1, 1));
      GradCheckReport rep = check_gradients({&x, &w}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(conv1d(ps[0], ps[1], dil), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "conv1d seed " << seed;
    }

    {
      const std::int64_t din = rng.uniform_int(1, 5), dout = rng.uniform_int(1, 5);
      const std::int64_t b = rng.uniform_int(1, 4);
      Tensor x({b, din}, fill_uniform(rng, b * din, -2, 2));
      Tensor w({dout, din}, fill_uniform(rng, dout * din, -2, 2));
      Tensor mix({b, dout}, fill_uniform(rng, b * dout, -1, 1));
      GradCheckReport rep = check_gradients({&x, &w}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(linear(ps[0], ps[1]), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "linear seed " << seed;
    }

    {
      const std::int64_t n = rng.uniform_int(2, 8);
      Tensor x({n});
      do {
        x.values() = fill_uniform(rng, n, -2, 2);
      } while ([&] {
        for (double v : x.values())
          if (std::abs(v) < kKinkMargin) return true;
        return false;
      }());
      Tensor mix({n}, fill_uniform(rng, n, -1, 1));
      GradCheckReport rep = check_gradients({&x}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(relu(ps[0]), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "relu seed " << seed;
    }

    {
      const std::int64_t c = rng.uniform_int(1, 3), t = rng.uniform_int(2, 6);
      Tensor x({c, t});
      do {
        x.values() = fill_uniform(rng, c * t, -2, 2);
      } while ([&] {
        for (std::int64_t row = 0; row < c; ++row) {
          double top1 = -1e300, top2 = -1e300;
          for (std::int64_t j = 0; j < t; ++j) {
            const double v = x(row, j);
            if (v > top1) {
              top2 = top1;
              top1 = v;
            } else if (v > top2) {
              top2 = v;
            }
          }
          if (top1 - top2 < kKinkMargin) return true;
        }
        return false;
      }());
      Tensor mix({c}, fill_uniform(rng, c, -1, 1));
      GradCheckReport rep = check_gradients({&x}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(global_max_pool(ps[0]), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "global_max_pool seed " << seed;
    }

    {
      const std::int64_t k = rng.uniform_int(2, 6);
      Tensor x({k}, fill_uniform(rng, k, -3, 3));
      Tensor mix({k}, fill_uniform(rng, k, -1, 1));
      GradCheckReport rep = check_gradients({&x}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(softmax(ps[0]), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "softmax seed " << seed;
    }

    {
      const std::int64_t n = rng.uniform_int(1, 6);
      Tensor x({n}, fill_uniform(rng, n, 0.1, 3.0));
      GradCheckReport rep = check_gradients({&x}, [&](const std::vector<Tensor>& ps) {
        return mean(log_clamped(ps[0]));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "log seed " << seed;
    }

    {
      const std::int64_t n = rng.uniform_int(1, 6);
      Tensor a({n}, fill_uniform(rng, n, -2, 2));
      Tensor b({n}, fill_uniform(rng, n, -2, 2));
      GradCheckReport rep = check_gradients({&a, &b}, [&](const std::vector<Tensor>& ps) {
        return mean(add(mul(ps[0], ps[1]), scale(sub(ps[0], ps[1]), 0.7)));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "arith seed " << seed;
    }

    {
      const std::int64_t n = rng.uniform_int(2, 5);
      Tensor a({n}, fill_uniform(rng, n, -2, 2));
      Tensor b({n}, fill_uniform(rng, n, -2, 2));
      Tensor mix({2, n}, fill_uniform(rng, 2 * n, -1, 1));
      GradCheckReport rep = check_gradients({&a, &b}, [&](const std::vector<Tensor>& ps) {
        return sum(mul(stack_rows({ps[0], ps[1]}), mix));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "stack seed " << seed;
    }

    {
      const std::int64_t n = rng.uniform_int(2, 6);
      Tensor x({n}, fill_uniform(rng, n, -2, 2));
      const std::uint64_t mask_seed = derive_seed(901, "dropout-fd", seed);
      GradCheckReport rep = check_gradients({&x}, [&](const std::vector<Tensor>& ps) {
        Rng mask_rng(mask_seed);
        return mean(dropout(ps[0], 0.4, true, mask_rng));
      });
      EXPECT_LT(rep.max_rel_error, kFdTol) << "dropout seed " << seed;
    }
  }
}

}  // namespace
}  // namespace domgen
