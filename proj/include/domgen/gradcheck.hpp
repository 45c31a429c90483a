// domgen/gradcheck.hpp
//
// Central finite-difference verification of tape gradients.

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

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/tensor.hpp"

namespace domgen {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;    // index into the params vector
  std::int64_t worst_element = 0;  // flat element within that parameter
  std::int64_t evaluated = 0;     // total elements compared

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares tape gradients of `loss_fn` against central finite differences.
//
// `loss_fn` receives the parameter tensors (tracked aliases for the tape
// pass, the raw tensors for numeric evaluations) and returns a scalar loss.
// It must be deterministic: any internal randomness has to be fixed across
// calls, or the difference quotients are meaningless. The relative error is
//   |g_tape - g_fd| / max(|g_tape|, |g_fd|, 1e-8).
//
// `ignore_below` skips elements where BOTH gradients are smaller than the
// bound. The central difference of a negligible gradient measures rounding
// noise of the loss evaluation, not the derivative, so such comparisons
// carry no information; a genuinely wrong gradient still trips the check
// because then one of the two sides is large.
template <typename LossFn>
GradCheckReport check_gradients(const std::vector<Tensor*>& params, LossFn&& loss_fn,
                                double epsilon = 1e-5, double ignore_below = 0.0) {
  require(!params.empty(), "check_gradients: no parameters");
  require(epsilon > 0.0, "check_gradients: epsilon must be positive, got ", epsilon);

  Tape tape;
  std::vector<Tensor> tracked;
  tracked.reserve(params.size());
  for (Tensor* p : params) {
    Tensor alias = tape.watch(*p);
    alias.zero_grad();
    tracked.push_back(alias);
  }
  Tensor loss = loss_fn(tracked);
  tape.backward(loss);

  std::vector<std::vector<double>> tape_grads;
  tape_grads.reserve(params.size());
  for (Tensor* p : params) tape_grads.push_back(p->grad());

  std::vector<Tensor> raw;
  raw.reserve(params.size());
  for (Tensor* p : params) raw.push_back(*p);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<double>& vals = params[pi]->values();
    for (std::size_t e = 0; e < vals.size(); ++e) {
      const double saved = vals[e];
      vals[e] = saved + epsilon;
      const double f_plus = loss_fn(raw).value();
      vals[e] = saved - epsilon;
      const double f_minus = loss_fn(raw).value();
      vals[e] = saved;

      const double g_fd = (f_plus - f_minus) / (2.0 * epsilon);
      const double g_tape = tape_grads[pi][e];
      if (std::abs(g_tape) < ignore_below && std::abs(g_fd) < ignore_below) continue;
      const double rel = std::abs(g_tape - g_fd) /
                         std::max({std::abs(g_tape), std::abs(g_fd), 1e-8});
      ++report.evaluated;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_element = static_cast<std::int64_t>(e);
      }
    }
  }
  return report;
}

}  // namespace domgen
