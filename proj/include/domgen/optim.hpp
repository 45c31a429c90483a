// domgen/optim.hpp
//
// Adam optimizer and in-place weight clipping.

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/tensor.hpp"

namespace domgen {

// Adam with bias correction. step() consumes the accumulated gradients of
// the registered parameters and zeroes them afterwards, so each optimizer
// step corresponds to whatever backward calls ran since the previous step.
class Adam {
 public:
  explicit Adam(std::vector<Tensor*> params, double lr = 1e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(!params_.empty(), "Adam: no parameters");
    require(lr_ > 0.0, "Adam: learning rate must be positive, got ", lr_);
    require(beta1_ >= 0.0 && beta1_ < 1.0, "Adam: beta1 must be in [0, 1), got ", beta1_);
    require(beta2_ >= 0.0 && beta2_ < 1.0, "Adam: beta2 must be in [0, 1), got ", beta2_);
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Tensor* p : params_) {
      require(p != nullptr && !p->empty(), "Adam: null or empty parameter");
      m_.emplace_back(static_cast<std::size_t>(p->size()), 0.0);
      v_.emplace_back(static_cast<std::size_t>(p->size()), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      require(p.has_grad(), "Adam::step: parameter ", i,
              " has no gradient buffer; run backward through a tape first");
      const std::vector<double>& g = p.grad();
      if (strict_math())
        for (double gv : g)
          require(std::isfinite(gv), "Adam::step: non-finite gradient in parameter ", i);
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      std::vector<double>& w = p.values();
      for (std::size_t e = 0; e < w.size(); ++e) {
        m[e] = beta1_ * m[e] + (1.0 - beta1_) * g[e];
        v[e] = beta2_ * v[e] + (1.0 - beta2_) * g[e] * g[e];
        const double m_hat = m[e] / bc1;
        const double v_hat = v[e] / bc2;
        w[e] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (Tensor* p : params_) p->zero_grad();
  }

  std::int64_t steps() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Clamps every parameter element to [-c, c] in place.
inline void clip_weights(const std::vector<Tensor*>& params, double c) {
  require(c > 0.0, "clip_weights: clip bound must be positive, got ", c);
  for (Tensor* p : params)
    for (double& w : p->values()) w = std::clamp(w, -c, c);
}

// True when every element of every parameter lies in [-c, c].
inline bool weights_within(const std::vector<Tensor*>& params, double c) {
  for (const Tensor* p : params)
    for (double w : p->values())
      if (w < -c || w > c) return false;
  return true;
}

}  // namespace domgen
