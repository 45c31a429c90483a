// domgen/tensor.hpp
//
// Dense 64-bit float tensors with tape-based reverse-mode differentiation.
// The op set is exactly what the model stack needs: dilated 1-D valid
// convolution, bias-free linear layers, ReLU, global max pooling, inverted
// dropout, row softmax, clamped log, and scalar reductions.

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
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "domgen/common.hpp"

namespace domgen {

class Tape;

inline constexpr double kLogClamp = 1e-12;

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

  Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    require(static_cast<std::int64_t>(data_->size()) == count(shape_),
            "Tensor: data length ", data_->size(), " does not match shape product ",
            count(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool empty() const { return !data_; }

  std::vector<double>& values() { return *data_; }
  const std::vector<double>& values() const { return *data_; }

  double value() const {
    require(size() == 1, "Tensor::value: tensor is not scalar (size ", size(), ")");
    return (*data_)[0];
  }

  double operator()(std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  double operator()(std::int64_t r, std::int64_t c) const {
    return (*data_)[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Internal plumbing for op implementations: associates this tensor with
  // a recorded tape node.
  void bind(Tape* tape, int node) {
    tape_ = tape;
    node_ = node;
  }

  bool has_grad() const { return grad_ != nullptr; }
  const std::vector<double>& grad() const {
    require(grad_ != nullptr, "Tensor::grad: no gradient buffer (tensor was never watched)");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

  // Copy of this tensor's data with no tape association.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    t.grad_ = grad_;
    return t;
  }

  static std::int64_t count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
      require(d > 0, "Tensor: dimension sizes must be positive");
      n *= d;
    }
    return n;
  }

 private:
  friend class Tape;

  std::vector<std::int64_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;  // persistent; leaves only
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Append-only record of ops. Node inputs always precede the node, so a
// single reverse sweep propagates adjoints with each node visited once.
// A tape and the tensors built on it belong to one thread.
class Tape {
 public:
  using BackFn = std::function<void(const double* out_adj, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable leaf. Returns a tracked alias sharing data
  // and gradient storage with `t`; `t` itself stays untracked so it can be
  // reused with later tapes. Gradients accumulate across backward calls
  // until zero_grad.
  Tensor watch(Tensor& t) {
    require(!t.empty(), "Tape::watch: empty tensor");
    if (!t.grad_) t.grad_ = std::make_shared<std::vector<double>>(t.size(), 0.0);
    Tensor alias = t.detached();
    alias.tape_ = this;
    std::shared_ptr<std::vector<double>> g = t.grad_;
    alias.node_ = add_node(t.size(), [g](const double* adj, Tape&) {
      std::vector<double>& dst = *g;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += adj[i];
    });
    return alias;
  }

  int add_node(std::int64_t out_size, BackFn fn) {
    nodes_.push_back(Node{out_size, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Leaf nodes
  // add their adjoints into the persistent grad buffers they were watched
  // with. May be called repeatedly; leaf gradients accumulate.
  void backward(const Tensor& loss) {
    require(loss.tracked() && loss.tape() == this, "Tape::backward: loss is not on this tape");
    require(loss.size() == 1, "Tape::backward: loss must be scalar, got size ", loss.size());
    adj_.assign(nodes_.size(), {});
    ensure_adj(loss.node())[0] = 1.0;
    for (int i = loss.node(); i >= 0; --i) {
      if (adj_[static_cast<std::size_t>(i)].empty()) continue;
      nodes_[static_cast<std::size_t>(i)].back(adj_[static_cast<std::size_t>(i)].data(), *this);
    }
    adj_.clear();
  }

  // Adjoint buffer of a node, allocated on first touch (backward only).
  std::vector<double>& ensure_adj(int node) {
    auto& a = adj_[static_cast<std::size_t>(node)];
    if (a.empty()) a.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].out_size), 0.0);
    return a;
  }

 private:
  struct Node {
    std::int64_t out_size;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adj_;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
#ifndef NDEBUG
  for (double x : v) {
    if (!std::isfinite(x)) throw ValueError(str_cat(op, ": non-finite value in result"));
  }
#else
  (void)v;
  (void)op;
#endif
}

// Picks the tape shared by the tracked inputs (at most one tape allowed).
inline Tape* joint_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape == nullptr) tape = t->tape();
    require(tape == t->tape(), "tensor op: inputs live on different tapes");
  }
  return tape;
}

inline void accumulate(Tape& tape, const Tensor& input, const std::vector<double>& contrib) {
  if (!input.tracked()) return;
  std::vector<double>& a = tape.ensure_adj(input.node());
  for (std::size_t i = 0; i < contrib.size(); ++i) a[i] += contrib[i];
}

}  // namespace detail

// out[c,t] = sum_{i,k} w[c,i,k] * x[i, t + k*dilation]   (cross-correlation,
// "valid" extent, no bias). x: Cin x T, w: Cout x Cin x K.
inline Tensor conv1d(const Tensor& x, const Tensor& w, int dilation = 1) {
  require(x.rank() == 2, "conv1d: x must be Cin x T, got rank ", x.rank());
  require(w.rank() == 3, "conv1d: w must be Cout x Cin x K, got rank ", w.rank());
  require(dilation >= 1, "conv1d: dilation must be positive, got ", dilation);
  const std::int64_t cin = x.dim(0), t_in = x.dim(1);
  const std::int64_t cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == cin, "conv1d: w expects ", w.dim(1), " input channels, x has ", cin);
  const std::int64_t span = 1 + static_cast<std::int64_t>(dilation) * (k - 1);
  require(t_in >= span, "conv1d: input length ", t_in, " below receptive field; need at least ",
          span, " samples for kernel size ", k, " with dilation ", dilation);
  const std::int64_t t_out = t_in - static_cast<std::int64_t>(dilation) * (k - 1);

  Tensor out({cout, t_out});
  {
    const double* xd = x.values().data();
    const double* wd = w.values().data();
    double* od = out.values().data();
    for (std::int64_t c = 0; c < cout; ++c) {
      double* orow = od + c * t_out;
      for (std::int64_t i = 0; i < cin; ++i) {
        const double* xrow = xd + i * t_in;
        const double* wrow = wd + (c * cin + i) * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double wv = wrow[kk];
          const double* xs = xrow + kk * dilation;
          for (std::int64_t t = 0; t < t_out; ++t) orow[t] += wv * xs[t];
        }
      }
    }
  }
  detail::check_finite(out.values(), "conv1d");

  Tape* tape = detail::joint_tape({&x, &w});
  if (tape) {
    Tensor xc = x, wc = w;
    out.bind(tape, tape->add_node(out.size(), [xc, wc, dilation, cin, t_in, cout, k, t_out](
                                               const double* g, Tape& tp) {
      const double* xd = xc.values().data();
      const double* wd = wc.values().data();
      if (xc.tracked()) {
        std::vector<double>& ax = tp.ensure_adj(xc.node());
        for (std::int64_t c = 0; c < cout; ++c) {
          const double* grow = g + c * t_out;
          for (std::int64_t i = 0; i < cin; ++i) {
            double* arow = ax.data() + i * t_in;
            const double* wrow = wd + (c * cin + i) * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const double wv = wrow[kk];
              double* as = arow + kk * dilation;
              for (std::int64_t t = 0; t < t_out; ++t) as[t] += wv * grow[t];
            }
          }
        }
      }
      if (wc.tracked()) {
        std::vector<double>& aw = tp.ensure_adj(wc.node());
        for (std::int64_t c = 0; c < cout; ++c) {
          const double* grow = g + c * t_out;
          for (std::int64_t i = 0; i < cin; ++i) {
            const double* xrow = xd + i * t_in;
            double* arow = aw.data() + (c * cin + i) * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const double* xs = xrow + kk * dilation;
              double acc = 0.0;
              for (std::int64_t t = 0; t < t_out; ++t) acc += grow[t] * xs[t];
              arow[kk] += acc;
            }
          }
        }
      }
    }));
  }
  return out;
}

// out = w . x with w: Dout x Din. x may be a Din vector or a B x Din batch.
inline Tensor linear(const Tensor& x, const Tensor& w) {
  require(w.rank() == 2, "linear: w must be Dout x Din, got rank ", w.rank());
  require(x.rank() == 1 || x.rank() == 2, "linear: x must be rank 1 or 2, got rank ", x.rank());
  const std::int64_t dout = w.dim(0), din = w.dim(1);
  const bool batched = x.rank() == 2;
  const std::int64_t b = batched ? x.dim(0) : 1;
  const std::int64_t xin = batched ? x.dim(1) : x.dim(0);
  require(xin == din, "linear: w expects ", din, " inputs, x has ", xin);

  Tensor out(batched ? std::vector<std::int64_t>{b, dout} : std::vector<std::int64_t>{dout});
  {
    const double* xd = x.values().data();
    const double* wd = w.values().data();
    double* od = out.values().data();
    for (std::int64_t r = 0; r < b; ++r) {
      const double* xrow = xd + r * din;
      double* orow = od + r * dout;
      for (std::int64_t o = 0; o < dout; ++o) {
        const double* wrow = wd + o * din;
        double acc = 0.0;
        for (std::int64_t i = 0; i < din; ++i) acc += wrow[i] * xrow[i];
        orow[o] = acc;
      }
    }
  }
  detail::check_finite(out.values(), "linear");

  Tape* tape = detail::joint_tape({&x, &w});
  if (tape) {
    Tensor xc = x, wc = w;
    out.bind(tape, tape->add_node(out.size(), [xc, wc, b, din, dout](const double* g, Tape& tp) {
      const double* xd = xc.values().data();
      const double* wd = wc.values().data();
      if (xc.tracked()) {
        std::vector<double>& ax = tp.ensure_adj(xc.node());
        for (std::int64_t r = 0; r < b; ++r) {
          const double* grow = g + r * dout;
          double* arow = ax.data() + r * din;
          for (std::int64_t o = 0; o < dout; ++o) {
            const double gv = grow[o];
            const double* wrow = wd + o * din;
            for (std::int64_t i = 0; i < din; ++i) arow[i] += gv * wrow[i];
          }
        }
      }
      if (wc.tracked()) {
        std::vector<double>& aw = tp.ensure_adj(wc.node());
        for (std::int64_t r = 0; r < b; ++r) {
          const double* grow = g + r * dout;
          const double* xrow = xd + r * din;
          for (std::int64_t o = 0; o < dout; ++o) {
            const double gv = grow[o];
            double* arow = aw.data() + o * din;
            for (std::int64_t i = 0; i < din; ++i) arow[i] += gv * xrow[i];
          }
        }
      }
    }));
  }
  return out;
}

// max(0, x); subgradient at 0 taken as 0.
inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const std::vector<double>& xv = x.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;

  if (x.tracked()) {
    Tensor xc = x;
    out.bind(x.tape(), x.tape()->add_node(out.size(), [xc](const double* g, Tape& tp) {
      std::vector<double>& ax = tp.ensure_adj(xc.node());
      const std::vector<double>& xv2 = xc.values();
      for (std::size_t i = 0; i < xv2.size(); ++i)
        if (xv2[i] > 0.0) ax[i] += g[i];
    }));
  }
  return out;
}

// C x T -> C. Backward routes the adjoint to the argmax; first index wins
// ties so the subgradient choice is deterministic.
inline Tensor global_max_pool(const Tensor& x) {
  require(x.rank() == 2, "global_max_pool: x must be C x T, got rank ", x.rank());
  const std::int64_t c = x.dim(0), t = x.dim(1);
  require(t >= 1, "global_max_pool: empty time axis");

  Tensor out({c});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(c), 0);
  {
    const double* xd = x.values().data();
    double* od = out.values().data();
    for (std::int64_t i = 0; i < c; ++i) {
      const double* row = xd + i * t;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < t; ++j)
        if (row[j] > row[best]) best = j;
      argmax[static_cast<std::size_t>(i)] = best;
      od[i] = row[best];
    }
  }

  if (x.tracked()) {
    Tensor xc = x;
    out.bind(x.tape(), x.tape()->add_node(out.size(), [xc, argmax, c, t](const double* g, Tape& tp) {
      std::vector<double>& ax = tp.ensure_adj(xc.node());
      for (std::int64_t i = 0; i < c; ++i)
        ax[static_cast<std::size_t>(i * t + argmax[static_cast<std::size_t>(i)])] += g[i];
    }));
  }
  return out;
}

// Inverted dropout: in training mode each element is zeroed with
// probability p and survivors are scaled by 1/(1-p); inference is identity.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1), got ", p);
  if (!training || p == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;

  Tensor out(x.shape());
  const std::vector<double>& xv = x.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * mask[i];

  if (x.tracked()) {
    Tensor xc = x;
    out.bind(x.tape(), x.tape()->add_node(out.size(), [xc, mask](const double* g, Tape& tp) {
      std::vector<double>& ax = tp.ensure_adj(xc.node());
      for (std::size_t i = 0; i < mask.size(); ++i) ax[i] += g[i] * mask[i];
    }));
  }
  return out;
}

// Row softmax with max subtraction. x: K vector or B x K.
inline Tensor softmax(const Tensor& x) {
  require(x.rank() == 1 || x.rank() == 2, "softmax: x must be rank 1 or 2, got rank ", x.rank());
  const std::int64_t b = x.rank() == 2 ? x.dim(0) : 1;
  const std::int64_t k = x.rank() == 2 ? x.dim(1) : x.dim(0);

  Tensor out(x.shape());
  {
    const double* xd = x.values().data();
    double* od = out.values().data();
    for (std::int64_t r = 0; r < b; ++r) {
      const double* xrow = xd + r * k;
      double* orow = od + r * k;
      double mx = xrow[0];
      for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, xrow[i]);
      double z = 0.0;
      for (std::int64_t i = 0; i < k; ++i) {
        orow[i] = std::exp(xrow[i] - mx);
        z += orow[i];
      }
      for (std::int64_t i = 0; i < k; ++i) orow[i] /= z;
    }
  }
  detail::check_finite(out.values(), "softmax");

  if (x.tracked()) {
    Tensor xc = x, oc = out.detached();
    out.bind(x.tape(), x.tape()->add_node(out.size(), [xc, oc, b, k](const double* g, Tape& tp) {
      std::vector<double>& ax = tp.ensure_adj(xc.node());
      const double* s = oc.values().data();
      for (std::int64_t r = 0; r < b; ++r) {
        const double* srow = s + r * k;
        const double* grow = g + r * k;
        double dot = 0.0;
        for (std::int64_t i = 0; i < k; ++i) dot += grow[i] * srow[i];
        double* arow = ax.data() + r * k;
        for (std::int64_t i = 0; i < k; ++i) arow[i] += srow[i] * (grow[i] - dot);
      }
    }));
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out(a.shape());
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];

  Tape* tape = detail::joint_tape({&a, &b});
  if (tape) {
    Tensor ac = a, bc = b;
    out.bind(tape, tape->add_node(out.size(), [ac, bc](const double* g, Tape& tp) {
      if (ac.tracked()) {
        std::vector<double>& aa = tp.ensure_adj(ac.node());
        for (std::size_t i = 0; i < aa.size(); ++i) aa[i] += g[i];
      }
      if (bc.tracked()) {
        std::vector<double>& ab = tp.ensure_adj(bc.node());
        for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += g[i];
      }
    }));
  }
  return out;
}

// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out(a.shape());
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];

  Tape* tape = detail::joint_tape({&a, &b});
  if (tape) {
    Tensor ac = a, bc = b;
    out.bind(tape, tape->add_node(out.size(), [ac, bc](const double* g, Tape& tp) {
      if (ac.tracked()) {
        std::vector<double>& aa = tp.ensure_adj(ac.node());
        const std::vector<double>& bv2 = bc.values();
        for (std::size_t i = 0; i < aa.size(); ++i) aa[i] += g[i] * bv2[i];
      }
      if (bc.tracked()) {
        std::vector<double>& ab = tp.ensure_adj(bc.node());
        const std::vector<double>& av2 = ac.values();
        for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += g[i] * av2[i];
      }
    }));
  }
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  const std::vector<double>& av = a.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * s;

  if (a.tracked()) {
    Tensor ac = a;
    out.bind(a.tape(), a.tape()->add_node(out.size(), [ac, s](const double* g, Tape& tp) {
      std::vector<double>& aa = tp.ensure_adj(ac.node());
      for (std::size_t i = 0; i < aa.size(); ++i) aa[i] += g[i] * s;
    }));
  }
  return out;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

// log with the argument clamped at kLogClamp. In strict mode a non-positive
// input raises instead. Clamped entries get zero gradient, matching the
// finite-difference behaviour of the clamped function.
inline Tensor log_clamped(const Tensor& a) {
  Tensor out(a.shape());
  const std::vector<double>& av = a.values();
  std::vector<double>& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (strict_math() && av[i] <= 0.0)
      throw ValueError(detail::str_cat("log_clamped: non-positive input ", av[i], " in strict mode"));
    ov[i] = std::log(std::max(av[i], kLogClamp));
  }

  if (a.tracked()) {
    Tensor ac = a;
    out.bind(a.tape(), a.tape()->add_node(out.size(), [ac](const double* g, Tape& tp) {
      std::vector<double>& aa = tp.ensure_adj(ac.node());
      const std::vector<double>& av2 = ac.values();
      for (std::size_t i = 0; i < aa.size(); ++i)
        if (av2[i] > kLogClamp) aa[i] += g[i] / av2[i];
    }));
  }
  return out;
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc);

  if (a.tracked()) {
    Tensor ac = a;
    out.bind(a.tape(), a.tape()->add_node(1, [ac](const double* g, Tape& tp) {
      std::vector<double>& aa = tp.ensure_adj(ac.node());
      for (std::size_t i = 0; i < aa.size(); ++i) aa[i] += g[0];
    }));
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc * inv_n);

  if (a.tracked()) {
    Tensor ac = a;
    out.bind(a.tape(), a.tape()->add_node(1, [ac, inv_n](const double* g, Tape& tp) {
      std::vector<double>& aa = tp.ensure_adj(ac.node());
      for (std::size_t i = 0; i < aa.size(); ++i) aa[i] += g[0] * inv_n;
    }));
  }
  return out;
}

// Stacks B equal-length vectors into a B x D matrix; adjoints split back
// row by row.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "stack_rows: no rows");
  const std::int64_t d = rows[0].size();
  Tape* tape = nullptr;
  for (const Tensor& r : rows) {
    require(r.rank() == 1 && r.size() == d, "stack_rows: rows must be equal-length vectors");
    if (r.tracked()) {
      require(tape == nullptr || tape == r.tape(), "stack_rows: rows on different tapes");
      tape = r.tape();
    }
  }
  const std::int64_t b = static_cast<std::int64_t>(rows.size());
  Tensor out({b, d});
  for (std::int64_t r = 0; r < b; ++r)
    std::copy(rows[static_cast<std::size_t>(r)].values().begin(),
              rows[static_cast<std::size_t>(r)].values().end(),
              out.values().begin() + r * d);

  if (tape) {
    std::vector<Tensor> rc = rows;
    out.bind(tape, tape->add_node(out.size(), [rc, d](const double* g, Tape& tp) {
      for (std::size_t r = 0; r < rc.size(); ++r) {
        if (!rc[r].tracked()) continue;
        std::vector<double>& ar = tp.ensure_adj(rc[r].node());
        const double* grow = g + static_cast<std::int64_t>(r) * d;
        for (std::int64_t i = 0; i < d; ++i) ar[static_cast<std::size_t>(i)] += grow[i];
      }
    }));
  }
  return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace domgen
