// domgen/common.hpp

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
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace domgen {

// Contract violation (bad arguments, shape mismatch, malformed input).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// I/O or file-format failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

template <typename... Args>
void require(bool cond, Args&&... msg) {
  if (!cond) throw ValueError(detail::str_cat(std::forward<Args>(msg)...));
}

// Strict numeric mode: when on, log of a non-positive value (beyond the
// clamp) and non-finite gradients raise instead of being patched over.
// Thread-local because training runs are confined to one thread each.
inline bool& strict_math() {
  thread_local bool strict = false;
  return strict;
}

// Scoped strict-mode switch; restores the previous setting on exit.
class StrictMathGuard {
 public:
  explicit StrictMathGuard(bool on) : saved_(strict_math()) { strict_math() = on; }
  ~StrictMathGuard() { strict_math() = saved_; }
  StrictMathGuard(const StrictMathGuard&) = delete;
  StrictMathGuard& operator=(const StrictMathGuard&) = delete;

 private:
  bool saved_;
};

// 64-bit FNV-1a. Used for seed derivation so that the mapping from
// (master seed, component, index) to RNG stream is pinned and portable.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Every random choice in the pipeline draws from a stream seeded by
// derive_seed(master, component, index). Reruns with the same master seed
// reproduce all of them, independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index = 0) {
  return fnv1a64(detail::str_cat(master, '/', component, '/', index));
}

// Deterministic RNG wrapper. mt19937_64 is pinned by the standard; the
// distribution transforms below are pinned here so that sampled values do
// not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ValueError("Rng::below: n must be positive");
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    require(hi >= lo, "Rng::uniform_int: empty range");
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller (cached spare).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Fisher-Yates; pinned here rather than std::shuffle so permutations are
  // identical across standard libraries.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace domgen
