// domgen/models.hpp
//
// The three bias-free networks: feature encoder (two 1-D convolutions and
// global max pooling), emotion classifier (three FC layers and softmax),
// and Wasserstein critic (three FC layers, linear output). Plus parameter
// initialization and binary checkpoints.

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
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/data.hpp"
#include "domgen/tensor.hpp"

namespace domgen {

inline constexpr int kConv1Kernel = 15;
inline constexpr int kConv2Kernel = 5;
inline constexpr int kConv2Dilation = 2;
// conv1 consumes 15 frames and conv2 spans 1 + 2*(5-1) = 9 of its outputs.
inline constexpr std::int64_t kMinFrames = kConv1Kernel + kConv2Dilation * (kConv2Kernel - 1);
inline constexpr double kDropoutP = 0.2;

struct EncoderParams {
  Tensor conv1;  // C x 40 x 15
  Tensor conv2;  // C x C x 5, dilation 2
  double dropout_p = kDropoutP;

  int channels() const { return static_cast<int>(conv1.dim(0)); }
  std::vector<Tensor*> tensors() { return {&conv1, &conv2}; }

  EncoderParams watched(Tape& tape) {
    EncoderParams out = *this;
    out.conv1 = tape.watch(conv1);
    out.conv2 = tape.watch(conv2);
    return out;
  }
};

struct ClassifierParams {
  Tensor fc1;  // C x C
  Tensor fc2;  // C x C
  Tensor fc3;  // 3 x C

  std::vector<Tensor*> tensors() { return {&fc1, &fc2, &fc3}; }

  ClassifierParams watched(Tape& tape) {
    ClassifierParams out = *this;
    out.fc1 = tape.watch(fc1);
    out.fc2 = tape.watch(fc2);
    out.fc3 = tape.watch(fc3);
    return out;
  }
};

struct CriticParams {
  Tensor fc1;  // C x C
  Tensor fc2;  // C x C
  Tensor fc3;  // D_out x C

  int outputs() const { return static_cast<int>(fc3.dim(0)); }
  std::vector<Tensor*> tensors() { return {&fc1, &fc2, &fc3}; }

  CriticParams watched(Tape& tape) {
    CriticParams out = *this;
    out.fc1 = tape.watch(fc1);
    out.fc2 = tape.watch(fc2);
    out.fc3 = tape.watch(fc3);
    return out;
  }
};

struct ModelParams {
  EncoderParams enc;
  ClassifierParams cls;
  CriticParams cri;
};

namespace detail {

inline Tensor uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& w : t.values()) w = rng.uniform(-bound, bound);
  return t;
}

}  // namespace detail

// Scaled-uniform init, each weight in +-sqrt(6/fan_in). Every tensor draws
// from its own derived stream, so parameters are reproducible regardless of
// construction order.
inline ModelParams init_params(std::uint64_t seed, int channels = 128, int critic_outputs = 1) {
  require(channels >= 1, "init_params: channels must be positive, got ", channels);
  require(critic_outputs >= 1, "init_params: critic needs at least 1 output, got ",
          critic_outputs);
  const std::int64_t c = channels;
  ModelParams p;
  auto stream = [&](const char* name) { return Rng(derive_seed(seed, detail::str_cat("init/", name))); };

  Rng r1 = stream("enc.conv1");
  p.enc.conv1 = detail::uniform_init({c, kNumMelBins, kConv1Kernel}, kNumMelBins * kConv1Kernel, r1);
  Rng r2 = stream("enc.conv2");
  p.enc.conv2 = detail::uniform_init({c, c, kConv2Kernel}, c * kConv2Kernel, r2);
  Rng r3 = stream("cls.fc1");
  p.cls.fc1 = detail::uniform_init({c, c}, c, r3);
  Rng r4 = stream("cls.fc2");
  p.cls.fc2 = detail::uniform_init({c, c}, c, r4);
  Rng r5 = stream("cls.fc3");
  p.cls.fc3 = detail::uniform_init({kNumClasses, c}, c, r5);
  Rng r6 = stream("cri.fc1");
  p.cri.fc1 = detail::uniform_init({c, c}, c, r6);
  Rng r7 = stream("cri.fc2");
  p.cri.fc2 = detail::uniform_init({c, c}, c, r7);
  Rng r8 = stream("cri.fc3");
  p.cri.fc3 = detail::uniform_init({critic_outputs, c}, c, r8);
  return p;
}

// conv1 -> ReLU -> dilated conv2 -> ReLU -> global max pool -> dropout.
inline Tensor encode_one(const EncoderParams& p, const Tensor& x, bool training, Rng& rng) {
  require(x.rank() == 2 && x.dim(0) == kNumMelBins, "encode: expected ", kNumMelBins,
          " x T features");
  require(x.dim(1) >= kMinFrames, "encode: utterance has ", x.dim(1),
          " frames; the receptive field needs at least ", kMinFrames);
  Tensor h = relu(conv1d(x, p.conv1));
  h = relu(conv1d(h, p.conv2, kConv2Dilation));
  Tensor rep = global_max_pool(h);
  return dropout(rep, p.dropout_p, training, rng);
}

// B x C representations for a padded batch.
inline Tensor encode(const EncoderParams& p, const Batch& batch, bool training, Rng& rng) {
  require(!batch.features.empty(), "encode: empty batch");
  for (std::size_t i = 0; i < batch.lengths.size(); ++i)
    require(batch.lengths[i] >= kMinFrames, "encode: utterance ", i, " has ", batch.lengths[i],
            " frames; the receptive field needs at least ", kMinFrames);
  std::vector<Tensor> reps;
  reps.reserve(batch.features.size());
  for (const Tensor& x : batch.features) reps.push_back(encode_one(p, x, training, rng));
  return stack_rows(reps);
}

// fc -> ReLU -> fc -> ReLU -> fc -> softmax. reps: B x C (or C).
inline Tensor classify(const ClassifierParams& p, const Tensor& reps) {
  Tensor h = relu(linear(reps, p.fc1));
  h = relu(linear(h, p.fc2));
  return softmax(linear(h, p.fc3));
}

// Same trunk with a linear head; scores are unbounded. reps: B x C (or C).
inline Tensor criticize(const CriticParams& p, const Tensor& reps) {
  Tensor h = relu(linear(reps, p.fc1));
  h = relu(linear(h, p.fc2));
  return linear(h, p.fc3);
}

// ---------------------------------------------------------------------------
// Checkpoints: "DGP1" magic, then per tensor: uint32 name length, name
// bytes, uint32 rank, uint32 dims, 64-bit little-endian floats.

namespace detail {

inline void append_u64le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> 8 * i & 0xff));
}

inline std::uint64_t read_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << 8 * i;
  return v;
}

}  // namespace detail

inline std::vector<std::pair<std::string, Tensor*>> named_tensors(ModelParams& p) {
  return {{"enc.conv1", &p.enc.conv1}, {"enc.conv2", &p.enc.conv2}, {"cls.fc1", &p.cls.fc1},
          {"cls.fc2", &p.cls.fc2},     {"cls.fc3", &p.cls.fc3},     {"cri.fc1", &p.cri.fc1},
          {"cri.fc2", &p.cri.fc2},     {"cri.fc3", &p.cri.fc3}};
}

inline void save_checkpoint(ModelParams& params, const std::string& path) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'D', 'G', 'P', '1'});
  for (const auto& [name, tensor] : named_tensors(params)) {
    detail::append_u32le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::append_u32le(out, static_cast<std::uint32_t>(tensor->rank()));
    for (std::int64_t d : tensor->shape())
      detail::append_u32le(out, static_cast<std::uint32_t>(d));
    for (double v : tensor->values()) {
      std::uint64_t u;
      std::memcpy(&u, &v, 8);
      detail::append_u64le(out, u);
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(detail::str_cat("cannot open ", tmp, " for writing"));
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(detail::str_cat("short write to ", tmp));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError(detail::str_cat("cannot move ", tmp, " into place"));
}

inline ModelParams load_checkpoint(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::slurp(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DGP1", 4) != 0)
    throw IoError(detail::str_cat(path, ": bad magic; not a DGP1 checkpoint"));

  std::vector<std::pair<std::string, Tensor>> loaded;
  std::size_t pos = 4;
  while (pos < bytes.size()) {
    auto need = [&](std::size_t n) {
      if (pos + n > bytes.size()) throw IoError(detail::str_cat(path, ": truncated checkpoint"));
    };
    need(4);
    const std::uint32_t name_len = detail::read_u32le(&bytes[pos]);
    pos += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(&bytes[pos]), name_len);
    pos += name_len;
    need(4);
    const std::uint32_t rank = detail::read_u32le(&bytes[pos]);
    pos += 4;
    require(rank >= 1 && rank <= 4, path, ": tensor ", name, " has unreasonable rank ", rank);
    std::vector<std::int64_t> shape;
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      need(4);
      const std::uint32_t d = detail::read_u32le(&bytes[pos]);
      pos += 4;
      require(d >= 1, path, ": tensor ", name, " has zero dimension");
      shape.push_back(d);
      count *= d;
    }
    need(static_cast<std::size_t>(count) * 8);
    Tensor t(shape);
    for (std::int64_t i = 0; i < count; ++i) {
      const std::uint64_t u = detail::read_u64le(&bytes[pos + static_cast<std::size_t>(i) * 8]);
      double v;
      std::memcpy(&v, &u, 8);
      t.values()[static_cast<std::size_t>(i)] = v;
    }
    pos += static_cast<std::size_t>(count) * 8;
    loaded.emplace_back(std::move(name), std::move(t));
  }

  ModelParams params;
  std::size_t found = 0;
  for (auto& [name, target] : named_tensors(params)) {
    for (auto& [have, tensor] : loaded) {
      if (have == name) {
        *target = tensor;
        ++found;
        break;
      }
    }
  }
  require(found == named_tensors(params).size(), path, ": checkpoint is missing tensors (found ",
          found, " of ", named_tensors(params).size(), ")");
  require(params.enc.conv1.rank() == 3 && params.enc.conv1.dim(1) == kNumMelBins &&
              params.enc.conv1.dim(2) == kConv1Kernel,
          path, ": enc.conv1 has unexpected shape");
  const std::int64_t c = params.enc.conv1.dim(0);
  require(params.enc.conv2.rank() == 3 && params.enc.conv2.dim(0) == c &&
              params.enc.conv2.dim(1) == c && params.enc.conv2.dim(2) == kConv2Kernel,
          path, ": enc.conv2 has unexpected shape");
  for (Tensor* t : {&params.cls.fc1, &params.cls.fc2, &params.cri.fc1, &params.cri.fc2})
    require(t->rank() == 2 && t->dim(0) == c && t->dim(1) == c, path,
            ": hidden FC layer has unexpected shape");
  require(params.cls.fc3.rank() == 2 && params.cls.fc3.dim(0) == kNumClasses &&
              params.cls.fc3.dim(1) == c,
          path, ": cls.fc3 has unexpected shape");
  require(params.cri.fc3.rank() == 2 && params.cri.fc3.dim(1) == c, path,
          ": cri.fc3 has unexpected shape");
  return params;
}

}  // namespace domgen
