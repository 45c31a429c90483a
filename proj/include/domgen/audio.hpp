// domgen/audio.hpp
//
// PCM WAV input/output, peak normalization, and band-limited sample-rate
// conversion with a Kaiser-windowed sinc polyphase filter.

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
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "domgen/common.hpp"

namespace domgen {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  bool silence_warning = false;  // set when peak_normalize sees an all-zero clip
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void append_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8 & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 16 & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 24 & 0xff));
}

inline void append_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8 & 0xff));
}

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(str_cat("cannot open ", path));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

// Reads a RIFF/WAVE file. PCM 16-bit and IEEE-float 32-bit are supported;
// multi-channel audio is averaged to mono. Integer samples are scaled by
// 1/32768.
inline AudioClip read_wav(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::slurp(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError(detail::str_cat(path, ": not a RIFF/WAVE file"));

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = detail::read_u32le(&bytes[pos + 4]);
    const unsigned char* id = &bytes[pos];
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size())
      throw IoError(detail::str_cat(path, ": truncated chunk"));
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError(detail::str_cat(path, ": fmt chunk too short"));
      format = detail::read_u16le(&bytes[body]);
      channels = detail::read_u16le(&bytes[body + 2]);
      rate = detail::read_u32le(&bytes[body + 4]);
      bits = detail::read_u16le(&bytes[body + 14]);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0) throw IoError(detail::str_cat(path, ": missing fmt or data chunk"));
  if (channels == 0 || rate == 0) throw IoError(detail::str_cat(path, ": bad fmt fields"));

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw IoError(detail::str_cat(path, ": unsupported codec (format tag ", format, ", ", bits,
                                  " bits); expected PCM16 or IEEE float32"));

  const std::size_t bytes_per = pcm16 ? 2u : 4u;
  const std::size_t n_values = data_len / (bytes_per * channels) * channels;
  const std::size_t n_frames = n_values / channels;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t off = data_off + (f * channels + ch) * bytes_per;
      if (pcm16) {
        const auto raw = static_cast<std::int16_t>(detail::read_u16le(&bytes[off]));
        acc += static_cast<double>(raw) / 32768.0;
      } else {
        std::uint32_t u = detail::read_u32le(&bytes[off]);
        float fv;
        std::memcpy(&fv, &u, 4);
        acc += static_cast<double>(fv);
      }
    }
    clip.samples[f] = acc / channels;
  }
  return clip;
}

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] and quantized by
// round(x * 32768) (with 32767 as the positive ceiling).
inline void write_wav(const AudioClip& clip, const std::string& path) {
  require(clip.sample_rate > 0, "write_wav: sample rate must be positive");
  std::vector<unsigned char> out;
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_len = n * 2;

  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::append_u32le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  detail::append_u32le(out, 16);
  detail::append_u16le(out, 1);  // PCM
  detail::append_u16le(out, 1);  // mono
  detail::append_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::append_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  detail::append_u16le(out, 2);   // block align
  detail::append_u16le(out, 16);  // bits
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::append_u32le(out, data_len);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const long q = std::lround(clamped * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767));
    detail::append_u16le(out, static_cast<std::uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(detail::str_cat("cannot open ", path, " for writing"));
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(detail::str_cat("short write to ", path));
}

// Scales so that max |sample| is exactly 1. An all-zero clip comes back
// unchanged with silence_warning set.
inline AudioClip peak_normalize(AudioClip clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) {
    clip.silence_warning = true;
    return clip;
  }
  for (double& s : clip.samples) s /= peak;
  return clip;
}

namespace detail {

// Zeroth-order modified Bessel function, power series.
inline double bessel_i0(double x) {
  const double half_sq = x * x / 4.0;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= half_sq / (k * k);
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

inline constexpr double kPi = 3.14159265358979323846;

inline double sinc_pi(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace detail

inline constexpr double kResampleKaiserBeta = 12.0;
inline constexpr int kResampleZeroCrossings = 64;

// Band-limited rational-ratio resampler. The reconstruction kernel is
//   h(tau) = rho * sinc(rho * tau) * kaiser(rho * tau / 64),  rho = min(1, L/M)
// in source-sample units, where L/M is the reduced target/source ratio.
// Output sample j sits at source position j*M/L, evaluated with exact
// integer phase arithmetic; per-phase tap tables are precomputed when the
// phase count is moderate. Output length is round(n * target / source).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0, "resample: target rate must be positive, got ", target_rate);
  require(clip.sample_rate > 0, "resample: source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const std::int64_t g = std::gcd<std::int64_t>(target_rate, clip.sample_rate);
  const std::int64_t l = target_rate / g;   // upsample factor
  const std::int64_t m = clip.sample_rate / g;  // downsample factor
  const double rho = l >= m ? 1.0 : static_cast<double>(l) / static_cast<double>(m);
  const double support = kResampleZeroCrossings / rho;  // half-width in source samples
  const auto half = static_cast<std::int64_t>(std::ceil(support));
  const double i0_beta = detail::bessel_i0(kResampleKaiserBeta);

  const auto kernel = [&](double tau) {
    const double u = rho * tau / kResampleZeroCrossings;
    if (u <= -1.0 || u >= 1.0) return 0.0;
    const double window = detail::bessel_i0(kResampleKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
    return rho * detail::sinc_pi(rho * tau) * window;
  };

  const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
  AudioClip out;
  out.sample_rate = target_rate;
  out.silence_warning = clip.silence_warning;
  const std::int64_t n_out = (n * l + m / 2) / m;
  out.samples.resize(static_cast<std::size_t>(n_out));

  // taps[r][i] = h(i - half + r/L); output j uses source index base + k.
  std::vector<std::vector<double>> taps;
  if (l <= 2048) {
    taps.resize(static_cast<std::size_t>(l));
    for (std::int64_t r = 0; r < l; ++r) {
      const double frac = static_cast<double>(r) / static_cast<double>(l);
      std::vector<double>& row = taps[static_cast<std::size_t>(r)];
      row.resize(static_cast<std::size_t>(2 * half + 1));
      for (std::int64_t i = 0; i <= 2 * half; ++i)
        row[static_cast<std::size_t>(i)] = kernel(frac + static_cast<double>(half - i));
    }
  }

  const double* x = clip.samples.data();
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t num = j * m;       // position = num / L source samples
    const std::int64_t base = num / l;
    const std::int64_t r = num % l;
    const std::int64_t lo = std::max<std::int64_t>(0, base - half);
    const std::int64_t hi = std::min<std::int64_t>(n - 1, base + half);
    double acc = 0.0;
    if (!taps.empty()) {
      const double* row = taps[static_cast<std::size_t>(r)].data();
      for (std::int64_t s = lo; s <= hi; ++s) acc += x[s] * row[s - (base - half)];
    } else {
      const double frac = static_cast<double>(r) / static_cast<double>(l);
      for (std::int64_t s = lo; s <= hi; ++s)
        acc += x[s] * kernel(static_cast<double>(base - s) + frac);
    }
    out.samples[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

}  // namespace domgen
