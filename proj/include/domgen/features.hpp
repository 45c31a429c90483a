// domgen/features.hpp
//
// 40-dimensional log mel filterbank (MFB) extraction: povey-windowed
// 25 ms / 10 ms framing with within-frame preemphasis, power spectrum via a
// radix-2 FFT, triangular mel filters from 20 Hz to Nyquist, and a binary
// feature cache.

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
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "domgen/audio.hpp"
#include "domgen/common.hpp"

namespace domgen {

inline constexpr int kNumMelBins = 40;
inline constexpr int kFrameLengthMs = 25;
inline constexpr int kFrameShiftMs = 10;
inline constexpr double kPreemphasis = 0.97;
inline constexpr double kMelLowHz = 20.0;
// Floor applied to filterbank energies before the log; the smallest
// positive normal 32-bit float.
inline constexpr double kLogEnergyFloor = 1.17549435e-38;

struct FeatureMatrix {
  std::int64_t rows = 0;  // frames
  std::int64_t cols = 0;  // mel bins
  std::vector<float> values;  // row-major
  int sample_rate = 0;  // informational; not persisted in the cache

  float at(std::int64_t r, std::int64_t c) const {
    return values[static_cast<std::size_t>(r * cols + c)];
  }
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

// (0.5 - 0.5 cos(2 pi n / (N-1)))^0.85
inline std::vector<double> povey_window(int n) {
  require(n >= 2, "povey_window: need at least 2 points, got ", n);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double raised = 0.5 - 0.5 * std::cos(2.0 * detail::kPi * i / (n - 1));
    w[static_cast<std::size_t>(i)] = std::pow(raised, 0.85);
  }
  return w;
}

namespace detail {

// In-place iterative radix-2 Cooley-Tukey; length must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  require(n > 0 && (n & (n - 1)) == 0, "fft_radix2: length must be a power of two, got ", n);
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

// Triangular filters with centers equally spaced in mel between low_hz and
// high_hz. Row k holds filter k's weight for each FFT bin 0..n_bins-1,
// where the n_bins bins span DC through Nyquist (so the FFT length was
// 2*(n_bins-1)).
inline std::vector<std::vector<double>> mel_filterbank(int n_bins, int sample_rate,
                                                       int n_mels = kNumMelBins,
                                                       double low_hz = kMelLowHz,
                                                       double high_hz = 0.0) {
  if (high_hz == 0.0) high_hz = sample_rate / 2.0;
  require(n_bins >= 2, "mel_filterbank: need at least 2 bins");
  require(low_hz >= 0.0 && low_hz < high_hz, "mel_filterbank: need 0 <= low < high, got low ",
          low_hz, " high ", high_hz);
  require(high_hz <= sample_rate / 2.0, "mel_filterbank: high cutoff ", high_hz,
          " above Nyquist ", sample_rate / 2.0);

  const double mel_low = hz_to_mel(low_hz);
  const double mel_high = hz_to_mel(high_hz);
  const double mel_delta = (mel_high - mel_low) / (n_mels + 1);
  const double bin_width = static_cast<double>(sample_rate) / (2 * (n_bins - 1));

  std::vector<std::vector<double>> banks(static_cast<std::size_t>(n_mels));
  for (int k = 0; k < n_mels; ++k) {
    const double left = mel_low + k * mel_delta;
    const double center = mel_low + (k + 1) * mel_delta;
    const double right = mel_low + (k + 2) * mel_delta;
    std::vector<double>& row = banks[static_cast<std::size_t>(k)];
    row.assign(static_cast<std::size_t>(n_bins), 0.0);
    double total = 0.0;
    for (int b = 0; b < n_bins; ++b) {
      const double mel = hz_to_mel(b * bin_width);
      double w = 0.0;
      if (mel > left && mel < right)
        w = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      row[static_cast<std::size_t>(b)] = w;
      total += w;
    }
    require(total > 0.0, "mel_filterbank: filter ", k,
            " covers no FFT bin; too many mel bins for ", n_bins, " bins");
  }
  return banks;
}

// Frame count under snip-edges framing.
inline std::int64_t num_frames(std::int64_t n_samples, int sample_rate) {
  const std::int64_t win = static_cast<std::int64_t>(sample_rate) * kFrameLengthMs / 1000;
  const std::int64_t shift = static_cast<std::int64_t>(sample_rate) * kFrameShiftMs / 1000;
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / shift;
}

// Log mel filterbank features. Per frame: DC-offset removal, within-frame
// preemphasis (first sample preemphasized against itself), povey window,
// zero-padding to the next power of two, power spectrum, mel filterbank,
// natural log with the energy floored at kLogEnergyFloor. No dithering, so
// extraction is deterministic.
inline FeatureMatrix extract_mfb(const AudioClip& clip) {
  require(clip.sample_rate > 0, "extract_mfb: clip has no sample rate");
  const auto win = static_cast<std::size_t>(clip.sample_rate) * kFrameLengthMs / 1000;
  const auto shift = static_cast<std::size_t>(clip.sample_rate) * kFrameShiftMs / 1000;
  require(clip.samples.size() >= win, "extract_mfb: clip has ", clip.samples.size(),
          " samples but one ", kFrameLengthMs, " ms window needs ", win);

  const std::size_t n_fft = detail::next_pow2(win);
  const std::size_t n_bins = n_fft / 2 + 1;
  const std::vector<double> window = povey_window(static_cast<int>(win));
  const std::vector<std::vector<double>> banks =
      mel_filterbank(static_cast<int>(n_bins), clip.sample_rate);

  FeatureMatrix out;
  out.rows = num_frames(static_cast<std::int64_t>(clip.samples.size()), clip.sample_rate);
  out.cols = kNumMelBins;
  out.sample_rate = clip.sample_rate;
  out.values.resize(static_cast<std::size_t>(out.rows * out.cols));

  std::vector<double> frame(win);
  std::vector<std::complex<double>> spectrum(n_fft);
  std::vector<double> power(n_bins);
  for (std::int64_t t = 0; t < out.rows; ++t) {
    const double* src = clip.samples.data() + static_cast<std::size_t>(t) * shift;
    double mean = 0.0;
    for (std::size_t i = 0; i < win; ++i) mean += src[i];
    mean /= static_cast<double>(win);
    for (std::size_t i = 0; i < win; ++i) frame[i] = src[i] - mean;
    for (std::size_t i = win; i-- > 1;) frame[i] -= kPreemphasis * frame[i - 1];
    frame[0] -= kPreemphasis * frame[0];
    for (std::size_t i = 0; i < win; ++i) frame[i] *= window[i];

    for (std::size_t i = 0; i < n_fft; ++i)
      spectrum[i] = i < win ? std::complex<double>(frame[i], 0.0) : std::complex<double>(0.0, 0.0);
    detail::fft_radix2(spectrum);
    for (std::size_t b = 0; b < n_bins; ++b) power[b] = std::norm(spectrum[b]);

    float* row = out.values.data() + static_cast<std::size_t>(t * out.cols);
    for (int k = 0; k < kNumMelBins; ++k) {
      const std::vector<double>& bank = banks[static_cast<std::size_t>(k)];
      double energy = 0.0;
      for (std::size_t b = 0; b < n_bins; ++b) energy += bank[b] * power[b];
      row[k] = static_cast<float>(std::log(std::max(energy, kLogEnergyFloor)));
    }
  }
  return out;
}

// Cache layout: "MFB1" magic, little-endian uint32 rows and cols, then
// rows*cols little-endian 32-bit floats, row-major.
inline void cache_write(const FeatureMatrix& m, const std::string& path) {
  require(m.rows > 0 && m.cols > 0, "cache_write: empty matrix");
  require(static_cast<std::int64_t>(m.values.size()) == m.rows * m.cols,
          "cache_write: value count does not match dims");
  std::vector<unsigned char> out;
  out.insert(out.end(), {'M', 'F', 'B', '1'});
  detail::append_u32le(out, static_cast<std::uint32_t>(m.rows));
  detail::append_u32le(out, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    detail::append_u32le(out, u);
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

inline FeatureMatrix cache_read(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::slurp(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "MFB1", 4) != 0)
    throw IoError(detail::str_cat(path, ": bad magic; not an MFB1 cache"));
  const std::uint32_t rows = detail::read_u32le(&bytes[4]);
  const std::uint32_t cols = detail::read_u32le(&bytes[8]);
  const std::size_t want = 12 + static_cast<std::size_t>(rows) * cols * 4;
  if (bytes.size() != want)
    throw IoError(detail::str_cat(path, ": header says ", rows, "x", cols, " (", want,
                                  " bytes) but file has ", bytes.size()));
  FeatureMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.resize(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::uint32_t u = detail::read_u32le(&bytes[12 + i * 4]);
    float v;
    std::memcpy(&v, &u, 4);
    m.values[i] = v;
  }
  return m;
}

}  // namespace domgen
