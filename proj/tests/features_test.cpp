// tests/features_test.cpp

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

#include "domgen/features.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "domgen/common.hpp"

namespace domgen {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(PoveyWindow, EndpointsAndPeak) {
  const std::vector<double> w = povey_window(9);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[8], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 1.0);
}

TEST(PoveyWindow, QuarterPointValue) {
  const std::vector<double> w = povey_window(5);
  EXPECT_NEAR(w[1], 0.5547850, 1e-6);  // 0.5^0.85
  EXPECT_NEAR(w[3], 0.5547850, 1e-6);
}

TEST(PoveyWindow, RejectsDegenerateLength) { EXPECT_THROW(povey_window(1), ValueError); }

TEST(MelScale, PinnedValues) {
  EXPECT_DOUBLE_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 781.1768, 1e-3);  // 1127 ln 2
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(MelFilterbank, WeightsFormPartitionInInterior) {
  const int n_bins = 257;  // 512-point FFT
  const int rate = 16000;
  const auto banks = mel_filterbank(n_bins, rate);
  ASSERT_EQ(banks.size(), 40u);

  const double bin_width = rate / 512.0;
  const double mel_low = hz_to_mel(kMelLowHz);
  const double mel_delta = (hz_to_mel(rate / 2.0) - mel_low) / 41.0;
  const double first_center = mel_to_hz(mel_low + mel_delta);
  const double last_center = mel_to_hz(mel_low + 40.0 * mel_delta);

  for (const auto& row : banks) {
    double total = 0.0;
    for (double w : row) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      total += w;
    }
    EXPECT_GT(total, 0.0);
  }
  for (int b = 0; b < n_bins; ++b) {
    const double f = b * bin_width;
    if (f <= first_center || f >= last_center) continue;
    double coverage = 0.0;
    for (const auto& row : banks) coverage += row[static_cast<std::size_t>(b)];
    EXPECT_GT(coverage, 0.0) << "bin " << b;
    EXPECT_LE(coverage, 1.0 + 1e-6) << "bin " << b;
  }
}

TEST(MelFilterbank, TooManyFiltersForBinCount) {
  EXPECT_THROW(mel_filterbank(9, 16000, 40), ValueError);
}

TEST(NumFrames, PinnedAndFormula) {
  EXPECT_EQ(num_frames(16000, 16000), 98);  // 1 + (16000-400)/160
  EXPECT_EQ(num_frames(400, 16000), 1);
  EXPECT_EQ(num_frames(399, 16000), 0);
  for (int rate : {8000, 16000}) {
    const std::int64_t win = rate * 25 / 1000, shift = rate * 10 / 1000;
    for (std::int64_t n : {win, win + 1, win + shift - 1, win + shift, 3 * win + 7,
                           static_cast<std::int64_t>(rate)}) {
      EXPECT_EQ(num_frames(n, rate), 1 + (n - win) / shift) << n << "@" << rate;
    }
  }
}

AudioClip noise_clip(int rate, double seconds, double amp, std::uint64_t seed) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(static_cast<std::size_t>(rate * seconds));
  for (double& s : clip.samples) s = amp * rng.uniform(-1.0, 1.0);
  return clip;
}

TEST(ExtractMfb, ShapeAndFiniteness) {
  AudioClip clip = noise_clip(16000, 1.0, 0.5, 7);
  FeatureMatrix m = extract_mfb(clip);
  EXPECT_EQ(m.rows, 98);
  EXPECT_EQ(m.cols, 40);
  EXPECT_EQ(m.sample_rate, 16000);
  for (float v : m.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(ExtractMfb, TooShortClipNamesMinimum) {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(399, 0.1);
  try {
    extract_mfb(clip);
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("400"), std::string::npos) << e.what();
  }
}

TEST(ExtractMfb, DigitalSilenceHitsLogFloorExactly) {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(8000, 0.0);
  FeatureMatrix m = extract_mfb(clip);
  const float floor_value = static_cast<float>(std::log(kLogEnergyFloor));
  for (float v : m.values) EXPECT_EQ(v, floor_value);
}

TEST(ExtractMfb, DoublingAmplitudeAddsTwoLogTwo) {
  AudioClip clip = noise_clip(16000, 0.5, 0.25, 21);
  AudioClip louder = clip;
  for (double& s : louder.samples) s *= 2.0;
  FeatureMatrix a = extract_mfb(clip);
  FeatureMatrix b = extract_mfb(louder);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i)
    EXPECT_NEAR(b.values[i] - a.values[i], 2.0 * std::log(2.0), 1e-5);
}

TEST(ExtractMfb, ShiftByOneFrameDropsFirstFrame) {
  AudioClip clip = noise_clip(16000, 0.4, 0.5, 33);
  AudioClip shifted;
  shifted.sample_rate = clip.sample_rate;
  shifted.samples.assign(clip.samples.begin() + 160, clip.samples.end());
  FeatureMatrix full = extract_mfb(clip);
  FeatureMatrix tail = extract_mfb(shifted);
  ASSERT_EQ(tail.rows, full.rows - 1);
  for (std::int64_t t = 0; t < tail.rows; ++t)
    for (std::int64_t c = 0; c < 40; ++c)
      EXPECT_NEAR(tail.at(t, c), full.at(t + 1, c), 1e-5);
}

TEST(ExtractMfb, ToneAtEachFilterCenterWinsItsFilter) {
  const int rate = 8000;
  const double mel_low = hz_to_mel(kMelLowHz);
  const double mel_delta = (hz_to_mel(rate / 2.0) - mel_low) / 41.0;
  for (int k = 0; k < 40; ++k) {
    const double f = mel_to_hz(mel_low + (k + 1) * mel_delta);
    AudioClip clip;
    clip.sample_rate = rate;
    clip.samples.resize(static_cast<std::size_t>(rate));
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
      clip.samples[i] = 0.7 * std::sin(2.0 * detail::kPi * f * static_cast<double>(i) / rate);
    FeatureMatrix m = extract_mfb(clip);
    double best = -1e300;
    int best_filter = -1;
    for (int c = 0; c < 40; ++c) {
      double acc = 0.0;
      for (std::int64_t t = 5; t < m.rows - 5; ++t) acc += m.at(t, c);
      if (acc > best) {
        best = acc;
        best_filter = c;
      }
    }
    EXPECT_EQ(best_filter, k) << "tone at " << f << " Hz";
  }
}

TEST(Cache, RoundTripIsBitExact) {
  AudioClip clip = noise_clip(8000, 0.3, 0.4, 55);
  FeatureMatrix m = extract_mfb(clip);
  const std::string path = temp_path("mfb_roundtrip.bin");
  cache_write(m, path);
  FeatureMatrix back = cache_read(path);
  EXPECT_EQ(back.rows, m.rows);
  EXPECT_EQ(back.cols, m.cols);
  ASSERT_EQ(back.values.size(), m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i)
    EXPECT_EQ(std::memcmp(&back.values[i], &m.values[i], 4), 0) << "cell " << i;
  std::remove(path.c_str());
}

TEST(Cache, BadMagicRejected) {
  const std::string path = temp_path("mfb_badmagic.bin");
  std::ofstream(path, std::ios::binary) << "NOPE\x01\x00\x00\x00\x01\x00\x00\x00xxxx";
  EXPECT_THROW(cache_read(path), IoError);
  std::remove(path.c_str());
}

TEST(Cache, TruncatedPayloadRejected) {
  AudioClip clip = noise_clip(8000, 0.1, 0.4, 56);
  FeatureMatrix m = extract_mfb(clip);
  const std::string path = temp_path("mfb_trunc.bin");
  cache_write(m, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(cache_read(path), IoError);
  std::remove(path.c_str());
}

}  // namespace
}  // namespace domgen
