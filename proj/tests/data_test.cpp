// tests/data_test.cpp

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

#include "domgen/data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace domgen {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(BinRatings, MixedRatingsGiveFractions) {
  const auto label = bin_ratings({3, 4, 5}, 3);
  ASSERT_TRUE(label.has_value());
  EXPECT_DOUBLE_EQ(label->p[0], 0.0);
  EXPECT_NEAR(label->p[1], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(label->p[2], 2.0 / 3.0, 1e-9);
  EXPECT_EQ(label->majority(), 2);
}

TEST(BinRatings, AllBelowMidpoint) {
  const auto label = bin_ratings({1, 2}, 3);
  ASSERT_TRUE(label.has_value());
  EXPECT_DOUBLE_EQ(label->p[0], 1.0);
  EXPECT_EQ(label->majority(), 0);
}

TEST(BinRatings, TieIsRejected) {
  EXPECT_FALSE(bin_ratings({2, 4}, 3).has_value());        // 1-0-1
  EXPECT_FALSE(bin_ratings({1, 1, 3, 5, 5}, 3).has_value());  // 2-1-2
  EXPECT_FALSE(bin_ratings({1, 3, 5}, 3).has_value());     // 1-1-1
}

TEST(BinRatings, ExactMidpointCountsAsMid) {
  const auto label = bin_ratings({5, 5, 5}, 5);
  ASSERT_TRUE(label.has_value());
  EXPECT_DOUBLE_EQ(label->p[1], 1.0);
  EXPECT_EQ(label->majority(), 1);
}

TEST(BinRatings, EmptyRatingsThrow) { EXPECT_THROW(bin_ratings({}, 3), ValueError); }

TEST(BinRatings, ConstructedLabelsSumToOneWithUniqueMajority) {
  Rng rng(404);
  int accepted = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ratings;
    const int n = rng.uniform_int(1, 7);
    for (int i = 0; i < n; ++i) ratings.push_back(rng.uniform_int(1, 5));
    const auto label = bin_ratings(ratings, 3);
    if (!label) continue;
    ++accepted;
    EXPECT_NEAR(label->p[0] + label->p[1] + label->p[2], 1.0, 1e-9);
    const int m = label->majority();
    for (int k = 0; k < 3; ++k)
      if (k != m) EXPECT_LT(label->p[static_cast<std::size_t>(k)], label->p[static_cast<std::size_t>(m)]);
  }
  EXPECT_GT(accepted, 100);
}

SoftLabel hard_label(int k) {
  SoftLabel l;
  l.p[static_cast<std::size_t>(k)] = 1.0;
  return l;
}

std::vector<SoftLabel> labels_with_counts(std::int64_t low, std::int64_t mid, std::int64_t high) {
  std::vector<SoftLabel> out;
  for (std::int64_t i = 0; i < low; ++i) out.push_back(hard_label(0));
  for (std::int64_t i = 0; i < mid; ++i) out.push_back(hard_label(1));
  for (std::int64_t i = 0; i < high; ++i) out.push_back(hard_label(2));
  return out;
}

TEST(ClassWeights, BalancedCountsGiveUnitWeights) {
  const auto w = class_weights(labels_with_counts(4, 4, 4));
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  EXPECT_DOUBLE_EQ(w[2], 1.0);
}

TEST(ClassWeights, CorpusScaleCounts) {
  const auto w = class_weights(labels_with_counts(3181, 1641, 1994));
  EXPECT_NEAR(w[0], 0.7142, 1e-4);
  EXPECT_NEAR(w[1], 1.3845, 1e-4);
  EXPECT_NEAR(w[2], 1.1394, 1e-4);
}

TEST(ClassWeights, SmallCounts) {
  const auto w = class_weights(labels_with_counts(2, 1, 1));
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[2], 4.0 / 3.0, 1e-12);
}

TEST(ClassWeights, WeightedCountsRecoverTotal) {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    const std::int64_t a = rng.uniform_int(1, 500), b = rng.uniform_int(1, 500),
                       c = rng.uniform_int(1, 500);
    const auto w = class_weights(labels_with_counts(a, b, c));
    const double n = static_cast<double>(a + b + c);
    EXPECT_NEAR(w[0] * a + w[1] * b + w[2] * c, n, 1e-9 * n);
  }
}

TEST(ClassWeights, EmptyBinIsAnError) {
  EXPECT_THROW(class_weights(labels_with_counts(3, 0, 2)), ValueError);
}

std::vector<std::string> make_ids(const std::string& prefix, int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

TEST(SplitExp1, EightyTwentyAndFullTarTest) {
  const auto src = make_ids("s", 100);
  const auto tar = make_ids("t", 57);
  FoldPlan plan = split_exp1(src, tar, 7);
  EXPECT_EQ(plan.train_src.size(), 80u);
  EXPECT_EQ(plan.val.size(), 20u);
  EXPECT_TRUE(plan.val_from_src);
  EXPECT_TRUE(plan.train_tar_labeled.empty());

  std::set<std::string> test_set(plan.test.begin(), plan.test.end());
  EXPECT_EQ(test_set.size(), tar.size());
  for (const auto& id : tar) EXPECT_TRUE(test_set.count(id)) << id;

  std::set<std::string> train_val(plan.train_src.begin(), plan.train_src.end());
  train_val.insert(plan.val.begin(), plan.val.end());
  EXPECT_EQ(train_val.size(), 100u);
}

TEST(SplitExp1, DeterministicInSeedAndInputOrder) {
  auto src = make_ids("s", 40);
  const auto tar = make_ids("t", 10);
  FoldPlan a = split_exp1(src, tar, 99);
  std::reverse(src.begin(), src.end());
  FoldPlan b = split_exp1(src, tar, 99);
  EXPECT_EQ(a.train_src, b.train_src);
  EXPECT_EQ(a.val, b.val);
  FoldPlan c = split_exp1(src, tar, 100);
  EXPECT_NE(a.train_src, c.train_src);
}

TEST(SplitExp1, ValAndTestDisjoint) {
  FoldPlan plan = split_exp1(make_ids("s", 25), make_ids("t", 30), 3);
  std::set<std::string> val(plan.val.begin(), plan.val.end());
  for (const auto& id : plan.test) EXPECT_FALSE(val.count(id));
}

TEST(SplitExp1, TinySourceRejected) {
  EXPECT_THROW(split_exp1(make_ids("s", 4), make_ids("t", 4), 1), ValueError);
}

TEST(SplitFig4, BudgetTwoHundredGives160Train40Val) {
  FoldPlan plan = split_fig4(make_ids("s", 50), make_ids("t", 600), 200, 1, 11);
  EXPECT_EQ(plan.train_tar_labeled.size(), 160u);
  EXPECT_EQ(plan.val.size(), 40u);
  EXPECT_FALSE(plan.val_from_src);
  EXPECT_EQ(plan.train_src.size(), 50u);
  EXPECT_EQ(plan.test.size(), 300u);
  // unlabeled pool = test half + labeled-TAR train portion
  EXPECT_EQ(plan.unlabeled_tar_pool.size(), 300u + 160u);
}

TEST(SplitFig4, ZeroBudgetFallsBackToSrcValidation) {
  FoldPlan plan = split_fig4(make_ids("s", 50), make_ids("t", 600), 0, 2, 11);
  EXPECT_TRUE(plan.train_tar_labeled.empty());
  EXPECT_TRUE(plan.val_from_src);
  EXPECT_EQ(plan.train_src.size(), 40u);
  EXPECT_EQ(plan.val.size(), 10u);
  EXPECT_EQ(plan.unlabeled_tar_pool.size(), plan.test.size());
}

TEST(SplitFig4, HalfSwapCoversEveryTarIdExactlyOnce) {
  const auto tar = make_ids("t", 601);  // odd size
  FoldPlan h1 = split_fig4(make_ids("s", 20), tar, 100, 1, 5);
  FoldPlan h2 = split_fig4(make_ids("s", 20), tar, 100, 2, 5);
  std::vector<std::string> combined = h1.test;
  combined.insert(combined.end(), h2.test.begin(), h2.test.end());
  std::sort(combined.begin(), combined.end());
  std::vector<std::string> want = tar;
  std::sort(want.begin(), want.end());
  EXPECT_EQ(combined, want);
}

TEST(SplitFig4, TestHalfIndependentOfBudget) {
  const auto src = make_ids("s", 20);
  const auto tar = make_ids("t", 400);
  FoldPlan a = split_fig4(src, tar, 0, 1, 9);
  FoldPlan b = split_fig4(src, tar, 80, 1, 9);
  FoldPlan c = split_fig4(src, tar, 160, 1, 9);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(b.test, c.test);
  // budgets nest: the 80-budget picks are a prefix of the 160-budget picks
  for (std::size_t i = 0; i < b.train_tar_labeled.size(); ++i)
    EXPECT_EQ(b.train_tar_labeled[i], c.train_tar_labeled[i]);
}

TEST(SplitFig4, LabeledIdsComeFromNonTestHalf) {
  FoldPlan plan = split_fig4(make_ids("s", 20), make_ids("t", 100), 30, 1, 13);
  std::set<std::string> test(plan.test.begin(), plan.test.end());
  for (const auto& id : plan.train_tar_labeled) EXPECT_FALSE(test.count(id));
  for (const auto& id : plan.val) EXPECT_FALSE(test.count(id));
}

TEST(SplitFig4, OverBudgetRejected) {
  EXPECT_THROW(split_fig4(make_ids("s", 20), make_ids("t", 100), 51, 1, 1), ValueError);
}

Utterance make_utt(const std::string& id, int dataset, std::int64_t t, double fill,
                   int label_bin = -1) {
  Utterance u;
  u.id = id;
  u.dataset = dataset;
  u.subject = "subj";
  u.features = Tensor({kNumMelBins, t}, std::vector<double>(static_cast<std::size_t>(kNumMelBins * t), fill));
  if (label_bin >= 0) {
    u.labeled = true;
    u.label.p[static_cast<std::size_t>(label_bin)] = 1.0;
  }
  return u;
}

TEST(MakeBatch, PadsWithExactZeros) {
  Utterance a = make_utt("a", 0, 5, 1.5, 0);
  Utterance b = make_utt("b", 1, 9, 2.5, 2);
  Batch batch = make_batch({&a, &b}, true);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch.lengths, (std::vector<std::int64_t>{5, 9}));
  EXPECT_EQ(batch.features[0].shape(), (std::vector<std::int64_t>{kNumMelBins, 9}));
  for (std::int64_t c = 0; c < kNumMelBins; ++c) {
    for (std::int64_t t = 0; t < 9; ++t) {
      const double v = batch.features[0](c, t);
      if (t < 5)
        EXPECT_EQ(v, 1.5);
      else
        EXPECT_EQ(v, 0.0);
    }
  }
  EXPECT_EQ(batch.dataset_indices, (std::vector<int>{0, 1}));
  EXPECT_EQ(batch.labels[1].majority(), 2);
}

TEST(MakeBatch, MissingLabelIsAnError) {
  Utterance a = make_utt("a", 0, 5, 1.0);
  EXPECT_THROW(make_batch({&a}, true), ValueError);
}

TEST(EpochSampler, TwoBatchesPartitionSixtyFour) {
  EpochSampler sampler(64, 17);
  const auto b1 = sampler.next(32);
  const auto b2 = sampler.next(32);
  std::set<std::size_t> seen(b1.begin(), b1.end());
  seen.insert(b2.begin(), b2.end());
  EXPECT_EQ(seen.size(), 64u);
}

TEST(EpochSampler, ShortTailThenNewEpoch) {
  EpochSampler sampler(70, 17);
  EXPECT_EQ(sampler.next(32).size(), 32u);
  EXPECT_EQ(sampler.next(32).size(), 32u);
  EXPECT_EQ(sampler.next(32).size(), 6u);
  EXPECT_EQ(sampler.next(32).size(), 32u);
}

TEST(UniformSampler, SingletonPoolRepeats) {
  UniformSampler sampler(1, 23);
  const auto batch = sampler.next(8);
  ASSERT_EQ(batch.size(), 8u);
  for (std::size_t i : batch) EXPECT_EQ(i, 0u);
}

TEST(Manifest, RoundTrip) {
  std::vector<UtteranceRecord> records;
  UtteranceRecord a;
  a.id = "utt1";
  a.dataset = "alpha";
  a.subject = "s01";
  a.feature_path = "feats/utt1.mfb";
  a.ratings = {3, 4, 5};
  a.scale_midpoint = 3;
  records.push_back(a);
  UtteranceRecord b;
  b.id = "utt2";
  b.dataset = "beta";
  b.subject = "s02";
  b.audio_path = "wav/utt2.wav";
  records.push_back(b);

  const std::string path = temp_path("manifest.jsonl");
  write_manifest(records, path);
  const auto back = read_manifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "utt1");
  EXPECT_EQ(back[0].ratings, (std::vector<double>{3, 4, 5}));
  EXPECT_DOUBLE_EQ(back[0].scale_midpoint, 3.0);
  EXPECT_TRUE(back[0].labeled());
  EXPECT_EQ(back[1].audio_path, "wav/utt2.wav");
  EXPECT_FALSE(back[1].labeled());
  std::remove(path.c_str());
}

TEST(Manifest, ParseErrorNamesLine) {
  const std::string path = temp_path("manifest_bad.jsonl");
  std::ofstream(path) << R"({"id":"a","dataset":"d","subject":"s","feature_path":"f"})" << "\n"
                      << "this is not json\n";
  try {
    read_manifest(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::remove(path.c_str());
}

TEST(Manifest, MissingPathsRejected) {
  const std::string path = temp_path("manifest_nopath.jsonl");
  std::ofstream(path) << R"({"id":"a","dataset":"d","subject":"s"})" << "\n";
  EXPECT_THROW(read_manifest(path), ValueError);
  std::remove(path.c_str());
}

TEST(LabelHistograms, CountsPerDataset) {
  std::vector<UtteranceRecord> records;
  auto add = [&](const std::string& ds, std::vector<double> ratings) {
    UtteranceRecord r;
    r.id = "u" + std::to_string(records.size());
    r.dataset = ds;
    r.subject = "s";
    r.feature_path = "f";
    r.ratings = std::move(ratings);
    r.scale_midpoint = 3;
    records.push_back(r);
  };
  add("alpha", {1, 2});     // low
  add("alpha", {4, 5});     // high
  add("alpha", {2, 4});     // tie -> rejected
  add("alpha", {});         // unlabeled
  add("beta", {3});         // mid

  const auto hist = label_histograms(records);
  ASSERT_EQ(hist.size(), 2u);
  EXPECT_EQ(hist.at("alpha").bins[0], 1);
  EXPECT_EQ(hist.at("alpha").bins[2], 1);
  EXPECT_EQ(hist.at("alpha").rejected, 1);
  EXPECT_EQ(hist.at("alpha").unlabeled, 1);
  EXPECT_EQ(hist.at("beta").bins[1], 1);
}

}  // namespace
}  // namespace domgen
