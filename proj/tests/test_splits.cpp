// tests/test_splits.cpp

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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "l2prof/common.hpp"
#include "l2prof/splits.hpp"
#include "oracles.hpp"

using namespace l2prof;

namespace {

/// Speakers with random gender/level and one recording each.
Manifest population(std::size_t n, Rng& rng, const LevelScheme& scheme = LevelScheme::anglish()) {
  Manifest m;
  m.scheme = scheme;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "s" + std::to_string(1000 + i);
    m.speakers.push_back({id, rng.bounded(2) ? Gender::male : Gender::female,
                          scheme.labels[rng.bounded(scheme.labels.size())], m.corpus});
    Recording r;
    r.id = id + "_r";
    r.speaker_id = id;
    r.path = r.id + ".wav";
    r.duration_s = 20.0 + rng.uniform(0, 200);
    m.items.push_back(r);
  }
  return m;
}

/// Essays over raw levels 1..16 with skewed stratum sizes.
Manifest essays(Rng& rng, std::size_t per_learner) {
  Manifest m;
  m.corpus = CorpusKind::efcamdat;
  m.scheme = LevelScheme::cefr();
  std::size_t next = 0;
  for (int lvl = 1; lvl <= 16; ++lvl) {
    const std::size_t n = 60 + rng.bounded(lvl <= 6 ? 900 : 250);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string learner = "l" + std::to_string(next / per_learner);
      if (next % per_learner == 0) m.speakers.push_back({learner, Gender::female, std::nullopt, m.corpus});
      Essay e;
      e.id = "e" + std::to_string(next++);
      e.learner_id = learner;
      e.text = "text";
      e.raw_level = lvl;
      e.cefr_level = map_raw_level_to_cefr(lvl);
      m.items.push_back(e);
    }
  }
  return m;
}

IdSet all_speakers(const Manifest& m) {
  IdSet s;
  for (const auto& x : m.speakers) s.insert(x.id);
  return s;
}

}  // namespace

TEST(Kfold, PropertiesOnRandomPopulations) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = std::vector<int>{3, 5, 10}[rng.bounded(3)];
    const auto m = population(static_cast<std::size_t>(k) + rng.bounded(90), rng);
    const auto fs = stratified_kfold(m, k, 77 + trial);
    ASSERT_EQ(fs.folds.size(), static_cast<std::size_t>(k));
    const IdSet pool = all_speakers(m);
    std::map<std::string, std::string> stratum;
    std::map<std::string, int> stratum_size;
    for (const auto& s : m.speakers) ++stratum_size[stratum[s.id] = gender_level_stratum(s)];
    IdSet seen;
    for (const auto& f : fs.folds) {
      IdSet both;
      std::set_intersection(f.train.begin(), f.train.end(), f.val.begin(), f.val.end(),
                            std::inserter(both, both.end()));
      EXPECT_TRUE(both.empty());
      IdSet uni = f.train;
      uni.insert(f.val.begin(), f.val.end());
      EXPECT_EQ(uni, pool);
      for (const auto& v : f.val) EXPECT_TRUE(seen.insert(v).second) << "speaker in two val folds";
      std::map<std::string, int> count;
      for (const auto& v : f.val) ++count[stratum[v]];
      for (const auto& [st, n] : stratum_size)
        EXPECT_LE(std::abs(count[st] - double(n) / k), 1.0) << st;
    }
    EXPECT_EQ(seen, pool);
  }
}

TEST(Kfold, DeterministicAndSeedSensitive) {
  Rng rng(2);
  const auto m = population(60, rng);
  EXPECT_EQ(stratified_kfold(m, 5, 1).to_json(), stratified_kfold(m, 5, 1).to_json());
  EXPECT_NE(stratified_kfold(m, 5, 1).to_json(), stratified_kfold(m, 5, 2).to_json());
  EXPECT_THROW(stratified_kfold(m, 1, 1), InvalidArgument);
  EXPECT_THROW(stratified_kfold(population(3, rng), 5, 1), InvalidArgument);
}

TEST(Holdout, OneSpeakerPerLevelGenderCell) {
  Rng rng(3);
  auto m = population(80, rng);
  const auto test = fixed_test_holdout(m, 5);
  ASSERT_EQ(test.size(), 6u);
  std::set<std::string> cells;
  for (const auto& id : test) cells.insert(gender_level_stratum(*m.find_speaker(id)));
  EXPECT_EQ(cells.size(), 6u);
  const auto fs = stratified_kfold(m, 10, 5, test);
  EXPECT_EQ(fs.held_out_test, test);
  for (const auto& f : fs.folds)
    for (const auto& id : test) EXPECT_FALSE(f.train.count(id) || f.val.count(id));
  std::erase_if(m.speakers, [](const Speaker& s) { return s.gender == Gender::male && s.level == "FR2"; });
  EXPECT_THROW(fixed_test_holdout(m, 5), InvalidArgument);
}

TEST(LargestRemainder, MatchesIntegerOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.bounded(16);
    std::vector<std::size_t> w(n);
    std::vector<double> wd(n);
    for (std::size_t i = 0; i < n; ++i) wd[i] = double(w[i] = rng.bounded(trial % 3 == 0 ? 4 : 3000));
    if (std::accumulate(w.begin(), w.end(), std::size_t(0)) == 0) w[0] = 1, wd[0] = 1;
    const std::size_t total = rng.bounded(2500);
    EXPECT_EQ(largest_remainder(wd, total), oracle::largest_remainder(w, total)) << trial;
  }
}

TEST(LargestRemainder, HandWorkedCase) {
  // 10 over {1,1,1}: 3 each, one left goes to index 0.
  EXPECT_EQ(largest_remainder({1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(largest_remainder({5, 3, 2}, 7), (std::vector<std::size_t>{4, 2, 1}));
  EXPECT_THROW(largest_remainder({0, 0}, 3), InvalidArgument);
}

TEST(Subset, AllocationEqualsLargestRemainderOracle) {
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(10 + trial);
    const auto m = essays(rng, 1);
    std::vector<std::size_t> sizes(16, 0);
    std::map<std::string, int> level_of;
    for (const auto& it : m.items) {
      const auto& e = std::get<Essay>(it);
      ++sizes[static_cast<std::size_t>(e.raw_level - 1)];
      level_of[e.id] = e.raw_level;
    }
    const auto split = stratified_subset(m, {}, 100 + trial, Granularity::item);
    const std::vector<std::pair<const IdSet*, std::size_t>> parts{{&split.train, 2000}, {&split.val, 200}, {&split.test, 200}};
    for (const auto& [ids, total] : parts) {
      EXPECT_EQ(ids->size(), total);
      std::vector<std::size_t> got(16, 0);
      for (const auto& id : *ids) ++got[static_cast<std::size_t>(level_of[id] - 1)];
      EXPECT_EQ(got, oracle::largest_remainder(sizes, total));
    }
    EXPECT_TRUE(audit_leakage(split, m).clean());
  }
}

TEST(Subset, SpeakerGranularityKeepsLearnersTogether) {
  Rng rng(20);
  const auto m = essays(rng, 3);
  const auto split = stratified_subset(m, {}, 7, Granularity::speaker);
  EXPECT_TRUE(audit_leakage(split, m).clean());
  EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), 2400u);
}

TEST(Subset, TooFewEssaysIsAnError) {
  Rng rng(21);
  auto m = essays(rng, 1);
  m.items.resize(2000);
  EXPECT_THROW(stratified_subset(m, {}, 1, Granularity::item), InvalidArgument);
}

TEST(Duration, BestSubsetIsTheMinimumOverItsCandidates) {
  Rng rng(30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DurationEntry> pool;
    const std::size_t n = 5 + rng.bounded(25);
    for (std::size_t i = 0; i < n; ++i) pool.push_back({"p" + std::to_string(i), rng.uniform(10, 300)});
    const std::size_t k = 1 + rng.bounded(std::min<std::size_t>(n - 1, 12));
    const double target = rng.uniform(50, 1500);
    const auto best = best_duration_subset(pool, k, target, 500, trial);
    double brute = INFINITY;
    for (const auto& c : draw_candidate_subsets(n, k, 500, trial)) {
      double s = 0;
      for (auto i : c) s += pool[i].duration_s;
      brute = std::min(brute, std::abs(s - target));
    }
    EXPECT_EQ(std::abs(best.total_s - target), brute);
    EXPECT_EQ(best.members.size(), k);
  }
}

TEST(Duration, SmallPoolsReachTheExhaustiveOptimum) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DurationEntry> pool;
    std::vector<double> d;
    const std::size_t n = 4 + rng.bounded(7);  // C(10, 3) = 120 << budget
    for (std::size_t i = 0; i < n; ++i) {
      d.push_back(rng.uniform(10, 300));
      pool.push_back({"p" + std::to_string(i), d.back()});
    }
    const double target = rng.uniform(30, 900);
    const auto best = best_duration_subset(pool, 3, target, kDurationSearchBudget, trial);
    EXPECT_NEAR(std::abs(best.total_s - target), oracle::exhaustive_best_deviation(d, 3, target), 1e-9);
  }
}

TEST(Duration, PartitionOnSmallPopulationsIsOptimalPerLevel) {
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    Manifest m;
    m.scheme = LevelScheme::private_levels();
    m.corpus = CorpusKind::private_;
    std::map<std::string, double> dur;
    for (const auto& level : m.scheme.labels)
      for (int i = 0; i < 10; ++i) {
        const std::string id = level + "_" + std::to_string(i);
        m.speakers.push_back({id, Gender::female, level, m.corpus});
        Recording r;
        r.id = id + "_r";
        r.speaker_id = id;
        r.path = r.id + ".wav";
        r.duration_s = dur[id] = rng.uniform(30, 600);
        m.items.push_back(r);
      }
    DurationMatchOptions o;
    o.per_level_count = 3;
    o.reference_level = "L5";
    o.fraction = 0.3;
    const auto split = duration_matched_partition(m, o, trial);
    EXPECT_TRUE(audit_leakage(split, m).clean());
    double ref = 0;
    for (const auto& s : m.speakers)
      if (s.level == "L5") ref += dur[s.id];
    const double target = 0.3 * ref;
    for (const auto& level : m.scheme.labels) {
      std::vector<std::string> pool;
      for (const auto& s : m.speakers)
        if (s.level == level) pool.push_back(s.id);
      auto pick_total = [&](const IdSet& ids, std::vector<std::string>& rest) {
        double t = 0;
        std::size_t c = 0;
        std::vector<std::string> left;
        for (const auto& id : rest)
          if (ids.count(id)) t += dur[id], ++c;
          else left.push_back(id);
        EXPECT_EQ(c, 3u) << level;
        rest = left;
        return t;
      };
      auto durations = [&](const std::vector<std::string>& ids) {
        std::vector<double> v;
        for (const auto& id : ids) v.push_back(dur[id]);
        return v;
      };
      const auto before_val = pool;
      const double val_t = pick_total(split.val, pool);
      EXPECT_NEAR(std::abs(val_t - target), oracle::exhaustive_best_deviation(durations(before_val), 3, target), 1e-9);
      const auto before_test = pool;
      const double test_t = pick_total(split.test, pool);
      EXPECT_NEAR(std::abs(test_t - target), oracle::exhaustive_best_deviation(durations(before_test), 3, target), 1e-9);
      for (const auto& id : pool) EXPECT_TRUE(split.train.count(id));
    }
  }
}

TEST(Leakage, PlantedSpeakerIsNamed) {
  Rng rng(40);
  const auto m = population(12, rng);
  SplitAssignment s;
  const auto& ids = m.speakers;
  for (std::size_t i = 0; i < ids.size(); ++i) (i < 8 ? s.train : i < 10 ? s.val : s.test).insert(ids[i].id);
  EXPECT_TRUE(audit_leakage(s, m).clean());
  s.test.insert(ids[0].id);
  const auto r = audit_leakage(s, m);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].speaker, ids[0].id);
  EXPECT_EQ(r.violations[0].partitions, (std::vector<std::string>{"test", "train"}));
  EXPECT_NE(r.to_string().find(ids[0].id), std::string::npos);
}

TEST(Leakage, ItemIdsResolveToTheirSpeaker) {
  Rng rng(41);
  auto m = population(4, rng);
  Recording extra = std::get<Recording>(m.items[0]);
  extra.id = "second_take";
  m.items.push_back(extra);
  SplitAssignment s;
  s.granularity = Granularity::speaker;
  s.train = {std::get<Recording>(m.items[0]).id};
  s.test = {"second_take"};
  const auto r = audit_leakage(s, m);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].speaker, m.speakers[0].id);
}

TEST(SplitFile, JsonRoundTripAndHash) {
  SplitAssignment s;
  s.train = {"a", "b"};
  s.val = {"c"};
  s.test = {"d"};
  s.seed = 9;
  s.policy = {{"protocol", "file"}};
  const auto path = (std::filesystem::temp_directory_path() / "l2prof_split.json").string();
  save_split(s, path);
  const auto back = load_split(path);
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.hash(), s.hash());
  s.test.insert("e");
  EXPECT_NE(back.hash(), s.hash());
  write_file(path, "{\"seed\": 1}");
  EXPECT_THROW(load_split(path), ParseError);
  std::filesystem::remove(path);
}
