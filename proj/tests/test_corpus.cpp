// tests/test_corpus.cpp

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

#include <filesystem>

#include "l2prof/common.hpp"
#include "l2prof/corpus.hpp"
#include "l2prof/tokenizer.hpp"

using namespace l2prof;

namespace {

const char* kSpeech =
    R"({"type":"header","corpus":"anglish","scheme":["NES","FR1","FR2"],"scheme_name":"anglish"}
{"type":"speaker","id":"a","gender":"female","level":"NES"}
{"type":"speaker","id":"b","gender":"m","level":"FR2"}
{"type":"recording","id":"a1","speaker_id":"a","path":"a1.wav","duration_s":61.0,"sample_rate":16000}
{"type":"recording","id":"a2","speaker_id":"a","path":"a2.wav","duration_s":3599.4,"sample_rate":16000,"kind":"monologue","scores":{"fluency":3.5}}
{"type":"recording","id":"b1","speaker_id":"b","path":"b1.wav","duration_s":30.0,"sample_rate":44100}
)";

const char* kEssays =
    R"({"type":"header","corpus":"efcamdat","scheme":["A1","A2","B1","B2","C1"],"scheme_name":"cefr"}
{"type":"speaker","id":"l1","gender":"female"}
{"type":"essay","id":"e1","learner_id":"l1","text":"Hello, my name is Anna.","raw_level":2}
{"type":"essay","id":"e2","learner_id":"l1","text":"Extraordinary things","raw_level":14}
)";

}  // namespace

TEST(Scheme, BuiltinsAndIndex) {
  EXPECT_EQ(LevelScheme::cefr().labels, (std::vector<std::string>{"A1", "A2", "B1", "B2", "C1"}));
  EXPECT_EQ(LevelScheme::efcamdat_raw().num_classes(), 16u);
  EXPECT_EQ(LevelScheme::private_full().num_classes(), 8u);
  EXPECT_EQ(LevelScheme::anglish().index_of("FR2"), 2u);
  EXPECT_THROW(LevelScheme::anglish().index_of("C1"), SchemeError);
  ASSERT_TRUE(LevelScheme::builtin("private").has_value());
  EXPECT_FALSE(LevelScheme::builtin("nope").has_value());
}

TEST(Cefr, BandingOfAllSixteenLevels) {
  const std::vector<std::string> want{"A1", "A1", "A1", "A2", "A2", "A2", "B1", "B1",
                                      "B1", "B2", "B2", "B2", "C1", "C1", "C1", "C1"};
  for (int raw = 1; raw <= 16; ++raw) EXPECT_EQ(map_raw_level_to_cefr(raw), want[raw - 1]) << raw;
  EXPECT_THROW(map_raw_level_to_cefr(0), InvalidArgument);
  EXPECT_THROW(map_raw_level_to_cefr(17), InvalidArgument);
}

TEST(Manifest, SpeechParseAndRoundTrip) {
  const auto m = parse_manifest(kSpeech);
  validate(m);
  EXPECT_EQ(m.corpus, CorpusKind::anglish);
  ASSERT_EQ(m.items.size(), 3u);
  const auto& a2 = std::get<Recording>(m.items[1]);
  EXPECT_EQ(a2.kind, RecordingKind::monologue);
  EXPECT_DOUBLE_EQ(a2.scores.at("fluency"), 3.5);
  EXPECT_EQ(m.find_speaker("b")->gender, Gender::male);
  EXPECT_EQ(m.item_level(m.items[2]), "FR2");
  const auto text = serialize_manifest(m);
  EXPECT_EQ(serialize_manifest(parse_manifest(text)), text);
}

TEST(Manifest, EssaysGetBandAndTokenCount) {
  const auto m = parse_manifest(kEssays);
  validate(m);
  const auto& e1 = std::get<Essay>(m.items[0]);
  EXPECT_EQ(e1.cefr_level, "A1");
  // hello , my name is anna .
  EXPECT_EQ(e1.token_count, 7u);
  const auto& e2 = std::get<Essay>(m.items[1]);
  EXPECT_EQ(e2.cefr_level, "C1");
  // extrao ##rdinar ##y things
  EXPECT_EQ(e2.token_count, 4u);
  EXPECT_FALSE(m.find_speaker("l1")->level.has_value());
  const auto path = (std::filesystem::temp_directory_path() / "l2prof_manifest.jsonl").string();
  save_manifest(m, path);
  EXPECT_EQ(serialize_manifest(load_manifest(path)), serialize_manifest(m));
  std::filesystem::remove(path);
}

TEST(Manifest, ParseErrorsNameTheLine) {
  EXPECT_THROW(parse_manifest(""), ParseError);
  EXPECT_THROW(parse_manifest(R"({"type":"speaker","id":"a","gender":"f"})"), ParseError);
  const std::string head = R"({"type":"header","corpus":"anglish","scheme":["NES"]})";
  try {
    parse_manifest(head + "\n{\"type\":\"recording\",\"id\":\"x\"}\n", "m.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("m.jsonl:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("speaker_id"), std::string::npos);
  }
  EXPECT_THROW(parse_manifest(head + "\nnot json\n"), ParseError);
  EXPECT_THROW(parse_manifest(head + "\n{\"type\":\"video\"}\n"), ParseError);
  EXPECT_THROW(parse_manifest(head + "\n" + head + "\n"), ParseError);
  EXPECT_THROW(parse_manifest(head + "\n{\"type\":\"speaker\",\"id\":\"a\",\"gender\":\"x\"}\n"), ParseError);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.jsonl"), Error);
}

TEST(Manifest, IntegrityViolations) {
  auto base = parse_manifest(kSpeech);
  auto dup = base;
  dup.speakers.push_back(dup.speakers[0]);
  EXPECT_THROW(validate(dup), IntegrityError);
  auto orphan = base;
  std::get<Recording>(orphan.items[0]).speaker_id = "ghost";
  EXPECT_THROW(validate(orphan), IntegrityError);
  auto dup_item = base;
  dup_item.items.push_back(dup_item.items[0]);
  EXPECT_THROW(validate(dup_item), IntegrityError);
  auto zero = base;
  std::get<Recording>(zero.items[0]).duration_s = 0;
  EXPECT_THROW(validate(zero), IntegrityError);
  auto level = base;
  level.speakers[0].level = "C1";
  EXPECT_THROW(validate(level), SchemeError);
  auto nolevel = base;
  nolevel.speakers[0].level.reset();
  EXPECT_THROW(validate(nolevel), IntegrityError);

  auto essays = parse_manifest(kEssays);
  std::get<Essay>(essays.items[0]).cefr_level = "B2";
  EXPECT_THROW(validate(essays), IntegrityError);
  essays = parse_manifest(kEssays);
  std::get<Essay>(essays.items[0]).token_count = 99;
  EXPECT_THROW(validate(essays), IntegrityError);
}

TEST(Stats, PerLevelAggregates) {
  const auto m = parse_manifest(kSpeech);
  const auto s = corpus_stats(m);
  ASSERT_EQ(s.per_level.size(), 3u);
  EXPECT_EQ(s.per_level[0].item_count, 2u);
  EXPECT_EQ(s.per_level[0].speaker_count, 1u);
  EXPECT_DOUBLE_EQ(s.per_level[0].total_duration_s, 3660.4);
  EXPECT_DOUBLE_EQ(s.per_level[0].min_duration_s, 61.0);
  EXPECT_DOUBLE_EQ(s.per_level[0].max_duration_s, 3599.4);
  EXPECT_EQ(s.per_level[1].item_count, 0u);
  EXPECT_EQ(s.overall.speaker_count, 2u);
  EXPECT_EQ(s.overall.item_count, 3u);
  const auto table = format_stats(m, s);
  EXPECT_NE(table.find("| NES | 1:01:00 | 1:01 | 59:59 | 1 |"), std::string::npos) << table;
  EXPECT_NE(table.find("| FR1 | 0:00:00 |"), std::string::npos);
}

TEST(Stats, EssayTable) {
  const auto m = parse_manifest(kEssays);
  const auto s = corpus_stats(m);
  EXPECT_EQ(s.per_level[0].total_tokens, 7u);
  EXPECT_DOUBLE_EQ(s.overall.mean_tokens, 5.5);
  const auto table = format_stats(m, s);
  EXPECT_NE(table.find("| C1 | 1 | 4 |"), std::string::npos) << table;
  EXPECT_NE(table.find("| all | 2 | 6 |"), std::string::npos) << table;
  Manifest empty;
  EXPECT_THROW(corpus_stats(empty), InvalidArgument);
}

TEST(Hms, Formatting) {
  EXPECT_EQ(format_hms(0), "0:00:00");
  EXPECT_EQ(format_hms(59.6), "0:01:00");
  EXPECT_EQ(format_hms(36000 + 62), "10:01:02");
}

TEST(Tokenizer, WrapsAndTruncates) {
  SubwordTokenizer tok;
  const auto ids = tok.encode("one two three");
  ASSERT_EQ(ids.size(), 5u);
  EXPECT_EQ(ids.front(), SubwordTokenizer::kCls);
  EXPECT_EQ(ids.back(), SubwordTokenizer::kSep);
  EXPECT_EQ(tok.encode("One"), tok.encode("one"));
  for (auto id : ids) EXPECT_LT(id, tok.vocab_size());
  const auto cut = truncate_tokens(ids, 3);
  EXPECT_EQ(cut, (std::vector<TokenId>{SubwordTokenizer::kCls, ids[1], SubwordTokenizer::kSep}));
  EXPECT_EQ(truncate_tokens(ids, 10), ids);
  EXPECT_THROW(truncate_tokens(ids, 0), InvalidArgument);
}
