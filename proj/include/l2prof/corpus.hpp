// l2prof/corpus.hpp

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

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace l2prof {

enum class Gender { female, male };
enum class CorpusKind { anglish, efcamdat, private_ };
enum class RecordingKind { reading, monologue, dialogue };

std::string to_string(Gender g);
std::string to_string(CorpusKind c);
std::string to_string(RecordingKind k);
Gender parse_gender(const std::string& s);
CorpusKind parse_corpus_kind(const std::string& s);
RecordingKind parse_recording_kind(const std::string& s);

using LevelLabel = std::string;

/// Ordered set of proficiency labels.
struct LevelScheme {
  std::string name;
  std::vector<LevelLabel> labels;

  std::size_t num_classes() const { return labels.size(); }
  bool contains(const LevelLabel& l) const;
  /// Position of `l` in the order; throws SchemeError when absent.
  std::size_t index_of(const LevelLabel& l) const;

  static LevelScheme anglish();         // NES, FR1, FR2
  static LevelScheme cefr();            // A1..C1
  static LevelScheme efcamdat_raw();    // "1".."16"
  static LevelScheme private_levels();  // L3, L4, L5
  static LevelScheme private_full();    // L1..L8
  /// Built-in scheme by name, or nullopt.
  static std::optional<LevelScheme> builtin(const std::string& name);
};

struct Speaker {
  std::string id;
  Gender gender = Gender::female;
  /// Absent for essay learners, whose level varies per essay.
  std::optional<LevelLabel> level;
  CorpusKind corpus = CorpusKind::anglish;
};

struct Recording {
  std::string id;
  std::string speaker_id;
  std::string path;
  double duration_s = 0.0;
  int sample_rate = 16000;
  RecordingKind kind = RecordingKind::reading;
  /// Optional rater sub-scores (fluency, comprehension, ...); carried only.
  std::map<std::string, double> scores;
};

struct Essay {
  std::string id;
  std::string learner_id;
  std::string text;
  int raw_level = 1;
  LevelLabel cefr_level;
  std::size_t token_count = 0;
};

using Item = std::variant<Recording, Essay>;

const std::string& item_id(const Item& item);
const std::string& item_speaker(const Item& item);

struct Manifest {
  CorpusKind corpus = CorpusKind::anglish;
  LevelScheme scheme;
  std::vector<Speaker> speakers;
  std::vector<Item> items;

  const Speaker* find_speaker(const std::string& id) const;
  /// Label an item is classified under: its CEFR level for essays, its
  /// speaker's level for recordings.
  LevelLabel item_level(const Item& item) const;
};

/// Checks referential integrity, id uniqueness, scheme membership and
/// the per-type invariants. Throws IntegrityError / SchemeError.
void validate(const Manifest& m);

/// Reads a line-delimited JSON manifest. Essays without a token_count get
/// one from the subword tokenizer; a stated count must match it.
Manifest load_manifest(const std::string& path);
Manifest parse_manifest(const std::string& contents,
                        const std::string& origin = "<memory>");
std::string serialize_manifest(const Manifest& m);
void save_manifest(const Manifest& m, const std::string& path);

/// Banding used for the 16 raw EFCamDat levels:
/// 1-3 A1, 4-6 A2, 7-9 B1, 10-12 B2, 13-16 C1.
LevelLabel map_raw_level_to_cefr(int raw);
inline constexpr const char* kCefrBanding = "1-3:A1,4-6:A2,7-9:B1,10-12:B2,13-16:C1";

struct LevelStats {
  LevelLabel level;
  std::size_t item_count = 0;
  std::size_t speaker_count = 0;
  double total_duration_s = 0.0;
  double min_duration_s = 0.0;
  double max_duration_s = 0.0;
  std::size_t total_tokens = 0;
  double mean_tokens = 0.0;
};

struct CorpusStats {
  std::vector<LevelStats> per_level;  // scheme order
  LevelStats overall;
};

/// Per-level aggregates; levels without items report zeros.
CorpusStats corpus_stats(const Manifest& m);

/// Table rendering: durations as H:MM:SS for recordings, item counts and
/// rounded mean lengths for essays.
std::string format_stats(const Manifest& m, const CorpusStats& s);

std::string format_hms(double seconds);

}  // namespace l2prof
