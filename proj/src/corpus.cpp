// src/corpus.cpp

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

#include "l2prof/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "l2prof/common.hpp"
#include "l2prof/tokenizer.hpp"

namespace l2prof {

using nlohmann::json;

std::string to_string(Gender g) {
  return g == Gender::female ? "female" : "male";
}

std::string to_string(CorpusKind c) {
  switch (c) {
    case CorpusKind::anglish: return "anglish";
    case CorpusKind::efcamdat: return "efcamdat";
    case CorpusKind::private_: return "private";
  }
  return "?";
}

std::string to_string(RecordingKind k) {
  switch (k) {
    case RecordingKind::reading: return "reading";
    case RecordingKind::monologue: return "monologue";
    case RecordingKind::dialogue: return "dialogue";
  }
  return "?";
}

Gender parse_gender(const std::string& s) {
  if (s == "female" || s == "f" || s == "F") return Gender::female;
  if (s == "male" || s == "m" || s == "M") return Gender::male;
  throw ParseError("unknown gender '" + s + "'");
}

CorpusKind parse_corpus_kind(const std::string& s) {
  if (s == "anglish") return CorpusKind::anglish;
  if (s == "efcamdat") return CorpusKind::efcamdat;
  if (s == "private") return CorpusKind::private_;
  throw ParseError("unknown corpus '" + s + "'");
}

RecordingKind parse_recording_kind(const std::string& s) {
  if (s == "reading") return RecordingKind::reading;
  if (s == "monologue") return RecordingKind::monologue;
  if (s == "dialogue") return RecordingKind::dialogue;
  throw ParseError("unknown recording kind '" + s + "'");
}

bool LevelScheme::contains(const LevelLabel& l) const {
  return std::find(labels.begin(), labels.end(), l) != labels.end();
}

std::size_t LevelScheme::index_of(const LevelLabel& l) const {
  auto it = std::find(labels.begin(), labels.end(), l);
  if (it == labels.end())
    throw SchemeError("level '" + l + "' is not in scheme '" + name + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

LevelScheme LevelScheme::anglish() { return {"anglish", {"NES", "FR1", "FR2"}}; }
LevelScheme LevelScheme::cefr() { return {"cefr", {"A1", "A2", "B1", "B2", "C1"}}; }
LevelScheme LevelScheme::efcamdat_raw() {
  LevelScheme s{"efcamdat-raw", {}};
  for (int i = 1; i <= 16; ++i) s.labels.push_back(std::to_string(i));
  return s;
}
LevelScheme LevelScheme::private_levels() { return {"private", {"L3", "L4", "L5"}}; }
LevelScheme LevelScheme::private_full() {
  return {"private-full", {"L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8"}};
}

std::optional<LevelScheme> LevelScheme::builtin(const std::string& name) {
  for (auto s : {anglish(), cefr(), efcamdat_raw(), private_levels(),
                 private_full()})
    if (s.name == name) return s;
  return std::nullopt;
}

const std::string& item_id(const Item& item) {
  return std::visit([](const auto& x) -> const std::string& { return x.id; },
                    item);
}

const std::string& item_speaker(const Item& item) {
  if (const auto* r = std::get_if<Recording>(&item)) return r->speaker_id;
  return std::get<Essay>(item).learner_id;
}

const Speaker* Manifest::find_speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.id == id) return &s;
  return nullptr;
}

LevelLabel Manifest::item_level(const Item& item) const {
  if (const auto* e = std::get_if<Essay>(&item)) return e->cefr_level;
  const auto* sp = find_speaker(item_speaker(item));
  if (!sp || !sp->level)
    throw IntegrityError("item '" + item_id(item) + "' has no level");
  return *sp->level;
}

LevelLabel map_raw_level_to_cefr(int raw) {
  if (raw < 1 || raw > 16)
    throw InvalidArgument("raw level " + std::to_string(raw) +
                          " outside [1, 16]");
  static const char* bands[] = {"A1", "A2", "B1", "B2", "C1"};
  const int band = std::min((raw - 1) / 3, 4);
  return bands[band];
}

void validate(const Manifest& m) {
  std::unordered_set<std::string> speaker_ids;
  for (const auto& s : m.speakers) {
    if (s.id.empty()) throw IntegrityError("speaker with empty id");
    if (!speaker_ids.insert(s.id).second)
      throw IntegrityError("duplicate speaker id '" + s.id + "'");
    if (s.level && !m.scheme.contains(*s.level))
      throw SchemeError("speaker '" + s.id + "' has level '" + *s.level +
                        "' not in scheme '" + m.scheme.name + "'");
  }
  std::unordered_set<std::string> ids;
  static const SubwordTokenizer tokenizer;
  for (const auto& item : m.items) {
    const auto& id = item_id(item);
    if (id.empty()) throw IntegrityError("item with empty id");
    if (!ids.insert(id).second)
      throw IntegrityError("duplicate item id '" + id + "'");
    const auto& spk = item_speaker(item);
    if (!speaker_ids.count(spk))
      throw IntegrityError("item '" + id + "' references unknown speaker '" +
                           spk + "'");
    if (const auto* r = std::get_if<Recording>(&item)) {
      if (!(r->duration_s > 0.0))
        throw IntegrityError("recording '" + id + "' has non-positive duration");
      if (r->sample_rate <= 0)
        throw IntegrityError("recording '" + id + "' has non-positive rate");
      if (!m.find_speaker(spk)->level)
        throw IntegrityError("speaker '" + spk + "' of recording '" + id +
                             "' has no level");
    } else {
      const auto& e = std::get<Essay>(item);
      if (!m.scheme.contains(e.cefr_level))
        throw SchemeError("essay '" + id + "' has level '" + e.cefr_level +
                          "' not in scheme '" + m.scheme.name + "'");
      if (m.scheme.labels == LevelScheme::cefr().labels &&
          map_raw_level_to_cefr(e.raw_level) != e.cefr_level)
        throw IntegrityError("essay '" + id + "': cefr_level " + e.cefr_level +
                             " does not match raw level " +
                             std::to_string(e.raw_level));
      if (e.token_count != tokenizer.count(e.text))
        throw IntegrityError("essay '" + id + "': token_count mismatch");
    }
  }
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

Manifest parse_manifest(const std::string& contents, const std::string& origin) {
  Manifest m;
  bool have_header = false;
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  static const SubwordTokenizer tokenizer;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": record is not an object");
    const auto type = field<std::string>(j, "type", where);
    if (type == "header") {
      if (have_header) throw ParseError(where + ": second header record");
      have_header = true;
      m.corpus = parse_corpus_kind(field<std::string>(j, "corpus", where));
      m.scheme.labels = field<std::vector<std::string>>(j, "scheme", where);
      m.scheme.name = j.value("scheme_name", to_string(m.corpus));
      if (m.scheme.labels.empty()) throw ParseError(where + ": empty scheme");
      continue;
    }
    if (!have_header) throw ParseError(where + ": record before header");
    if (type == "speaker") {
      Speaker s;
      s.id = field<std::string>(j, "id", where);
      s.gender = parse_gender(field<std::string>(j, "gender", where));
      if (j.contains("level") && !j["level"].is_null())
        s.level = field<std::string>(j, "level", where);
      s.corpus = m.corpus;
      m.speakers.push_back(std::move(s));
    } else if (type == "recording") {
      Recording r;
      r.id = field<std::string>(j, "id", where);
      r.speaker_id = field<std::string>(j, "speaker_id", where);
      r.path = field<std::string>(j, "path", where);
      r.duration_s = field<double>(j, "duration_s", where);
      r.sample_rate = field<int>(j, "sample_rate", where);
      r.kind = parse_recording_kind(j.value("kind", std::string("reading")));
      if (j.contains("scores"))
        r.scores = field<std::map<std::string, double>>(j, "scores", where);
      m.items.emplace_back(std::move(r));
    } else if (type == "essay") {
      Essay e;
      e.id = field<std::string>(j, "id", where);
      e.learner_id = field<std::string>(j, "learner_id", where);
      e.text = field<std::string>(j, "text", where);
      e.raw_level = field<int>(j, "raw_level", where);
      e.cefr_level = j.contains("cefr_level")
                         ? field<std::string>(j, "cefr_level", where)
                         : map_raw_level_to_cefr(e.raw_level);
      e.token_count = j.contains("token_count")
                          ? field<std::size_t>(j, "token_count", where)
                          : tokenizer.count(e.text);
      m.items.emplace_back(std::move(e));
    } else {
      throw ParseError(where + ": unknown record type '" + type + "'");
    }
  }
  if (!have_header) throw ParseError(origin + ": missing header record");
  validate(m);
  return m;
}

Manifest load_manifest(const std::string& path) {
  return parse_manifest(read_file(path), path);
}

std::string serialize_manifest(const Manifest& m) {
  std::string out;
  json h = {{"type", "header"},
            {"corpus", to_string(m.corpus)},
            {"scheme", m.scheme.labels},
            {"scheme_name", m.scheme.name}};
  if (m.corpus == CorpusKind::efcamdat) h["cefr_banding"] = kCefrBanding;
  out += h.dump() + "\n";
  for (const auto& s : m.speakers) {
    json j = {{"type", "speaker"}, {"id", s.id}, {"gender", to_string(s.gender)}};
    if (s.level) j["level"] = *s.level;
    out += j.dump() + "\n";
  }
  for (const auto& item : m.items) {
    json j;
    if (const auto* r = std::get_if<Recording>(&item)) {
      j = {{"type", "recording"},       {"id", r->id},
           {"speaker_id", r->speaker_id}, {"path", r->path},
           {"duration_s", r->duration_s}, {"sample_rate", r->sample_rate},
           {"kind", to_string(r->kind)}};
      if (!r->scores.empty()) j["scores"] = r->scores;
    } else {
      const auto& e = std::get<Essay>(item);
      j = {{"type", "essay"},          {"id", e.id},
           {"learner_id", e.learner_id}, {"text", e.text},
           {"raw_level", e.raw_level},   {"cefr_level", e.cefr_level},
           {"token_count", e.token_count}};
    }
    out += j.dump() + "\n";
  }
  return out;
}

void save_manifest(const Manifest& m, const std::string& path) {
  write_file(path, serialize_manifest(m));
}

CorpusStats corpus_stats(const Manifest& m) {
  if (m.items.empty()) throw InvalidArgument("corpus_stats: empty manifest");
  CorpusStats out;
  std::vector<std::set<std::string>> speakers(m.scheme.num_classes());
  std::set<std::string> all_speakers;
  for (const auto& l : m.scheme.labels) out.per_level.push_back({.level = l});
  out.overall.level = "all";
  auto accumulate = [](LevelStats& s, const Item& item) {
    ++s.item_count;
    if (const auto* r = std::get_if<Recording>(&item)) {
      s.min_duration_s = s.item_count == 1 ? r->duration_s
                                           : std::min(s.min_duration_s, r->duration_s);
      s.max_duration_s = std::max(s.max_duration_s, r->duration_s);
      s.total_duration_s += r->duration_s;
    } else {
      s.total_tokens += std::get<Essay>(item).token_count;
      s.mean_tokens = static_cast<double>(s.total_tokens) / s.item_count;
    }
  };
  for (const auto& item : m.items) {
    const auto idx = m.scheme.index_of(m.item_level(item));
    accumulate(out.per_level[idx], item);
    accumulate(out.overall, item);
    speakers[idx].insert(item_speaker(item));
    all_speakers.insert(item_speaker(item));
  }
  for (std::size_t i = 0; i < speakers.size(); ++i)
    out.per_level[i].speaker_count = speakers[i].size();
  out.overall.speaker_count = all_speakers.size();
  return out;
}

std::string format_hms(double seconds) {
  const long total = std::lround(seconds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld:%02ld:%02ld", total / 3600,
                (total / 60) % 60, total % 60);
  return buf;
}

namespace {

std::string format_ms(double seconds) {
  const long total = std::lround(seconds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld:%02ld", total / 60, total % 60);
  return buf;
}

}  // namespace

std::string format_stats(const Manifest& m, const CorpusStats& s) {
  std::ostringstream os;
  const bool essays = !m.items.empty() && std::holds_alternative<Essay>(m.items.front());
  if (essays) {
    os << "| Level | # of Answers | Average Length |\n|---|---|---|\n";
    auto row = [&](const LevelStats& l) {
      os << "| " << l.level << " | " << l.item_count << " | "
         << std::lround(l.mean_tokens) << " |\n";
    };
    for (const auto& l : s.per_level) row(l);
    row(s.overall);
  } else {
    os << "| Level | Total | Min | Max | Number of Speakers |\n"
          "|---|---|---|---|---|\n";
    auto row = [&](const LevelStats& l) {
      os << "| " << l.level << " | " << format_hms(l.total_duration_s) << " | "
         << format_ms(l.min_duration_s) << " | " << format_ms(l.max_duration_s)
         << " | " << l.speaker_count << " |\n";
    };
    for (const auto& l : s.per_level) row(l);
    row(s.overall);
  }
  return os.str();
}

}  // namespace l2prof
