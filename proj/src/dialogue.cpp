// src/dialogue.cpp

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

#include "l2prof/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>

#include "l2prof/common.hpp"
#include "l2prof/dsp.hpp"
#include "l2prof/work_queue.hpp"

namespace l2prof {

using nlohmann::json;

void SilenceConfig::validate() const {
  if (!(min_silence_ms > 0)) throw InvalidArgument("SilenceConfig: min_silence_ms must be > 0");
  if (!(keep_buffer_ms >= 0)) throw InvalidArgument("SilenceConfig: keep_buffer_ms must be >= 0");
  if (!(threshold_dbfs < 0)) throw InvalidArgument("SilenceConfig: threshold_dbfs must be < 0");
  if (!(frame_ms > 0)) throw InvalidArgument("SilenceConfig: frame_ms must be > 0");
}

namespace {

Index frame_samples(const AudioClip& clip, double frame_ms) {
  return std::max<Index>(1, std::lround(frame_ms * clip.sample_rate / 1000.0));
}

}  // namespace

std::vector<double> frame_dbfs(const AudioClip& clip, double frame_ms) {
  const Index len = frame_samples(clip, frame_ms);
  const Index n = clip.size();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((n + len - 1) / len));
  for (Index start = 0; start < n; start += len) {
    const Index cnt = std::min(len, n - start);
    const double ms = clip.samples.segment(start, cnt).cast<double>().squaredNorm() / cnt;
    out.push_back(ms > 0 ? 10.0 * std::log10(ms) : -std::numeric_limits<double>::infinity());
  }
  return out;
}

std::vector<TimeSpan> remove_silence(const AudioClip& clip, const SilenceConfig& cfg) {
  cfg.validate();
  const auto db = frame_dbfs(clip, cfg.frame_ms);
  const Index flen = frame_samples(clip, cfg.frame_ms);
  const Index n = clip.size();
  const double rate = clip.sample_rate;
  const Index min_silence = std::lround(cfg.min_silence_ms * rate / 1000.0);

  // Long silent runs in samples, then their complement.
  std::vector<std::pair<Index, Index>> silent;
  for (std::size_t i = 0; i < db.size();) {
    if (!(db[i] < cfg.threshold_dbfs)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < db.size() && db[j] < cfg.threshold_dbfs) ++j;
    const Index s = static_cast<Index>(i) * flen;
    const Index e = std::min(n, static_cast<Index>(j) * flen);
    if (e - s >= min_silence) silent.emplace_back(s, e);
    i = j;
  }
  std::vector<TimeSpan> spans;
  Index cursor = 0;
  for (const auto& [s, e] : silent) {
    if (s > cursor) spans.push_back({cursor / rate, s / rate});
    cursor = e;
  }
  if (cursor < n) spans.push_back({cursor / rate, n / rate});

  const double pad = cfg.keep_buffer_ms / 1000.0;
  const double dur = n / rate;
  std::vector<TimeSpan> merged;
  for (auto sp : spans) {
    sp.start_s = std::max(0.0, sp.start_s - pad);
    sp.end_s = std::min(dur, sp.end_s + pad);
    if (!merged.empty() && sp.start_s <= merged.back().end_s)
      merged.back().end_s = std::max(merged.back().end_s, sp.end_s);
    else
      merged.push_back(sp);
  }
  return merged;
}

AudioClip concatenate_spans(const AudioClip& clip, const std::vector<TimeSpan>& spans) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.span = clip.span;
  Index total = 0;
  std::vector<std::pair<Index, Index>> ranges;
  for (const auto& sp : spans) {
    const Index s = std::clamp<Index>(std::lround(sp.start_s * clip.sample_rate), 0, clip.size());
    const Index e = std::clamp<Index>(std::lround(sp.end_s * clip.sample_rate), 0, clip.size());
    if (e > s) {
      ranges.emplace_back(s, e);
      total += e - s;
    }
  }
  out.samples.resize(total);
  Index pos = 0;
  for (const auto& [s, e] : ranges) {
    out.samples.segment(pos, e - s) = clip.samples.segment(s, e - s);
    pos += e - s;
  }
  return out;
}

namespace {

void parse_turns_jsonl(const std::string& contents, const std::string& origin,
                       std::map<std::string, std::vector<TurnSpan>>& out) {
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TurnSpan t{j.at("speaker").get<std::string>(), j.at("start_s").get<double>(),
                 j.at("end_s").get<double>()};
      if (!(t.end_s > t.start_s))
        throw ParseError("end_s must exceed start_s");
      out[j.at("recording_id").get<std::string>()].push_back(std::move(t));
    } catch (const json::exception& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

ReplayDiarizer ReplayDiarizer::from_string(const std::string& jsonl) {
  ReplayDiarizer d;
  parse_turns_jsonl(jsonl, "<labels>", d.labels_);
  return d;
}

ReplayDiarizer ReplayDiarizer::from_file(const std::string& path) {
  ReplayDiarizer d;
  parse_turns_jsonl(read_file(path), path, d.labels_);
  return d;
}

std::vector<TurnSpan> ReplayDiarizer::diarize(const AudioClip&,
                                              const std::string& recording_id) {
  auto it = labels_.find(recording_id);
  if (it == labels_.end()) return {};
  return it->second;
}

namespace {

/// Owner of time t among the turns covering it: the latest-starting
/// (innermost) turn, unless t lies in the first half of its partial overlap
/// with an earlier turn that ends first.
const TurnSpan* owner_at(std::vector<const TurnSpan*> cover, double t) {
  while (true) {
    const TurnSpan* b = *std::min_element(cover.begin(), cover.end(), [](const TurnSpan* x, const TurnSpan* y) {
      return std::tie(y->start_s, x->end_s, x->speaker_tag) < std::tie(x->start_s, y->end_s, y->speaker_tag);
    });
    std::vector<const TurnSpan*> rivals;
    for (const TurnSpan* a : cover)
      if (a != b && a->end_s < b->end_s && t < 0.5 * (b->start_s + a->end_s)) rivals.push_back(a);
    if (rivals.empty()) return b;
    cover = std::move(rivals);
  }
}

}  // namespace

std::vector<TurnSpan> resolve_overlaps(std::vector<TurnSpan> turns) {
  std::erase_if(turns, [](const TurnSpan& t) { return !(t.end_s > t.start_s); });
  std::sort(turns.begin(), turns.end(), [](const TurnSpan& a, const TurnSpan& b) {
    return std::tie(a.speaker_tag, a.start_s, a.end_s) < std::tie(b.speaker_tag, b.start_s, b.end_s);
  });
  // Same-speaker union first.
  std::vector<TurnSpan> merged;
  for (auto& t : turns) {
    if (!merged.empty() && merged.back().speaker_tag == t.speaker_tag && t.start_s <= merged.back().end_s)
      merged.back().end_s = std::max(merged.back().end_s, t.end_s);
    else
      merged.push_back(std::move(t));
  }

  std::vector<double> cuts;
  for (const auto& a : merged) {
    cuts.push_back(a.start_s);
    cuts.push_back(a.end_s);
    for (const auto& b : merged)
      if (a.start_s <= b.start_s && b.start_s < a.end_s && a.end_s < b.end_s)
        cuts.push_back(0.5 * (b.start_s + a.end_s));
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<TurnSpan> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1], t = 0.5 * (lo + hi);
    std::vector<const TurnSpan*> cover;
    for (const auto& m : merged)
      if (m.start_s <= t && t < m.end_s) cover.push_back(&m);
    if (cover.empty()) continue;
    const TurnSpan* w = owner_at(std::move(cover), t);
    if (!out.empty() && out.back().speaker_tag == w->speaker_tag && out.back().end_s == lo)
      out.back().end_s = hi;
    else
      out.push_back({w->speaker_tag, lo, hi});
  }
  return out;
}

namespace {

double covered_fraction(const std::vector<TurnSpan>& turns,
                        const std::vector<TimeSpan>& voiced) {
  double total = 0, covered = 0;
  for (const auto& v : voiced) {
    total += v.duration();
    for (const auto& t : turns) {
      const double lo = std::max(v.start_s, t.start_s), hi = std::min(v.end_s, t.end_s);
      if (hi > lo) covered += hi - lo;
    }
  }
  return total > 0 ? covered / total : 0.0;
}

}  // namespace

DiarizationResult diarize(const AudioClip& clip, DiarizationAdapter& adapter,
                          const std::string& recording_id, const SilenceConfig& silence) {
  DiarizationResult res;
  const auto voiced = remove_silence(clip, silence);
  if (voiced.empty()) {
    res.diagnostics.push_back(recording_id + ": silent input, diarization skipped");
    return res;
  }
  try {
    res.raw = adapter.diarize(clip, recording_id);
  } catch (const std::exception& e) {
    throw AdapterError("diarizer '" + adapter.descriptor().id + "' failed on '" +
                       recording_id + "': " + e.what());
  }
  res.turns = resolve_overlaps(res.raw);
  res.coverage = covered_fraction(res.turns, voiced);
  if (res.turns.empty())
    res.diagnostics.push_back(recording_id + ": diarizer returned no spans on non-silent input");
  else if (res.coverage < 0.9)
    res.diagnostics.push_back(recording_id + ": spans cover only " +
                              std::to_string(res.coverage) + " of non-silent audio");
  const int max_spk = adapter.descriptor().max_speakers;
  if (max_spk > 0) {
    std::map<std::string, int> tags;
    for (const auto& t : res.turns) tags[t.speaker_tag] = 1;
    if (static_cast<int>(tags.size()) > max_spk)
      res.diagnostics.push_back(recording_id + ": more speaker tags than the adapter's maximum");
  }
  return res;
}

std::string select_learner(const std::vector<TurnSpan>& turns) {
  if (turns.empty()) throw InvalidArgument("select_learner: empty turn list");
  std::map<std::string, double> totals;
  for (const auto& t : turns) totals[t.speaker_tag] += t.duration();
  auto best = totals.begin();
  for (auto it = totals.begin(); it != totals.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

DialogueVariants build_variants(const AudioClip& clip, const std::vector<TurnSpan>& turns,
                                const std::string& learner) {
  std::vector<TurnSpan> own;
  for (const auto& t : turns)
    if (t.speaker_tag == learner) own.push_back(t);
  if (own.empty())
    throw InvalidArgument("build_variants: learner '" + learner + "' has no turns");
  std::sort(own.begin(), own.end(),
            [](const TurnSpan& a, const TurnSpan& b) { return a.start_s < b.start_s; });
  std::vector<TimeSpan> spans;
  for (const auto& t : own) spans.push_back({t.start_s, t.end_s});
  return {clip, concatenate_spans(clip, spans)};
}

std::string to_string(Variant v) { return v == Variant::full ? "full" : "student_only"; }

Variant parse_variant(const std::string& s) {
  if (s == "full" || s == "FA") return Variant::full;
  if (s == "student_only" || s == "SA") return Variant::student_only;
  throw InvalidArgument("unknown variant '" + s + "'");
}

namespace {

void parse_asr_jsonl(const std::string& contents, const std::string& origin,
                     std::map<std::string, AsrOutput>& out, bool& timestamps) {
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  timestamps = true;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AsrOutput o;
      o.text = j.value("text", std::string());
      if (j.contains("segments"))
        for (const auto& s : j["segments"])
          o.segments.push_back({s.at("text").get<std::string>(), s.at("start_s").get<double>(),
                                s.at("end_s").get<double>()});
      timestamps = timestamps && !o.segments.empty();
      any = true;
      std::string key = j.at("recording_id").get<std::string>();
      if (j.contains("variant")) key += "#" + to_string(parse_variant(j["variant"].get<std::string>()));
      out[key] = std::move(o);
    } catch (const json::exception& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  timestamps = timestamps && any;
}

}  // namespace

ReplayAsr ReplayAsr::from_string(const std::string& jsonl) {
  ReplayAsr a;
  parse_asr_jsonl(jsonl, "<asr>", a.entries_, a.timestamps_);
  return a;
}

ReplayAsr ReplayAsr::from_file(const std::string& path) {
  ReplayAsr a;
  parse_asr_jsonl(read_file(path), path, a.entries_, a.timestamps_);
  return a;
}

AsrOutput ReplayAsr::transcribe(const AudioClip&, const std::string& recording_id,
                                Variant variant) {
  if (auto it = entries_.find(recording_id + "#" + to_string(variant)); it != entries_.end())
    return it->second;
  if (auto it = entries_.find(recording_id); it != entries_.end()) return it->second;
  throw AdapterError("replay-asr: no transcription for '" + recording_id + "'");
}

bool Transcript::has_timestamps() const {
  return !sentences.empty() && std::all_of(sentences.begin(), sentences.end(), [](const Sentence& s) {
           return s.start_s.has_value() && s.end_s.has_value();
         });
}

json Transcript::to_json() const {
  json s = json::array();
  for (const auto& x : sentences) {
    json o = {{"text", x.text}};
    if (x.start_s) o["start_s"] = *x.start_s;
    if (x.end_s) o["end_s"] = *x.end_s;
    s.push_back(std::move(o));
  }
  return {{"recording_id", recording_id},
          {"variant", to_string(variant)},
          {"adapter", {{"id", adapter_id}, {"version", adapter_version}}},
          {"split_method", split_method},
          {"sentences", std::move(s)},
          {"diagnostics", diagnostics}};
}

Transcript Transcript::from_json(const json& j) {
  Transcript t;
  t.recording_id = j.at("recording_id").get<std::string>();
  t.variant = parse_variant(j.at("variant").get<std::string>());
  t.adapter_id = j.at("adapter").value("id", "");
  t.adapter_version = j.at("adapter").value("version", "");
  t.split_method = j.value("split_method", "");
  for (const auto& s : j.at("sentences")) {
    Sentence x{s.at("text").get<std::string>(), std::nullopt, std::nullopt};
    if (s.contains("start_s")) x.start_s = s["start_s"].get<double>();
    if (s.contains("end_s")) x.end_s = s["end_s"].get<double>();
    t.sentences.push_back(std::move(x));
  }
  if (j.contains("diagnostics")) t.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
  return t;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const char c = text[i];
    const bool terminal = c == '.' || c == '!' || c == '?';
    if (terminal && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      if (auto t = trim(cur); !t.empty()) out.push_back(std::move(t));
      cur.clear();
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(std::move(t));
  return out;
}

Transcript transcribe(const AudioClip& clip, TranscriptionAdapter& adapter,
                      const std::string& recording_id, Variant variant) {
  const auto desc = adapter.descriptor();
  Transcript t;
  t.recording_id = recording_id;
  t.variant = variant;
  t.adapter_id = desc.id;
  t.adapter_version = desc.version;
  AsrOutput raw;
  try {
    raw = adapter.transcribe(clip, recording_id, variant);
  } catch (const std::exception& e) {
    throw AdapterError("transcriber '" + desc.id + "' failed on '" + recording_id +
                       "': " + e.what());
  }
  if (!raw.segments.empty()) {
    t.split_method = "adapter-timestamps";
    double prev_start = -std::numeric_limits<double>::infinity();
    for (const auto& s : raw.segments) {
      if (s.end_s < s.start_s || s.start_s < prev_start)
        throw AdapterError("transcriber '" + desc.id + "' returned non-monotone timestamps for '" +
                           recording_id + "'");
      prev_start = s.start_s;
      if (auto txt = trim(s.text); !txt.empty()) t.sentences.push_back({txt, s.start_s, s.end_s});
    }
  } else {
    t.split_method = "punctuation";
    for (auto& s : split_sentences(raw.text)) t.sentences.push_back({std::move(s), {}, {}});
  }
  if (t.sentences.empty() && clip.size() > 0)
    t.diagnostics.push_back(recording_id + ": empty transcription on non-silent audio");
  return t;
}

std::string TranscriptChunk::text() const {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s.text;
  }
  return out;
}

std::vector<TranscriptChunk> window_transcript(const Transcript& t, WindowMode mode) {
  if (t.sentences.empty()) throw InvalidArgument("window_transcript: empty transcript");
  std::vector<TranscriptChunk> out;
  if (mode == WindowMode::one_minute) {
    if (!t.has_timestamps())
      throw InvalidArgument("window_transcript: one-minute windows need timestamps");
    long current = -1;
    for (const auto& s : t.sentences) {
      const long w = static_cast<long>(std::floor(*s.start_s / 60.0));
      if (w != current) {
        out.push_back({static_cast<int>(out.size()), {}});
        current = w;
      }
      out.back().sentences.push_back(s);
    }
    return out;
  }
  constexpr std::size_t kChunk = 7, kMinTail = 4;
  for (std::size_t i = 0; i < t.sentences.size(); i += kChunk) {
    const std::size_t end = std::min(t.sentences.size(), i + kChunk);
    std::vector<Sentence> part(t.sentences.begin() + i, t.sentences.begin() + end);
    if (part.size() < kMinTail && !out.empty()) {
      auto& prev = out.back().sentences;
      prev.insert(prev.end(), part.begin(), part.end());
    } else {
      out.push_back({static_cast<int>(out.size()), std::move(part)});
    }
  }
  return out;
}

std::vector<DialogueItemReport> run_dialogue(const Manifest& manifest,
                                             const std::string& manifest_dir,
                                             const DiarizerFactory& make_diarizer,
                                             const TranscriberFactory& make_asr,
                                             const DialogueOptions& opts) {
  namespace fs = std::filesystem;
  std::vector<const Recording*> recs;
  for (const auto& item : manifest.items)
    if (const auto* r = std::get_if<Recording>(&item); r && r->kind == RecordingKind::dialogue)
      recs.push_back(r);
  fs::create_directories(opts.out_dir);

  const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
  std::vector<std::unique_ptr<DiarizationAdapter>> diarizers;
  std::vector<std::unique_ptr<TranscriptionAdapter>> asrs;
  diarizers.push_back(make_diarizer());
  asrs.push_back(make_asr());
  const bool share_d = diarizers[0]->descriptor().reentrant;
  const bool share_a = asrs[0]->descriptor().reentrant;
  for (std::size_t w = 1; w < jobs; ++w) {
    if (!share_d) diarizers.push_back(make_diarizer());
    if (!share_a) asrs.push_back(make_asr());
  }

  std::vector<DialogueItemReport> reports(recs.size());
  auto process = [&](std::size_t i, std::size_t worker) {
    const Recording& rec = *recs[i];
    DiarizationAdapter& dia = *diarizers[share_d ? 0 : worker];
    TranscriptionAdapter& asr = *asrs[share_a ? 0 : worker];
    fs::path wav = rec.path;
    if (wav.is_relative()) wav = fs::path(manifest_dir) / wav;
    AudioClip clip = resample(read_wav(wav.string()));
    clip.span = SourceSpan{rec.id, 0.0, clip.duration_s()};

    const auto voiced = remove_silence(clip, opts.silence);
    const AudioClip cleaned = concatenate_spans(clip, voiced);
    const auto dres = diarize(cleaned, dia, rec.id, opts.silence);

    json audit = {{"recording_id", rec.id},
                  {"order", "silence_removal_then_diarization"},
                  {"silence",
                   {{"min_silence_ms", opts.silence.min_silence_ms},
                    {"threshold_dbfs", opts.silence.threshold_dbfs},
                    {"keep_buffer_ms", opts.silence.keep_buffer_ms}}},
                  {"original_duration_s", clip.duration_s()},
                  {"cleaned_duration_s", cleaned.duration_s()},
                  {"coverage", dres.coverage},
                  {"diagnostics", dres.diagnostics}};
    json diffs = json::array();
    for (const auto& r : dres.raw) {
      const bool kept = std::find(dres.turns.begin(), dres.turns.end(), r) != dres.turns.end();
      if (!kept) diffs.push_back({{"speaker", r.speaker_tag}, {"raw_start_s", r.start_s}, {"raw_end_s", r.end_s}});
    }
    audit["span_diffs"] = diffs;
    json resolved = json::array();
    for (const auto& t : dres.turns)
      resolved.push_back({{"speaker", t.speaker_tag}, {"start_s", t.start_s}, {"end_s", t.end_s}});
    audit["turns"] = resolved;

    std::string learner;
    if (!dres.turns.empty()) {
      learner = select_learner(dres.turns);
      audit["learner"] = learner;
      const auto variants = build_variants(cleaned, dres.turns, learner);
      for (Variant v : opts.variants) {
        const AudioClip& c = v == Variant::full ? variants.full : variants.student_only;
        const std::string stem = (fs::path(opts.out_dir) / (rec.id + "." + to_string(v))).string();
        write_wav(stem + ".wav", c);
        const Transcript t = transcribe(c, asr, rec.id, v);
        write_file(stem + ".transcript.json", t.to_json().dump(2) + "\n");
        audit["variants"][to_string(v)] = {{"duration_s", c.duration_s()},
                                           {"sentences", t.sentences.size()},
                                           {"diagnostics", t.diagnostics}};
      }
    }
    write_file((fs::path(opts.out_dir) / (rec.id + ".audit.json")).string(), audit.dump(2) + "\n");
    reports[i].learner = learner;
  };
  const auto outcomes = run_bounded(recs.size(), jobs, opts.max_retries, process);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    reports[i].recording_id = recs[i]->id;
    reports[i].ok = outcomes[i].ok;
    reports[i].attempts = outcomes[i].attempts;
    reports[i].error = outcomes[i].error;
  }
  return reports;
}

}  // namespace l2prof
