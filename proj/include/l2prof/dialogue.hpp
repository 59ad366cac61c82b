// l2prof/dialogue.hpp

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

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/audio.hpp"
#include "l2prof/corpus.hpp"

namespace l2prof {

struct TimeSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  double duration() const { return end_s - start_s; }
};

struct SilenceConfig {
  double min_silence_ms = 500.0;
  double threshold_dbfs = -40.0;
  double keep_buffer_ms = 100.0;
  double frame_ms = 10.0;

  void validate() const;
};

/// dBFS of consecutive frames (20 log10 RMS, full scale = 1.0). The last
/// frame may be short. Digital silence yields -inf.
std::vector<double> frame_dbfs(const AudioClip& clip, double frame_ms);

/// Non-silent spans of the clip. A silent region is a maximal run of
/// frames below the threshold lasting at least min_silence_ms; the
/// complement is padded by keep_buffer_ms on both sides, clipped to the
/// clip and merged where spans touch.
std::vector<TimeSpan> remove_silence(const AudioClip& clip,
                                     const SilenceConfig& cfg = {});

/// Concatenation of the given spans (sample-rounded) in order.
AudioClip concatenate_spans(const AudioClip& clip, const std::vector<TimeSpan>& spans);

struct TurnSpan {
  std::string speaker_tag;
  double start_s = 0.0;
  double end_s = 0.0;
  double duration() const { return end_s - start_s; }
  bool operator==(const TurnSpan&) const = default;
};

struct DiarizerDescriptor {
  std::string id;
  std::string version = "1";
  int max_speakers = 0;  // 0 = unbounded
  bool requires_network = false;
  bool reentrant = false;
};

class DiarizationAdapter {
 public:
  virtual ~DiarizationAdapter() = default;
  virtual DiarizerDescriptor descriptor() const = 0;
  virtual std::vector<TurnSpan> diarize(const AudioClip& clip,
                                        const std::string& recording_id) = 0;
};

/// Replays spans from an oracle labels file (JSON lines with recording_id,
/// speaker, start_s, end_s).
class ReplayDiarizer : public DiarizationAdapter {
 public:
  static ReplayDiarizer from_file(const std::string& path);
  static ReplayDiarizer from_string(const std::string& jsonl);

  DiarizerDescriptor descriptor() const override {
    return {"replay-diarizer", "1", 0, false, true};
  }
  std::vector<TurnSpan> diarize(const AudioClip& clip,
                                const std::string& recording_id) override;

  const std::map<std::string, std::vector<TurnSpan>>& labels() const { return labels_; }

 private:
  std::map<std::string, std::vector<TurnSpan>> labels_;
};

/// Splits partial overlaps between different speakers at the overlap
/// midpoint; a span strictly inside another speaker's span keeps its whole
/// extent and splits the outer span around it. Same-speaker spans that
/// touch or overlap are merged. Output is sorted and non-overlapping.
std::vector<TurnSpan> resolve_overlaps(std::vector<TurnSpan> turns);

struct DiarizationResult {
  std::vector<TurnSpan> raw;     // as returned by the adapter
  std::vector<TurnSpan> turns;   // after overlap resolution
  double coverage = 0.0;         // fraction of non-silent audio covered
  std::vector<std::string> diagnostics;
};

/// Runs the adapter and resolves overlaps. Silent input yields an empty
/// result with a diagnostic; adapter failures are rethrown as AdapterError
/// naming the recording.
DiarizationResult diarize(const AudioClip& clip, DiarizationAdapter& adapter,
                          const std::string& recording_id,
                          const SilenceConfig& silence = {});

/// Tag with the largest total speaking time; ties go to the
/// lexicographically smallest tag.
std::string select_learner(const std::vector<TurnSpan>& turns);

struct DialogueVariants {
  AudioClip full;
  AudioClip student_only;
};

/// `clip` is the silence-removed recording; student_only concatenates the
/// learner's spans in temporal order.
DialogueVariants build_variants(const AudioClip& clip,
                                const std::vector<TurnSpan>& turns,
                                const std::string& learner);

enum class Variant { full, student_only };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct AsrSegment {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct AsrOutput {
  std::string text;
  std::vector<AsrSegment> segments;  // empty when no timestamps
};

struct TranscriberDescriptor {
  std::string id;
  std::string version = "1";
  std::string language = "en";
  bool produces_timestamps = false;
  bool reentrant = false;
};

class TranscriptionAdapter {
 public:
  virtual ~TranscriptionAdapter() = default;
  virtual TranscriberDescriptor descriptor() const = 0;
  virtual AsrOutput transcribe(const AudioClip& clip, const std::string& recording_id,
                               Variant variant) = 0;
};

/// Replays stored transcriptions: JSON lines with recording_id, variant
/// (optional, applies to both when absent), text and optional segments.
class ReplayAsr : public TranscriptionAdapter {
 public:
  static ReplayAsr from_file(const std::string& path);
  static ReplayAsr from_string(const std::string& jsonl);

  TranscriberDescriptor descriptor() const override {
    return {"replay-asr", "1", "en", timestamps_, true};
  }
  AsrOutput transcribe(const AudioClip& clip, const std::string& recording_id,
                       Variant variant) override;

 private:
  std::map<std::string, AsrOutput> entries_;  // key: id or id#variant
  bool timestamps_ = false;
};

struct Sentence {
  std::string text;
  std::optional<double> start_s;
  std::optional<double> end_s;
};

struct Transcript {
  std::string recording_id;
  Variant variant = Variant::full;
  std::vector<Sentence> sentences;
  std::string adapter_id;
  std::string adapter_version;
  std::string split_method;  // "adapter-timestamps" or "punctuation"
  std::vector<std::string> diagnostics;

  bool has_timestamps() const;
  nlohmann::json to_json() const;
  static Transcript from_json(const nlohmann::json& j);
};

/// Splits after '.', '!' or '?' when followed by whitespace.
std::vector<std::string> split_sentences(const std::string& text);

Transcript transcribe(const AudioClip& clip, TranscriptionAdapter& adapter,
                      const std::string& recording_id, Variant variant);

enum class WindowMode { one_minute, seven_sentences };

struct TranscriptChunk {
  int index = 0;
  std::vector<Sentence> sentences;
  std::string text() const;
};

/// one_minute groups sentences by floor(start / 60 s); seven_sentences
/// cuts runs of 7 and folds a final run shorter than 4 into the previous
/// chunk.
std::vector<TranscriptChunk> window_transcript(const Transcript& t, WindowMode mode);

struct DialogueOptions {
  SilenceConfig silence;
  std::vector<Variant> variants{Variant::full, Variant::student_only};
  std::size_t jobs = 1;
  int max_retries = 2;
  std::string out_dir;
};

struct DialogueItemReport {
  std::string recording_id;
  bool ok = false;
  int attempts = 0;
  std::string error;
  std::string learner;
};

using DiarizerFactory = std::function<std::unique_ptr<DiarizationAdapter>()>;
using TranscriberFactory = std::function<std::unique_ptr<TranscriptionAdapter>()>;

/// Silence removal, diarization on the cleaned signal, learner selection,
/// variant construction and transcription for every dialogue recording.
/// Writes <out>/<id>.<variant>.wav, <id>.<variant>.transcript.json and
/// <id>.audit.json. Adapter handles are shared between workers only when
/// the adapter declares itself reentrant.
std::vector<DialogueItemReport> run_dialogue(const Manifest& manifest,
                                             const std::string& manifest_dir,
                                             const DiarizerFactory& diarizer,
                                             const TranscriberFactory& asr,
                                             const DialogueOptions& opts);

}  // namespace l2prof
