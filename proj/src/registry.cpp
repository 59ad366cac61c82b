// registry.cpp

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

#include "l2prof/registry.hpp"

#include <cstdlib>

#include "l2prof/common.hpp"

namespace l2prof {

std::string to_string(EntryKind k) { return k == EntryKind::adapter ? "adapter" : "architecture"; }

void Registry::add(RegistryEntry e) {
  if (e.id.empty()) throw InvalidArgument("registry: empty id");
  if (entries_.count(e.id)) throw InvalidArgument("registry: duplicate id '" + e.id + "'");
  const std::string id = e.id;
  entries_.emplace(id, std::move(e));
}

bool Registry::contains(const std::string& id, EntryKind kind) const {
  auto it = entries_.find(id);
  return it != entries_.end() && it->second.kind == kind;
}

const RegistryEntry& Registry::get(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw AdapterError("registry: unknown id '" + id + "'");
  return it->second;
}

std::vector<RegistryEntry> Registry::list() const {
  std::vector<RegistryEntry> out;
  for (const auto& [id, e] : entries_) out.push_back(e);
  return out;
}

std::string Registry::to_text() const {
  std::string out;
  for (const auto& e : list()) {
    out += e.id + "\t" + to_string(e.kind) + "\t" + e.description;
    for (const auto& v : e.env) out += "\t$" + v;
    out += "\n";
  }
  return out;
}

Registry Registry::builtin() {
  Registry r;
  const auto A = EntryKind::adapter, M = EntryKind::architecture;
  r.add({"constant-encoder", A, "speech encoder emitting one fixed vector per hop", {}});
  r.add({"replay-diarizer", A, "diarization turns replayed from a JSONL label file", {kReplayDiarizerEnv}});
  r.add({"replay-asr", A, "transcripts replayed from a JSONL file", {kReplayAsrEnv}});
  r.add({"toy-speech-encoder", A, "small trainable waveform encoder", {}});
  r.add({"hashing-text-encoder", A, "hashed subword embeddings with mixing layers", {}});
  r.add({"cnn2d", M, "2D CNN over log-mel features", {}});
  r.add({"freq-cnn", M, "frequency-axis CNN, time-averaged", {}});
  r.add({"resnet", M, "residual CNN with global average pooling", {}});
  r.add({"speech-encoder", M, "speech encoder + mean pooling + dense heads", {}});
  r.add({"mlp", M, "MLP over frozen text embeddings", {}});
  r.add({"svm-rbf", M, "one-vs-rest RBF SVM over frozen text embeddings", {}});
  r.add({"svm-linear", M, "one-vs-rest linear SVM over frozen text embeddings", {}});
  r.add({"finetuned-text", M, "text encoder with trainable layers + MLP", {}});
  r.add({"bilstm-attn", M, "BiLSTM with additive attention over token embeddings", {}});
  return r;
}

namespace {

std::string resolve_path(const std::string& path, const char* env, const std::string& id) {
  if (!path.empty()) return path;
  const char* v = std::getenv(env);
  if (v == nullptr || *v == '\0')
    throw AdapterError("adapter '" + id + "' needs a label file: set $" + std::string(env));
  return v;
}

}  // namespace

std::unique_ptr<DiarizationAdapter> make_diarizer(const std::string& id, const std::string& path) {
  if (id == "replay-diarizer")
    return std::make_unique<ReplayDiarizer>(ReplayDiarizer::from_file(resolve_path(path, kReplayDiarizerEnv, id)));
  throw AdapterError("unknown diarization adapter '" + id + "'");
}

std::unique_ptr<TranscriptionAdapter> make_transcriber(const std::string& id, const std::string& path) {
  if (id == "replay-asr")
    return std::make_unique<ReplayAsr>(ReplayAsr::from_file(resolve_path(path, kReplayAsrEnv, id)));
  throw AdapterError("unknown transcription adapter '" + id + "'");
}

}  // namespace l2prof
