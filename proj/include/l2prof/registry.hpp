// l2prof/registry.hpp

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
#include <memory>
#include <string>
#include <vector>

#include "l2prof/dialogue.hpp"

namespace l2prof {

enum class EntryKind { adapter, architecture };
std::string to_string(EntryKind k);

struct RegistryEntry {
  std::string id;
  EntryKind kind = EntryKind::adapter;
  std::string description;
  /// Environment variables the entry reads (paths, credentials).
  std::vector<std::string> env;
};

class Registry {
 public:
  /// Throws InvalidArgument on a duplicate id.
  void add(RegistryEntry e);
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  bool contains(const std::string& id, EntryKind kind) const;
  /// Throws AdapterError naming the id when it is not registered.
  const RegistryEntry& get(const std::string& id) const;
  /// All entries, sorted by id.
  std::vector<RegistryEntry> list() const;
  std::string to_text() const;

  /// Adapters and architectures shipped with the library.
  static Registry builtin();

 private:
  std::map<std::string, RegistryEntry> entries_;
};

inline constexpr const char* kReplayDiarizerEnv = "L2PROF_REPLAY_DIARIZER";
inline constexpr const char* kReplayAsrEnv = "L2PROF_REPLAY_ASR";

/// Builds a diarizer for an adapter id; replay labels come from `path`, or
/// from the adapter's environment variable when `path` is empty.
std::unique_ptr<DiarizationAdapter> make_diarizer(const std::string& id, const std::string& path = "");
std::unique_ptr<TranscriptionAdapter> make_transcriber(const std::string& id, const std::string& path = "");

}  // namespace l2prof
