// l2prof/pipeline.hpp

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

// Config-driven experiment runner: validate -> preprocess -> split -> audit
// -> train -> evaluate -> report, with file-based stage stamps.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/corpus.hpp"
#include "l2prof/registry.hpp"
#include "l2prof/splits.hpp"
#include "l2prof/train_eval.hpp"

namespace l2prof {

class ConfigError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Raised by the audit stage; training never starts after it.
class LeakageError : public Error {
 public:
  explicit LeakageError(LeakageReport r)
      : Error("leakage audit failed: " + r.to_string()), report(std::move(r)) {}
  LeakageReport report;
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::string manifest;  // as written; relative to base_dir
  nlohmann::json preprocess = nlohmann::json::object();
  nlohmann::json split = nlohmann::json::object();
  std::string architecture;
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json schedule = nlohmann::json::object();
  nlohmann::json report = nlohmann::json::object();
  /// Directory relative paths resolve against; not part of the hash.
  std::string base_dir = ".";

  /// Schema check plus registry resolution of every referenced id.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir,
                                    const Registry& reg = Registry::builtin());
  static ExperimentConfig load(const std::string& path, const Registry& reg = Registry::builtin());
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical JSON.
  std::string hash() const;
  std::string resolve(const std::string& rel) const;
};

struct RunOptions {
  std::string out_dir = "out";
  int jobs = 1;
  std::optional<std::uint64_t> seed;  // overrides the config seed
};

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::string input_hash;
  std::string output_digest;
};

/// One trainable unit: a feature segment, a waveform segment or an essay.
struct Unit {
  std::string id;
  std::string item_id;
  std::string speaker;
  int level = 0;
  int gender = 0;
  std::string path;  // feature/waveform file; the essay text for text units
};

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, RunOptions opts, Registry reg = Registry::builtin());

  static const std::vector<std::string>& stage_names();

  /// Runs `stage` after all of its predecessors; completed stages whose
  /// inputs are unchanged are skipped.
  std::vector<StageResult> run_until(const std::string& stage);
  std::vector<StageResult> run() { return run_until("report"); }

  const ExperimentConfig& config() const { return cfg_; }
  std::string config_hash() const { return cfg_.hash(); }
  const std::string& out_dir() const { return opts_.out_dir; }

 private:
  StageResult stage(const std::string& name, const std::string& prev_digest);
  std::string do_validate();
  std::string do_preprocess();
  std::string do_split();
  std::string do_audit();
  std::string do_train();
  std::string do_evaluate();
  std::string do_report();
  std::string input_hash(const std::string& name, const std::string& prev_digest) const;
  std::string path(const std::string& rel) const;
  const Manifest& manifest();
  std::vector<Unit> units();

  ExperimentConfig cfg_;
  RunOptions opts_;
  Registry reg_;
  std::optional<Manifest> manifest_;
};

/// Synthetic ANGLISH-style corpus: `speakers` speakers balanced over
/// (gender, level), level-dependent tones, WAV files plus manifest.jsonl
/// under `dir`. Returns the manifest path.
std::string write_synthetic_fixture(const std::string& dir, std::size_t speakers = 12,
                                    std::size_t recordings_per_speaker = 2, double seconds = 2.0,
                                    std::uint64_t seed = 0);

/// Smoke experiment over the synthetic fixture: tiny CNN, 3 epochs.
nlohmann::json smoke_config(const std::string& manifest_path);

}  // namespace l2prof
