// l2prof/report.hpp

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
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/sweep.hpp"
#include "l2prof/train_eval.hpp"

namespace l2prof {

struct ReportTable {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  nlohmann::json to_json() const;
};

/// Speech models, single-task vs multi-task level accuracy.
struct AnglishRow {
  std::string model;
  std::optional<double> single_task_acc, multi_task_acc;
};
ReportTable anglish_table(const std::vector<AnglishRow>& rows);

/// Text classifiers on the essay subset.
struct EssayRow {
  std::string model;
  double accuracy = 0;
};
ReportTable essay_table(const std::vector<EssayRow>& rows);

/// Accuracy per family and token length.
ReportTable sweep_table(const SweepResult& r);

/// Dialogue runs with FA/SA variant tags and macro metrics.
struct DialogueRow {
  std::string modality;  // audio | text
  std::string model;
  std::string input;     // e.g. 30 s, 60 s, 1-min, 7-sent
  std::string variant;   // FA | SA
  Metrics metrics;
};
ReportTable dialogue_table(const std::vector<DialogueRow>& rows);

struct Report {
  std::string name;
  nlohmann::json config;                 // resolved config echo
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> split_hashes;
  std::vector<std::string> interpretation_flags;
  std::vector<ReportTable> tables;
  nlohmann::json results;                // raw numbers

  std::string to_markdown() const;
  nlohmann::json to_json() const;
};

/// Writes <dir>/report.md and <dir>/report.json. Output is a pure
/// function of the report (no timestamps).
void run_report(const Report& r, const std::string& dir);

std::string format_percent(double v);

}  // namespace l2prof
