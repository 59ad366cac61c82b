// report.cpp

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

#include "l2prof/report.hpp"

#include <cstdio>

namespace l2prof {

using nlohmann::json;

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

json ReportTable::to_json() const { return {{"title", title}, {"columns", columns}, {"rows", rows}}; }

ReportTable anglish_table(const std::vector<AnglishRow>& rows) {
  ReportTable t{"Level accuracy (%), single-task vs multi-task", {"Model", "Single-task", "Multi-task"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.model, r.single_task_acc ? format_percent(*r.single_task_acc) : "-",
                      r.multi_task_acc ? format_percent(*r.multi_task_acc) : "-"});
  return t;
}

ReportTable essay_table(const std::vector<EssayRow>& rows) {
  ReportTable t{"Essay classification accuracy (%)", {"Model", "Accuracy"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.model, format_percent(r.accuracy)});
  return t;
}

ReportTable sweep_table(const SweepResult& r) {
  ReportTable t{"Accuracy (%) by token length", {"Model"}, {}};
  for (auto l : r.lengths) t.columns.push_back(std::to_string(l));
  for (std::size_t f = 0; f < r.families.size(); ++f) {
    std::vector<std::string> row{r.families[f]};
    for (double a : r.accuracy[f]) row.push_back(format_percent(a));
    t.rows.push_back(std::move(row));
  }
  return t;
}

ReportTable dialogue_table(const std::vector<DialogueRow>& rows) {
  ReportTable t{"Dialogue proficiency classification (%)",
                {"Modality", "Model", "Input", "Variant", "Accuracy", "Precision", "Recall", "F1"},
                {}};
  for (const auto& r : rows)
    t.rows.push_back({r.modality, r.model, r.input, r.variant, format_percent(r.metrics.accuracy),
                      format_percent(r.metrics.macro_precision), format_percent(r.metrics.macro_recall),
                      format_percent(r.metrics.macro_f1)});
  return t;
}

std::string Report::to_markdown() const {
  std::string out = "# " + name + "\n\n";
  out += "- config hash: `" + config_hash + "`\n";
  std::string seeds_s;
  for (auto s : seeds) seeds_s += (seeds_s.empty() ? "" : ", ") + std::to_string(s);
  out += "- seeds: " + seeds_s + "\n";
  for (const auto& [k, v] : split_hashes) out += "- split " + k + ": `" + v + "`\n";
  for (const auto& f : interpretation_flags) out += "- note: " + f + "\n";
  for (const auto& t : tables) {
    out += "\n## " + t.title + "\n\n|";
    for (const auto& c : t.columns) out += " " + c + " |";
    out += "\n|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
    out += "\n";
    for (const auto& r : t.rows) {
      out += "|";
      for (const auto& c : r) out += " " + c + " |";
      out += "\n";
    }
  }
  return out;
}

json Report::to_json() const {
  json tj = json::array();
  for (const auto& t : tables) tj.push_back(t.to_json());
  return {{"name", name},
          {"config", config},
          {"config_hash", config_hash},
          {"seeds", seeds},
          {"split_hashes", split_hashes},
          {"interpretation_flags", interpretation_flags},
          {"tables", tj},
          {"results", results}};
}

void run_report(const Report& r, const std::string& dir) {
  write_file(dir + "/report.md", r.to_markdown());
  write_file(dir + "/report.json", r.to_json().dump(2) + "\n");
}

}  // namespace l2prof
