// tests/test_cli.cpp

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
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "l2prof/pipeline.hpp"
#include "l2prof/registry.hpp"
#include "l2prof/splits.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace l2prof;

namespace {

struct Outcome {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

Outcome cli(const std::string& args, const std::string& cwd) {
  const std::string cmd = "cd '" + cwd + "' && '" + std::string(L2PROF_CLI) + "' " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) o.out.append(buf, n);
  const int st = pclose(p);
  o.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return o;
}

/// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("l2prof_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json smoke(const fs::path& dir) {
  write_synthetic_fixture(dir.string());
  return smoke_config("manifest.jsonl");
}

void write_json(const fs::path& p, const json& j) { write_file(p.string(), j.dump(2) + "\n"); }

}  // namespace

TEST(Registry, SortedAndDuplicateSafe) {
  const auto list = Registry::builtin().list();
  ASSERT_FALSE(list.empty());
  for (std::size_t i = 1; i < list.size(); ++i) EXPECT_LT(list[i - 1].id, list[i].id);
  Registry r;
  r.add({"x", EntryKind::adapter, "", {}});
  EXPECT_THROW(r.add({"x", EntryKind::architecture, "", {}}), InvalidArgument);
  EXPECT_THROW(Registry::builtin().get("wav2vec2-base"), AdapterError);
  EXPECT_TRUE(Registry::builtin().contains("replay-diarizer", EntryKind::adapter));
  EXPECT_FALSE(Registry::builtin().contains("replay-diarizer", EntryKind::architecture));
  EXPECT_THROW(make_diarizer("nope"), AdapterError);
}

TEST(Cli, RegistryListPrintsEveryId) {
  const auto o = cli("registry list", fs::temp_directory_path().string());
  EXPECT_EQ(o.code, 0);
  for (const auto& e : Registry::builtin().list()) EXPECT_NE(o.out.find(e.id), std::string::npos) << e.id;
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto d = scratch("usage");
  EXPECT_EQ(cli("", d.string()).code, 2);
  EXPECT_EQ(cli("frobnicate", d.string()).code, 2);
  EXPECT_EQ(cli("run missing.json", d.string()).code, 2);
}

TEST(Cli, ConfigSchemaErrors) {
  const auto d = scratch("schema");
  auto cfg = smoke(d);
  cfg["split"]["colour"] = "blue";
  write_json(d / "bad_key.json", cfg);
  const auto o = cli("validate bad_key.json", d.string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("colour"), std::string::npos) << o.out;

  cfg = smoke(d);
  cfg["model"]["architecture"] = "transformer-xl";
  write_json(d / "bad_arch.json", cfg);
  const auto a = cli("validate bad_arch.json", d.string());
  EXPECT_EQ(a.code, 4);
  EXPECT_NE(a.out.find("transformer-xl"), std::string::npos) << a.out;

  cfg = smoke(d);
  cfg.erase("model");
  write_json(d / "no_model.json", cfg);
  EXPECT_EQ(cli("validate no_model.json", d.string()).code, 2);

  cfg = smoke(d);
  cfg["seed"] = -1;
  write_json(d / "neg_seed.json", cfg);
  EXPECT_EQ(cli("validate neg_seed.json", d.string()).code, 2);
  EXPECT_NO_THROW(ExperimentConfig::from_json(smoke(d), d.string()));

  write_file((d / "not_json.json").string(), "{ nope");
  EXPECT_EQ(cli("validate not_json.json", d.string()).code, 2);
}

TEST(Cli, PlantedLeakRefusesToTrain) {
  const auto d = scratch("leak");
  auto cfg = smoke(d);
  const Manifest m = load_manifest((d / "manifest.jsonl").string());
  SplitAssignment s;
  s.granularity = Granularity::speaker;
  for (std::size_t i = 0; i < m.speakers.size(); ++i)
    (i < 8 ? s.train : i < 10 ? s.val : s.test).insert(m.speakers[i].id);
  const std::string leaked = m.speakers[3].id;
  s.test.insert(leaked);
  save_split(s, (d / "leak_split.json").string());
  cfg["split"] = {{"protocol", "file"}, {"path", "leak_split.json"}};
  write_json(d / "leak.json", cfg);
  const auto o = cli("--out out run leak.json", d.string());
  EXPECT_EQ(o.code, 3) << o.out;
  EXPECT_NE(o.out.find(leaked), std::string::npos) << o.out;
  EXPECT_FALSE(fs::exists(d / "out" / "model.ckpt"));

  const auto audit = cli("splits audit --manifest manifest.jsonl --split leak_split.json", d.string());
  EXPECT_EQ(audit.code, 3);
  EXPECT_NE(audit.out.find(leaked), std::string::npos);
}

TEST(Cli, RerunIsByteIdenticalAndSkipsStages) {
  const auto d = scratch("rerun");
  write_json(d / "smoke.json", smoke(d));
  const auto first = cli("--out a run smoke.json", d.string());
  ASSERT_EQ(first.code, 0) << first.out;
  const auto second = cli("--out b run smoke.json", d.string());
  ASSERT_EQ(second.code, 0) << second.out;
  for (const auto* f : {"report/report.md", "report/report.json", "metrics.json", "predictions.csv", "history.csv",
                        "split.json", "model.ckpt"})
    EXPECT_EQ(read_file((d / "a" / f).string()), read_file((d / "b" / f).string())) << f;
  EXPECT_EQ(first.out, second.out);

  const auto again = cli("--out a run smoke.json", d.string());
  EXPECT_EQ(again.code, 0);
  EXPECT_EQ(again.out.find("done"), std::string::npos) << again.out;
  EXPECT_NE(again.out.find("report\tskipped"), std::string::npos);

  // A changed seed invalidates every stage.
  const auto reseeded = cli("--seed 99 --out a run smoke.json", d.string());
  EXPECT_EQ(reseeded.code, 0);
  EXPECT_NE(reseeded.out.find("validate\tdone"), std::string::npos) << reseeded.out;
}

TEST(Cli, PartialRunStopsAtTheStage) {
  const auto d = scratch("partial");
  write_json(d / "smoke.json", smoke(d));
  const auto o = cli("--out out split smoke.json", d.string());
  EXPECT_EQ(o.code, 0) << o.out;
  EXPECT_TRUE(fs::exists(d / "out" / "split.json"));
  EXPECT_FALSE(fs::exists(d / "out" / "model.ckpt"));
  const auto rest = cli("--out out run smoke.json", d.string());
  EXPECT_NE(rest.out.find("split\tskipped"), std::string::npos) << rest.out;
  EXPECT_NE(rest.out.find("train\tdone"), std::string::npos);
}

TEST(Cli, CorpusAndSplitCommands) {
  const auto d = scratch("tools");
  smoke(d);
  EXPECT_EQ(cli("corpus validate manifest.jsonl", d.string()).code, 0);
  const auto st = cli("corpus stats manifest.jsonl --by-level", d.string());
  EXPECT_EQ(st.code, 0);
  EXPECT_NE(st.out.find("| NES |"), std::string::npos) << st.out;
  EXPECT_EQ(cli("--out k splits kfold --manifest manifest.jsonl --k 3", d.string()).code, 0);
  const json folds = json::parse(read_file((d / "k" / "folds.json").string()));
  EXPECT_EQ(folds["folds"].size(), 3u);
  write_file((d / "broken.jsonl").string(), "{\"type\":\"speaker\"}\n");
  EXPECT_EQ(cli("corpus validate broken.jsonl", d.string()).code, 2);
}
