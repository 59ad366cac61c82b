// tools/l2prof.cpp

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

// Command-line front end. Exit codes: 0 ok, 1 runtime failure, 2 bad
// input or config, 3 leakage audit failure, 4 adapter failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "l2prof/corpus.hpp"
#include "l2prof/dialogue.hpp"
#include "l2prof/dsp.hpp"
#include "l2prof/pipeline.hpp"
#include "l2prof/registry.hpp"
#include "l2prof/report.hpp"
#include "l2prof/splits.hpp"
#include "l2prof/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace l2prof;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int jobs = 1;
  std::uint64_t seed_or(std::uint64_t d) const { return seed.value_or(d); }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string manifest_dir(const std::string& path) {
  const auto d = fs::path(path).parent_path();
  return d.empty() ? "." : d.string();
}

int run_stage(const Globals& g, const std::string& config, const std::string& stage) {
  Pipeline p(ExperimentConfig::load(config), RunOptions{g.out, g.jobs, g.seed});
  for (const auto& r : p.run_until(stage))
    std::cout << r.stage << "\t" << (r.skipped ? "skipped" : "done") << "\t" << r.output_digest << "\n";
  std::cout << "config_hash\t" << p.config_hash() << "\n";
  return 0;
}

void write_out(const Globals& g, const std::string& name, const std::string& contents) {
  const std::string p = (fs::path(g.out) / name).string();
  write_file(p, contents);
  std::cout << p << "\n";
}

int cmd_dsp_extract(const Globals& g, const std::string& mpath, double seg_s, int n_mels, const std::string& norm) {
  const Manifest m = load_manifest(mpath);
  validate(m);
  FbankConfig fb;
  fb.n_mels = n_mels;
  fb.validate();
  const NormScope scope = parse_norm_scope(norm);
  std::vector<std::pair<std::string, FeatureMatrix<float>>> feats;
  std::vector<json> headers;
  for (const auto& item : m.items) {
    const auto* r = std::get_if<Recording>(&item);
    if (!r) throw InvalidArgument("dsp extract: manifest holds essays, not recordings");
    const fs::path p(r->path);
    AudioClip clip = read_wav(p.is_absolute() ? r->path : (fs::path(manifest_dir(mpath)) / p).string());
    clip = resample(clip, kModelSampleRate);
    clip.span = SourceSpan{r->id, 0.0, clip.duration_s()};
    for (const auto& seg : segment(clip, seg_s)) {
      feats.emplace_back(r->id + "." + std::to_string(seg.index), fbank<float>(seg.clip, fb));
      headers.push_back({{"recording", r->id},
                         {"segment", seg.index},
                         {"span", {seg.clip.span->start_s, seg.clip.span->end_s}},
                         {"padded_samples", seg.padded_samples},
                         {"normalize", to_string(scope)},
                         {"fbank", fb.to_json()}});
    }
  }
  NormStats<float> stats;
  if (scope == NormScope::corpus_stats) {
    std::vector<FeatureMatrix<float>> all;
    for (const auto& [id, f] : feats) all.push_back(f);
    stats = compute_norm_stats<float>(std::span<const FeatureMatrix<float>>(all));
  }
  json index = json::array();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto z = zscore(feats[i].second, scope, scope == NormScope::corpus_stats ? &stats : nullptr);
    const std::string rel = feats[i].first + ".l2fb";
    write_feature_file((fs::path(g.out) / rel).string(), z, headers[i]);
    index.push_back({{"file", rel}, {"frames", z.frames()}, {"bins", z.bins()}});
  }
  write_out(g, "index.json", index.dump(2) + "\n");
  return 0;
}

int cmd_dialogue(const Globals& g, const std::string& mpath, const std::string& diar, const std::string& asr,
                 const std::string& variants, const std::string& diar_labels, const std::string& asr_labels) {
  const Registry reg = Registry::builtin();
  if (!reg.contains(diar, EntryKind::adapter)) throw AdapterError("unknown diarizer '" + diar + "'");
  if (!reg.contains(asr, EntryKind::adapter)) throw AdapterError("unknown ASR adapter '" + asr + "'");
  const Manifest m = load_manifest(mpath);
  validate(m);
  DialogueOptions o;
  o.variants.clear();
  for (const auto& v : split_csv(variants)) o.variants.push_back(parse_variant(v));
  o.jobs = static_cast<std::size_t>(g.jobs);
  o.out_dir = g.out;
  make_diarizer(diar, diar_labels);  // fail fast on a missing label file
  make_transcriber(asr, asr_labels);
  const auto reports = run_dialogue(
      m, manifest_dir(mpath), [&] { return make_diarizer(diar, diar_labels); },
      [&] { return make_transcriber(asr, asr_labels); }, o);
  int failed = 0;
  for (const auto& r : reports) {
    std::cout << r.recording_id << "\t" << (r.ok ? "ok" : "failed") << "\t" << r.attempts << "\t"
              << (r.ok ? r.learner : r.error) << "\n";
    failed += !r.ok;
  }
  return failed ? 1 : 0;
}

SweepData sweep_data_from(const Manifest& m, const SplitAssignment& s) {
  SweepData d;
  d.num_classes = static_cast<int>(m.scheme.num_classes());
  for (const auto& item : m.items) {
    const auto* e = std::get_if<Essay>(&item);
    if (!e) throw InvalidArgument("sweep: manifest holds recordings, not essays");
    auto in = [&](const IdSet& set) { return set.count(e->id) || set.count(e->learner_id); };
    TextSplit* t = in(s.train) ? &d.train : in(s.val) ? &d.val : in(s.test) ? &d.test : nullptr;
    if (!t) continue;
    t->ids.push_back(e->id);
    t->texts.push_back(e->text);
    t->labels.push_back(static_cast<int>(m.scheme.index_of(m.item_level(item))));
  }
  return d;
}

int cmd_sweep(const Globals& g, const std::string& mpath, const std::string& split_path, bool planted,
              const std::string& families, long dim, long layers) {
  SweepData data;
  const std::uint64_t seed = g.seed_or(0);
  if (planted) {
    data = planted_marker_default(seed);
  } else {
    if (mpath.empty() || split_path.empty()) throw InvalidArgument("sweep: need --manifest and --split, or --planted");
    const Manifest m = load_manifest(mpath);
    validate(m);
    const SplitAssignment s = load_split(split_path);
    const LeakageReport leak = audit_leakage(s, m);
    if (!leak.clean()) throw LeakageError(leak);
    data = sweep_data_from(m, s);
  }
  SweepSettings st;
  if (planted) {
    st = planted_sweep_settings(dim, seed, g.jobs);
  } else {
    st.jobs = g.jobs;
    st.mlp.layer_sizes = {dim, 128, data.num_classes};
    st.mlp.seed = st.svm.seed = seed;
  }
  auto factory = [dim, layers, seed] {
    typename models::HashingTextEncoder<double>::Options o;
    o.dim = dim;
    o.layers = layers;
    o.seed = seed;
    return std::make_shared<models::HashingTextEncoder<double>>(o);
  };
  const SweepResult r = token_length_sweep(factory, split_csv(families), data, st);
  Report rep;
  rep.name = planted ? "Token-length sweep (planted marker)" : "Token-length sweep";
  rep.config = {{"families", families}, {"encoder_dim", dim}, {"layers", layers}, {"planted", planted}};
  rep.config_hash = hex64(fnv1a(rep.config.dump()));
  rep.seeds = {seed};
  rep.tables.push_back(sweep_table(r));
  rep.results = r.to_json();
  run_report(rep, g.out);
  std::cout << rep.to_markdown();
  return 0;
}

int main_impl(int argc, char** argv) {
  CLI::App app{"L2 proficiency classification experiments"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override the experiment seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.fallthrough();

  std::string config;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"validate", "Check the config and its manifest"},
      {"preprocess", "Extract features for the config's corpus"},
      {"split", "Build the train/val/test split"},
      {"train", "Train the configured model (audits the split first)"},
      {"evaluate", "Score the trained model on the test partition"},
      {"report", "Write report.md and report.json"},
      {"run", "Run the full pipeline"}};
  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& [name, help] : stages) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    stage_cmds[name] = c;
  }

  auto* reg_cmd = app.add_subcommand("registry", "Adapter and architecture registry");
  reg_cmd->add_subcommand("list", "List registered ids");
  reg_cmd->require_subcommand(1);

  std::size_t synth_speakers = 12;
  auto* synth = app.add_subcommand("synth", "Write the synthetic speaker fixture and a smoke config");
  synth->add_option("--speakers", synth_speakers, "Speaker count (multiple of 6)");

  std::string mpath;
  auto* corpus = app.add_subcommand("corpus", "Manifest tools");
  corpus->require_subcommand(1);
  auto* c_validate = corpus->add_subcommand("validate", "Validate a manifest");
  c_validate->add_option("manifest", mpath)->required()->check(CLI::ExistingFile);
  bool by_level = false;
  auto* c_stats = corpus->add_subcommand("stats", "Corpus statistics");
  c_stats->add_option("manifest", mpath)->required()->check(CLI::ExistingFile);
  c_stats->add_flag("--by-level", by_level, "Per-level breakdown");

  double seg_s = 8.0;
  int n_mels = 40;
  std::string norm = "per-utterance";
  auto* dsp = app.add_subcommand("dsp", "Signal front-end");
  dsp->require_subcommand(1);
  auto* extract = dsp->add_subcommand("extract", "Segment and extract log-mel features");
  extract->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  extract->add_option("--segment-seconds", seg_s);
  extract->add_option("--n-mels", n_mels);
  extract->add_option("--normalize", norm)->check(CLI::IsMember({"per-utterance", "corpus-stats"}));

  std::string diar = "replay-diarizer", asr = "replay-asr", variants = "full,student_only", diar_labels, asr_labels;
  auto* dialogue = app.add_subcommand("dialogue", "Dialogue preprocessing");
  dialogue->require_subcommand(1);
  auto* d_run = dialogue->add_subcommand("run", "Silence removal, diarization, variants and transcripts");
  d_run->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  d_run->add_option("--diarizer", diar);
  d_run->add_option("--asr", asr);
  d_run->add_option("--variants", variants);
  d_run->add_option("--diarizer-labels", diar_labels, "Replay labels (else $" + std::string(kReplayDiarizerEnv) + ")");
  d_run->add_option("--asr-labels", asr_labels, "Replay transcripts (else $" + std::string(kReplayAsrEnv) + ")");

  int k = 10;
  bool holdout = false;
  std::size_t n_train = 2000, n_val = 200, n_test = 200;
  std::string granularity = "speaker", split_path;
  DurationMatchOptions dur;
  auto* splits = app.add_subcommand("splits", "Split protocols");
  splits->require_subcommand(1);
  auto* s_kfold = splits->add_subcommand("kfold", "Stratified speaker k-fold");
  s_kfold->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  s_kfold->add_option("--k", k);
  s_kfold->add_flag("--holdout", holdout, "Exclude a one-per-(gender, level) test set first");
  auto* s_holdout = splits->add_subcommand("holdout", "One test speaker per (gender, level) cell");
  s_holdout->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  auto* s_subset = splits->add_subcommand("subset", "Stratified fixed-size subset");
  s_subset->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  s_subset->add_option("--train", n_train);
  s_subset->add_option("--val", n_val);
  s_subset->add_option("--test", n_test);
  s_subset->add_option("--granularity", granularity)->check(CLI::IsMember({"speaker", "item"}));
  auto* s_dur = splits->add_subcommand("duration-match", "Duration-matched speaker partition");
  s_dur->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  s_dur->add_option("--per-level-count", dur.per_level_count);
  s_dur->add_option("--reference-level", dur.reference_level);
  s_dur->add_option("--fraction", dur.fraction);
  s_dur->add_option("--budget", dur.budget);
  auto* s_audit = splits->add_subcommand("audit", "Speaker leakage audit");
  s_audit->add_option("--manifest", mpath)->required()->check(CLI::ExistingFile);
  s_audit->add_option("--split", split_path)->required()->check(CLI::ExistingFile);

  bool planted = false;
  std::string families = "svm,mlp,finetuned";
  long dim = 64, layers = 2;
  auto* sweep = app.add_subcommand("sweep", "Token-length sweep over text families");
  sweep->add_option("--manifest", mpath)->check(CLI::ExistingFile);
  sweep->add_option("--split", split_path)->check(CLI::ExistingFile);
  sweep->add_flag("--planted", planted, "Use the planted-marker synthetic corpus");
  sweep->add_option("--families", families);
  sweep->add_option("--encoder-dim", dim);
  sweep->add_option("--layers", layers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version come through here with a zero code.
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (seed_opt->count()) g.seed = seed_value;

  for (const auto& [name, cmd] : stage_cmds)
    if (cmd->parsed()) return run_stage(g, config, name == "run" ? "report" : name);

  if (reg_cmd->parsed()) {
    std::cout << Registry::builtin().to_text();
    return 0;
  }
  if (synth->parsed()) {
    const std::string mp = write_synthetic_fixture(g.out, synth_speakers, 2, 2.0, g.seed_or(0));
    json cfg = smoke_config("manifest.jsonl");
    if (g.seed) cfg["seed"] = *g.seed;
    write_file((fs::path(g.out) / "smoke.json").string(), cfg.dump(2) + "\n");
    std::cout << mp << "\n" << (fs::path(g.out) / "smoke.json").string() << "\n";
    return 0;
  }
  if (c_validate->parsed()) {
    validate(load_manifest(mpath));
    std::cout << "ok\n";
    return 0;
  }
  if (c_stats->parsed()) {
    const Manifest m = load_manifest(mpath);
    validate(m);
    const CorpusStats s = corpus_stats(m);
    if (by_level) std::cout << format_stats(m, s);
    else std::cout << "items " << s.overall.item_count << "\tspeakers " << s.overall.speaker_count << "\n";
    return 0;
  }
  if (extract->parsed()) return cmd_dsp_extract(g, mpath, seg_s, n_mels, norm);
  if (d_run->parsed()) return cmd_dialogue(g, mpath, diar, asr, variants, diar_labels, asr_labels);
  if (sweep->parsed()) return cmd_sweep(g, mpath, split_path, planted, families, dim, layers);

  const Manifest m = load_manifest(mpath);
  validate(m);
  const std::uint64_t seed = g.seed_or(0);
  if (s_kfold->parsed()) {
    const IdSet test = holdout ? fixed_test_holdout(m, derive_seed(seed, 1)) : IdSet{};
    write_out(g, "folds.json", stratified_kfold(m, k, seed, test).to_json().dump(2) + "\n");
  } else if (s_holdout->parsed()) {
    write_out(g, "holdout.json", json(fixed_test_holdout(m, seed)).dump(2) + "\n");
  } else if (s_subset->parsed()) {
    const auto s = stratified_subset(m, {n_train, n_val, n_test}, seed,
                                     granularity == "item" ? Granularity::item : Granularity::speaker);
    save_split(s, (fs::path(g.out) / "split.json").string());
    std::cout << s.hash() << "\n";
  } else if (s_dur->parsed()) {
    const auto s = duration_matched_partition(m, dur, seed);
    save_split(s, (fs::path(g.out) / "split.json").string());
    for (const auto& d : s.diagnostics) std::cerr << d << "\n";
    std::cout << s.hash() << "\n";
  } else if (s_audit->parsed()) {
    const LeakageReport r = audit_leakage(load_split(split_path), m);
    if (!r.clean()) throw LeakageError(r);
    std::cout << "clean\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return main_impl(argc, argv);
  } catch (const LeakageError& e) {
    std::cerr << "audit: " << e.what();
    return 3;
  } catch (const AdapterError& e) {
    std::cerr << "adapter error: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SchemeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
