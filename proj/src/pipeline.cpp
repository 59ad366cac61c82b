// pipeline.cpp

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

#include "l2prof/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "l2prof/audio.hpp"
#include "l2prof/dialogue.hpp"
#include "l2prof/dsp.hpp"
#include "l2prof/models/conv.hpp"
#include "l2prof/models/speech.hpp"
#include "l2prof/models/svm.hpp"
#include "l2prof/models/text.hpp"
#include "l2prof/report.hpp"
#include "l2prof/work_queue.hpp"

namespace l2prof {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kFeatureArchs = {"cnn2d", "freq-cnn", "resnet"};


std::string input_family(const std::string& arch) {
  if (kFeatureArchs.count(arch)) return "features";
  if (arch == "speech-encoder") return "waveform";
  return "text";
}

std::string hash_str(const std::string& s) { return hex64(fnv1a(s)); }

std::string file_hash(const std::string& path) { return hash_str(read_file(path)); }

void require_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

std::string safe_name(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::string& base_dir, const Registry& reg) {
  require_keys(j, "config", {"name", "seed", "corpus", "preprocess", "split", "model", "schedule", "report"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("config: 'name' (string) is required");
    c.name = j["name"].get<std::string>();
    if (!j.contains("seed") || !j["seed"].is_number_integer() ||
        (!j["seed"].is_number_unsigned() && j["seed"].get<std::int64_t>() < 0))
      throw ConfigError("config: 'seed' (non-negative integer) is required");
    c.seed = j["seed"].get<std::uint64_t>();
    if (!j.contains("corpus")) throw ConfigError("config: 'corpus' block is required");
    require_keys(j["corpus"], "corpus", {"manifest"});
    if (!j["corpus"].contains("manifest")) throw ConfigError("corpus: 'manifest' is required");
    c.manifest = j["corpus"]["manifest"].get<std::string>();
    if (!j.contains("model")) throw ConfigError("config: 'model' block is required");
    c.model = j["model"];
    if (!c.model.is_object() || !c.model.contains("architecture"))
      throw ConfigError("model: 'architecture' is required");
    c.architecture = c.model["architecture"].get<std::string>();
    c.model.erase("architecture");
    c.preprocess = j.value("preprocess", json::object());
    c.split = j.value("split", json{{"protocol", "kfold"}});
    c.schedule = j.value("schedule", json::object());
    c.report = j.value("report", json::object());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require_keys(c.preprocess, "preprocess",
               {"segment_seconds", "fbank", "normalize", "remove_silence", "silence", "max_tokens"});
  require_keys(c.split, "split",
               {"protocol", "seed", "k", "fold", "holdout_test", "path", "train", "val", "test", "granularity",
                "per_level_count", "reference_level", "fraction", "budget"});
  require_keys(c.report, "report", {"title"});
  if (!reg.contains(c.architecture, EntryKind::architecture))
    throw AdapterError("unknown architecture '" + c.architecture + "'");
  if (c.model.contains("encoder")) {
    const json& e = c.model["encoder"];
    const std::string id = e.is_string() ? e.get<std::string>() : e.value("id", std::string());
    if (!reg.contains(id, EntryKind::adapter)) throw AdapterError("unknown encoder adapter '" + id + "'");
  }
  const std::string protocol = c.split.value("protocol", std::string("kfold"));
  static const std::set<std::string> protocols = {"kfold", "subset", "duration", "file"};
  if (!protocols.count(protocol)) throw ConfigError("split: unknown protocol '" + protocol + "'");
  if (protocol == "file" && !c.split.contains("path")) throw ConfigError("split: protocol 'file' needs 'path'");
  try {
    TrainSchedule::from_json(c.schedule);
    FbankConfig::from_json(c.preprocess.value("fbank", json::object())).validate();
    parse_norm_scope(c.preprocess.value("normalize", std::string("per-utterance")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const Registry& reg) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const auto dir = fs::path(path).parent_path();
  return from_json(j, dir.empty() ? "." : dir.string(), reg);
}

json ExperimentConfig::to_json() const {
  json m = model;
  m["architecture"] = architecture;
  return {{"name", name},           {"seed", seed},         {"corpus", {{"manifest", manifest}}},
          {"preprocess", preprocess}, {"split", split},      {"model", m},
          {"schedule", schedule},   {"report", report}};
}

std::string ExperimentConfig::hash() const { return hash_str(to_json().dump()); }

std::string ExperimentConfig::resolve(const std::string& rel) const {
  const fs::path p(rel);
  return p.is_absolute() ? rel : (fs::path(base_dir) / p).string();
}

// ---------------------------------------------------------------- models

namespace {

struct ModelSpec {
  std::string arch;
  json model;
  Index num_classes = 3;
  Index frames = 0, n_mels = 40;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 512;
};

std::shared_ptr<models::HashingTextEncoder<double>> text_encoder(const ModelSpec& s) {
  const json e = s.model.value("encoder", json::object());
  typename models::HashingTextEncoder<double>::Options o;
  if (e.is_object()) {
    o.dim = e.value("dim", o.dim);
    o.layers = e.value("layers", o.layers);
  }
  o.seed = derive_seed(s.seed, 3);
  return std::make_shared<models::HashingTextEncoder<double>>(o);
}

models::MlpConfig mlp_config(const ModelSpec& s, Index in) {
  models::MlpConfig m;
  m.layer_sizes = {in};
  for (auto h : s.model.value("hidden", std::vector<Index>{128})) m.layer_sizes.push_back(h);
  m.layer_sizes.push_back(s.num_classes);
  m.dropout_p = s.model.value("dropout_p", m.dropout_p);
  m.seed = s.seed;
  return m;
}

RowMatrixX<double> load_features(const Unit& u) {
  return read_feature_file(u.path).features.values.cast<double>();
}

/// Builds the network for `s` and calls fn(model, loader).
template <typename Fn>
void with_network(const ModelSpec& s, Fn&& fn) {
  if (s.arch == "cnn2d") {
    auto c = models::Cnn2dConfig::from_json(s.model);
    c.frames = s.frames, c.n_mels = s.n_mels, c.num_classes = s.num_classes, c.seed = s.seed;
    auto m = models::make_cnn2d<double>(c);
    fn(m, load_features);
  } else if (s.arch == "freq-cnn") {
    auto c = models::FreqCnnConfig::from_json(s.model);
    c.frames = s.frames, c.n_mels = s.n_mels, c.num_classes = s.num_classes, c.seed = s.seed;
    auto m = models::make_freq_cnn<double>(c);
    fn(m, load_features);
  } else if (s.arch == "resnet") {
    auto c = models::ResNetConfig::from_json(s.model);
    c.frames = s.frames, c.n_mels = s.n_mels, c.num_classes = s.num_classes, c.seed = s.seed;
    auto m = models::make_resnet<double>(c);
    fn(m, load_features);
  } else if (s.arch == "speech-encoder") {
    json mj = s.model;
    std::string enc_id = "toy-speech-encoder";
    json eo = json::object();
    if (mj.contains("encoder")) {
      if (mj["encoder"].is_string()) {
        enc_id = mj["encoder"].get<std::string>();
      } else {
        eo = mj["encoder"];
        enc_id = eo.value("id", enc_id);
      }
      mj["encoder"] = enc_id;
    }
    auto c = models::SpeechEncoderConfig::from_json(mj);
    c.seed = s.seed;
    for (auto& h : c.heads) h.num_classes = h.name == "gender" ? 2 : s.num_classes;
    std::unique_ptr<models::SpeechEncoder<double>> enc;
    if (enc_id == "toy-speech-encoder") {
      typename models::ToySpeechEncoder<double>::Options o;
      o.dim = c.encoder_dim;
      o.feature_dim = eo.value("feature_dim", o.feature_dim);
      o.window = eo.value("window", o.window);
      o.hop = eo.value("hop", o.hop);
      o.seed = derive_seed(s.seed, 4);
      enc = std::make_unique<models::ToySpeechEncoder<double>>(o);
    } else if (enc_id == "constant-encoder") {
      enc = std::make_unique<models::ConstantEncoder<double>>(VectorX<double>::Ones(c.encoder_dim));
    } else {
      throw AdapterError("speech-encoder: unsupported encoder '" + enc_id + "'");
    }
    auto m = models::make_speech_classifier<double>(c, std::move(enc));
    fn(m, [](const Unit& u) -> VectorX<double> {
      return read_feature_file(u.path).features.values.row(0).cast<double>().transpose();
    });
  } else if (s.arch == "mlp") {
    auto enc = text_encoder(s);
    auto m = models::make_mlp<double>(mlp_config(s, enc->dim()));
    const std::size_t mt = s.max_tokens;
    fn(m, [enc, mt](const Unit& u) -> VectorX<double> { return enc->pooled(enc->encode(u.path, mt)); });
  } else if (s.arch == "finetuned-text") {
    auto enc = text_encoder(s);
    std::vector<bool> mask = s.model.value("trainable_layers", std::vector<bool>{});
    if (mask.empty()) {
      mask.assign(static_cast<std::size_t>(enc->num_layers()), false);
      mask.back() = true;
    }
    auto m = models::make_finetuned_text<double>(enc, mask, mlp_config(s, enc->dim()));
    const std::size_t mt = s.max_tokens;
    fn(m, [enc, mt](const Unit& u) -> models::TokenIds { return enc->encode(u.path, mt); });
  } else if (s.arch == "bilstm-attn") {
    auto enc = text_encoder(s);
    models::BilstmAttnConfig c;
    c.input_dim = enc->dim();
    c.hidden = s.model.value("hidden", c.hidden);
    c.attention_dim = s.model.value("attention_dim", c.attention_dim);
    c.num_classes = s.num_classes;
    c.seed = s.seed;
    auto m = models::make_bilstm_attn<double>(c);
    const std::size_t mt = s.max_tokens;
    fn(m, [enc, mt](const Unit& u) -> MatrixX<double> { return enc->sequence_output(enc->encode(u.path, mt)); });
  } else {
    throw AdapterError("architecture '" + s.arch + "' is not a network");
  }
}

template <typename Model>
std::vector<int> targets_for(Model& m, const Unit& u) {
  std::vector<int> t;
  for (std::size_t h = 0; h < m.num_heads(); ++h) {
    const auto& name = m.head(h).name;
    if (name == "gender") t.push_back(u.gender);
    else t.push_back(u.level);
  }
  return t;
}

models::SvmConfig svm_config(const ModelSpec& s) {
  auto c = models::SvmConfig::from_json(s.model);
  c.mode = s.arch == "svm-linear" ? models::SvmMode::linear : models::SvmMode::rbf;
  c.seed = s.seed;
  return c;
}

MatrixX<double> pooled_rows(const ModelSpec& s, const std::vector<const Unit*>& us) {
  auto enc = text_encoder(s);
  MatrixX<double> x(static_cast<Index>(us.size()), enc->dim());
  for (std::size_t i = 0; i < us.size(); ++i)
    x.row(static_cast<Index>(i)) = enc->pooled(enc->encode(us[i]->path, s.max_tokens)).transpose();
  return x;
}

}  // namespace

// ---------------------------------------------------------------- pipeline

Pipeline::Pipeline(ExperimentConfig cfg, RunOptions opts, Registry reg)
    : cfg_(std::move(cfg)), opts_(std::move(opts)), reg_(std::move(reg)) {
  if (opts_.seed) cfg_.seed = *opts_.seed;
  if (opts_.jobs < 1) throw InvalidArgument("--jobs must be >= 1");
}

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> n = {"validate", "preprocess", "split", "audit",
                                             "train",    "evaluate",   "report"};
  return n;
}

std::string Pipeline::path(const std::string& rel) const { return (fs::path(opts_.out_dir) / rel).string(); }

const Manifest& Pipeline::manifest() {
  if (!manifest_) {
    manifest_ = load_manifest(cfg_.resolve(cfg_.manifest));
    validate(*manifest_);
  }
  return *manifest_;
}

std::string Pipeline::input_hash(const std::string& name, const std::string& prev) const {
  std::string h = name + "|" + prev + "|" + cfg_.hash();
  if (name == "validate") h += "|" + file_hash(cfg_.resolve(cfg_.manifest));
  if (name == "split" && cfg_.split.value("protocol", std::string()) == "file")
    h += "|" + file_hash(cfg_.resolve(cfg_.split["path"].get<std::string>()));
  return hash_str(h);
}

namespace {

std::string outputs_digest(const std::string& out_dir, const std::vector<std::string>& outputs, json* listing) {
  std::string acc;
  for (const auto& o : outputs) {
    const std::string h = file_hash((fs::path(out_dir) / o).string());
    if (listing) (*listing)[o] = h;
    acc += o + "=" + h + ";";
  }
  return hash_str(acc);
}

}  // namespace

StageResult Pipeline::stage(const std::string& name, const std::string& prev) {
  const std::string in = input_hash(name, prev);
  const std::string stamp = path("stages/" + name + ".json");
  if (fs::exists(stamp)) {
    try {
      const json s = json::parse(read_file(stamp));
      if (s.at("input_hash") == in) {
        bool intact = true;
        for (const auto& [o, h] : s.at("outputs").items())
          if (!fs::exists(path(o)) || file_hash(path(o)) != h.get<std::string>()) intact = false;
        if (intact) return {name, true, in, s.at("output_digest").get<std::string>()};
      }
    } catch (const std::exception&) {
      // unreadable stamp: rerun the stage
    }
  }
  std::string produced;
  if (name == "validate") produced = do_validate();
  else if (name == "preprocess") produced = do_preprocess();
  else if (name == "split") produced = do_split();
  else if (name == "audit") produced = do_audit();
  else if (name == "train") produced = do_train();
  else if (name == "evaluate") produced = do_evaluate();
  else if (name == "report") produced = do_report();
  else throw InvalidArgument("unknown stage '" + name + "'");
  const json listing_src = json::parse(produced);
  std::vector<std::string> outputs = listing_src.get<std::vector<std::string>>();
  json listing = json::object();
  const std::string digest = outputs_digest(opts_.out_dir, outputs, &listing);
  write_file(stamp, json{{"stage", name},
                         {"input_hash", in},
                         {"config_hash", cfg_.hash()},
                         {"outputs", listing},
                         {"output_digest", digest}}
                        .dump(2) +
                        "\n");
  return {name, false, in, digest};
}

std::vector<StageResult> Pipeline::run_until(const std::string& last) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), last) == names.end())
    throw InvalidArgument("unknown stage '" + last + "'");
  std::vector<StageResult> out;
  std::string digest;
  for (const auto& n : names) {
    out.push_back(stage(n, digest));
    digest = out.back().output_digest;
    if (n == last) break;
  }
  return out;
}

std::string Pipeline::do_validate() {
  const Manifest& m = manifest();
  const std::string fam = input_family(cfg_.architecture);
  for (const auto& item : m.items) {
    const bool essay = std::holds_alternative<Essay>(item);
    if ((fam == "text") != essay)
      throw ConfigError("architecture '" + cfg_.architecture + "' cannot consume " +
                        (essay ? "essays" : "recordings"));
  }
  json resolved = cfg_.to_json();
  resolved["config_hash"] = cfg_.hash();
  resolved["corpus_stats"] = format_stats(m, corpus_stats(m));
  write_file(path("config.resolved.json"), resolved.dump(2) + "\n");
  return json(std::vector<std::string>{"config.resolved.json"}).dump();
}

std::string Pipeline::do_preprocess() {
  const Manifest& m = manifest();
  const std::string fam = input_family(cfg_.architecture);
  json index = {{"config_hash", cfg_.hash()}, {"family", fam}};
  json units = json::array();
  std::vector<std::string> outputs;
  if (fam == "text") {
    for (const auto& item : m.items) {
      const auto& e = std::get<Essay>(item);
      units.push_back({{"id", e.id}, {"item_id", e.id}, {"speaker", e.learner_id}, {"path", ""}});
    }
  } else {
    const FbankConfig fb = FbankConfig::from_json(cfg_.preprocess.value("fbank", json::object()));
    if (fb.sample_rate != kModelSampleRate) throw ConfigError("preprocess: fbank sample_rate must be 16000");
    const double seg_s = cfg_.preprocess.value("segment_seconds", 8.0);
    const NormScope scope = parse_norm_scope(cfg_.preprocess.value("normalize", std::string("per-utterance")));
    if (scope == NormScope::corpus_stats)
      throw ConfigError("preprocess: corpus-stats normalization is not available in the run pipeline");
    const bool silence = cfg_.preprocess.value("remove_silence", false);
    SilenceConfig sc;
    if (cfg_.preprocess.contains("silence")) {
      const json& s = cfg_.preprocess["silence"];
      sc.min_silence_ms = s.value("min_silence_ms", sc.min_silence_ms);
      sc.threshold_dbfs = s.value("threshold_dbfs", sc.threshold_dbfs);
      sc.keep_buffer_ms = s.value("keep_buffer_ms", sc.keep_buffer_ms);
    }
    const std::string mdir = fs::path(cfg_.resolve(cfg_.manifest)).parent_path().string();
    std::vector<const Recording*> recs;
    for (const auto& item : m.items) recs.push_back(&std::get<Recording>(item));
    std::vector<std::vector<std::string>> per_item(recs.size());
    const auto outcomes =
        run_bounded(recs.size(), static_cast<std::size_t>(opts_.jobs), 0, [&](std::size_t i, std::size_t) {
          const Recording& r = *recs[i];
          const fs::path p(r.path);
          AudioClip clip = read_wav(p.is_absolute() ? r.path : (fs::path(mdir) / p).string());
          clip = resample(clip, kModelSampleRate);
          clip.span = SourceSpan{r.id, 0.0, clip.duration_s()};
          if (silence) clip = concatenate_spans(clip, remove_silence(clip, sc));
          if (clip.empty()) return;
          for (const auto& seg : segment(clip, seg_s)) {
            const std::string rel = "features/" + safe_name(r.id) + "." + std::to_string(seg.index) + ".l2fb";
            FeatureMatrix<float> f;
            if (fam == "features") {
              f = fbank<float>(seg.clip, fb);
              if (cfg_.preprocess.value("normalize", std::string("per-utterance")) != "none")
                f = zscore(f, scope);
            } else {
              f.values = seg.clip.samples.transpose();
            }
            write_feature_file(path(rel), f,
                               {{"config_hash", cfg_.hash()},
                                {"recording", r.id},
                                {"segment", seg.index},
                                {"kind", fam},
                                {"padded_samples", seg.padded_samples}});
            per_item[i].push_back(rel);
          }
        });
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (!outcomes[i].ok) throw Error("preprocess: recording '" + recs[i]->id + "': " + outcomes[i].error);
      for (std::size_t s = 0; s < per_item[i].size(); ++s) {
        units.push_back({{"id", recs[i]->id + "#" + std::to_string(s)},
                         {"item_id", recs[i]->id},
                         {"speaker", recs[i]->speaker_id},
                         {"path", per_item[i][s]}});
        outputs.push_back(per_item[i][s]);
      }
    }
    index["frames"] = frame_count(static_cast<Index>(std::llround(seg_s * kModelSampleRate)), fb);
    index["samples"] = static_cast<Index>(std::llround(seg_s * kModelSampleRate));
    index["n_mels"] = fb.n_mels;
  }
  index["units"] = units;
  write_file(path("features/index.json"), index.dump(2) + "\n");
  outputs.push_back("features/index.json");
  return json(outputs).dump();
}

std::vector<Unit> Pipeline::units() {
  const Manifest& m = manifest();
  const json index = json::parse(read_file(path("features/index.json")));
  std::map<std::string, const Item*> items;
  for (const auto& it : m.items) items[item_id(it)] = &it;
  std::vector<Unit> out;
  for (const auto& u : index.at("units")) {
    Unit x;
    x.id = u.at("id").get<std::string>();
    x.item_id = u.at("item_id").get<std::string>();
    x.speaker = u.at("speaker").get<std::string>();
    const Item& item = *items.at(x.item_id);
    x.level = static_cast<int>(m.scheme.index_of(m.item_level(item)));
    const Speaker* s = m.find_speaker(x.speaker);
    x.gender = s && s->gender == Gender::male ? 1 : 0;
    const std::string rel = u.at("path").get<std::string>();
    // text units carry the essay text in `path`
    x.path = rel.empty() ? std::get<Essay>(item).text : path(rel);
    out.push_back(std::move(x));
  }
  return out;
}

std::string Pipeline::do_split() {
  const Manifest& m = manifest();
  const std::string protocol = cfg_.split.value("protocol", std::string("kfold"));
  const std::uint64_t seed = cfg_.split.value("seed", cfg_.seed);
  SplitAssignment s;
  try {
    if (protocol == "kfold") {
      const int k = cfg_.split.value("k", 10), fold = cfg_.split.value("fold", 0);
      if (fold < 0 || fold >= k) throw ConfigError("split: fold must lie in [0, k)");
      IdSet test;
      if (cfg_.split.value("holdout_test", true)) test = fixed_test_holdout(m, derive_seed(seed, 1));
      const FoldSet folds = stratified_kfold(m, k, seed, test);
      const Fold& f = folds.folds[static_cast<std::size_t>(fold)];
      s.train = f.train, s.val = f.val, s.test = test;
      s.seed = seed;
      s.policy = {{"protocol", "kfold"}, {"k", k}, {"fold", fold}, {"holdout_test", !test.empty()}};
      if (test.empty()) s.test = f.val;
    } else if (protocol == "subset") {
      SubsetSizes z;
      z.train = cfg_.split.value("train", z.train);
      z.val = cfg_.split.value("val", z.val);
      z.test = cfg_.split.value("test", z.test);
      const Granularity g =
          cfg_.split.value("granularity", std::string("speaker")) == "item" ? Granularity::item : Granularity::speaker;
      s = stratified_subset(m, z, seed, g);
    } else if (protocol == "duration") {
      DurationMatchOptions o;
      o.per_level_count = cfg_.split.value("per_level_count", o.per_level_count);
      o.reference_level = cfg_.split.value("reference_level", o.reference_level);
      o.fraction = cfg_.split.value("fraction", o.fraction);
      o.budget = cfg_.split.value("budget", o.budget);
      s = duration_matched_partition(m, o, seed);
    } else {
      s = load_split(cfg_.resolve(cfg_.split["path"].get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("split: ") + e.what());
  }
  json j = s.to_json();
  j["config_hash"] = cfg_.hash();
  write_file(path("split.json"), j.dump(2) + "\n");
  return json(std::vector<std::string>{"split.json"}).dump();
}

std::string Pipeline::do_audit() {
  const SplitAssignment s = load_split(path("split.json"));
  const LeakageReport r = audit_leakage(s, manifest());
  json v = json::array();
  for (const auto& x : r.violations) v.push_back({{"speaker", x.speaker}, {"partitions", x.partitions}});
  write_file(path("audit.json"),
             json{{"config_hash", cfg_.hash()}, {"clean", r.clean()}, {"violations", v}}.dump(2) + "\n");
  if (!r.clean()) {
    write_file(path("audit.txt"), "leakage audit failed\n" + r.to_string());
    throw LeakageError(r);
  }
  return json(std::vector<std::string>{"audit.json"}).dump();
}

namespace {

enum class Part { train, val, test, none };

Part part_of(const SplitAssignment& s, const Unit& u) {
  auto in = [&](const IdSet& set) {
    return set.count(u.item_id) || (s.granularity == Granularity::speaker && set.count(u.speaker));
  };
  if (in(s.train)) return Part::train;
  if (in(s.val)) return Part::val;
  if (in(s.test)) return Part::test;
  return Part::none;
}

}  // namespace

std::string Pipeline::do_train() {
  const SplitAssignment split = load_split(path("split.json"));
  const json index = json::parse(read_file(path("features/index.json")));
  const auto us = units();
  ModelSpec spec{cfg_.architecture, cfg_.model, static_cast<Index>(manifest().scheme.num_classes()),
                 index.value("frames", Index(0)), index.value("n_mels", Index(40)), cfg_.seed,
                 cfg_.preprocess.value("max_tokens", std::size_t(512))};
  const json meta = {{"config_hash", cfg_.hash()}, {"architecture", cfg_.architecture}, {"model", cfg_.model}};
  if (cfg_.architecture == "svm-rbf" || cfg_.architecture == "svm-linear") {
    std::vector<const Unit*> tr;
    std::vector<int> y;
    for (const auto& u : us)
      if (part_of(split, u) == Part::train) tr.push_back(&u), y.push_back(u.level);
    if (tr.empty()) throw InvalidArgument("train: empty training set");
    models::Svm svm(svm_config(spec));
    svm.fit(pooled_rows(spec, tr), y);
    json j = meta;
    j["svm"] = svm.to_json();
    write_file(path("model.json"), j.dump() + "\n");
    write_file(path("history.json"), json{{"config_hash", cfg_.hash()}, {"epochs", json::array()}}.dump(2) + "\n");
    return json(std::vector<std::string>{"model.json", "history.json"}).dump();
  }
  TrainSchedule sched = TrainSchedule::from_json(cfg_.schedule);
  if (!cfg_.schedule.contains("seed")) sched.seed = derive_seed(cfg_.seed, 2);
  TrainOptions topt;
  if (cfg_.schedule.contains("group_lrs"))
    for (const auto& [g, v] : cfg_.schedule["group_lrs"].items())
      topt.group_lrs[g] = {v.at(0).get<double>(), v.at(1).get<double>()};
  topt.head_weights = cfg_.model.value("head_weights", std::vector<double>{});
  with_network(spec, [&](auto& model, auto load) {
    using Model = std::decay_t<decltype(model)>;
    using Sample = typename Model::Sample;
    if (topt.head_weights.empty() && model.num_heads() == 2) {
      const MultiTaskWeights w;
      topt.head_weights = {w.level_weight, w.gender_weight};
    }
    std::vector<Example<Sample>> tr, va;
    for (const auto& u : us) {
      const Part p = part_of(split, u);
      if (p == Part::train) tr.push_back({u.id, load(u), targets_for(model, u)});
      else if (p == Part::val) va.push_back({u.id, load(u), targets_for(model, u)});
    }
    const TrainHistory h = train(model, tr, va, sched, topt);
    save_checkpoint(path("model.ckpt"), model.parameters(), model.buffers(), meta);
    write_file(path("history.csv"), h.to_csv());
    json hj = h.to_json();
    hj["config_hash"] = cfg_.hash();
    hj["schedule"] = sched.to_json();
    write_file(path("history.json"), hj.dump(2) + "\n");
  });
  return json(std::vector<std::string>{"model.ckpt", "history.csv", "history.json"}).dump();
}

std::string Pipeline::do_evaluate() {
  const SplitAssignment split = load_split(path("split.json"));
  const json index = json::parse(read_file(path("features/index.json")));
  const auto us = units();
  const Index K = static_cast<Index>(manifest().scheme.num_classes());
  ModelSpec spec{cfg_.architecture, cfg_.model, K, index.value("frames", Index(0)), index.value("n_mels", Index(40)),
                 cfg_.seed, cfg_.preprocess.value("max_tokens", std::size_t(512))};
  std::vector<const Unit*> te;
  for (const auto& u : us)
    if (part_of(split, u) == Part::test) te.push_back(&u);
  if (te.empty()) throw InvalidArgument("evaluate: empty test set");
  std::vector<std::vector<int>> preds;
  std::vector<std::string> head_names{"level"};
  if (cfg_.architecture == "svm-rbf" || cfg_.architecture == "svm-linear") {
    const json j = json::parse(read_file(path("model.json")));
    const auto svm = models::Svm::from_json(j.at("svm"));
    preds.push_back(svm.predict(pooled_rows(spec, te)));
  } else {
    with_network(spec, [&](auto& model, auto load) {
      using Model = std::decay_t<decltype(model)>;
      using Sample = typename Model::Sample;
      load_checkpoint(path("model.ckpt"), model.parameters(), model.buffers());
      std::vector<Example<Sample>> data;
      for (const auto* u : te) data.push_back({u->id, load(*u), targets_for(model, *u)});
      preds = predict(model, data);
      head_names.clear();
      for (std::size_t h = 0; h < model.num_heads(); ++h) head_names.push_back(model.head(h).name);
    });
  }
  json metrics = {{"config_hash", cfg_.hash()}, {"test_units", te.size()}, {"heads", json::object()}};
  std::string csv = "unit,head,label,prediction\n";
  for (std::size_t h = 0; h < preds.size(); ++h) {
    std::vector<int> truth;
    for (const auto* u : te) truth.push_back(head_names[h] == "gender" ? u->gender : u->level);
    const int k = head_names[h] == "gender" ? 2 : static_cast<int>(K);
    metrics["heads"][head_names[h]] = evaluate(preds[h], truth, k).to_json();
    for (std::size_t i = 0; i < te.size(); ++i)
      csv += te[i]->id + "," + head_names[h] + "," + std::to_string(truth[i]) + "," + std::to_string(preds[h][i]) + "\n";
  }
  write_file(path("metrics.json"), metrics.dump(2) + "\n");
  write_file(path("predictions.csv"), csv);
  return json(std::vector<std::string>{"metrics.json", "predictions.csv"}).dump();
}

std::string Pipeline::do_report() {
  const json metrics = json::parse(read_file(path("metrics.json")));
  const json history = json::parse(read_file(path("history.json")));
  const json split = json::parse(read_file(path("split.json")));
  const SplitAssignment s = SplitAssignment::from_json(split);
  Report r;
  r.name = cfg_.report.value("title", cfg_.name);
  r.config = cfg_.to_json();
  r.config_hash = cfg_.hash();
  r.seeds = {cfg_.seed, s.seed};
  if (history.contains("schedule")) r.seeds.push_back(history["schedule"].value("seed", std::uint64_t(0)));
  r.split_hashes[cfg_.split.value("protocol", std::string("kfold"))] = s.hash();
  for (const auto& d : s.diagnostics) r.interpretation_flags.push_back(d);
  if (cfg_.split.value("protocol", std::string()) == "duration")
    r.interpretation_flags.push_back("duration matching uses per-level speaker sets with a per-level target");
  if (metrics.value("test_units", 0) < 30) r.interpretation_flags.push_back("small test set; metrics are indicative");
  ReportTable t{"Test metrics (%)", {"Model", "Head", "Accuracy", "Macro P", "Macro R", "Macro F1"}, {}};
  for (const auto& [head, m] : metrics.at("heads").items())
    t.rows.push_back({cfg_.architecture, head, format_percent(m.at("accuracy").get<double>()),
                      format_percent(m.at("macro_precision").get<double>()),
                      format_percent(m.at("macro_recall").get<double>()),
                      format_percent(m.at("macro_f1").get<double>())});
  r.tables.push_back(std::move(t));
  json h = history;
  h.erase("config_hash");
  r.results = {{"test", metrics.at("heads")},
               {"history", h},
               {"split_sizes", {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}}};
  run_report(r, path("report"));
  return json(std::vector<std::string>{"report/report.md", "report/report.json"}).dump();
}

// ---------------------------------------------------------------- fixture

std::string write_synthetic_fixture(const std::string& dir, std::size_t speakers, std::size_t per_speaker,
                                    double seconds, std::uint64_t seed) {
  if (speakers < 6 || speakers % 6 != 0) throw InvalidArgument("fixture: speaker count must be a multiple of 6");
  static const double tones[3] = {400.0, 1200.0, 2800.0};
  Manifest m;
  m.corpus = CorpusKind::anglish;
  m.scheme = LevelScheme::anglish();
  Rng rng(seed);
  for (std::size_t i = 0; i < speakers; ++i) {
    const std::size_t level = i % 3;
    const Gender g = (i / 3) % 2 == 0 ? Gender::female : Gender::male;
    char id[32];
    std::snprintf(id, sizeof id, "spk%02zu", i + 1);
    m.speakers.push_back({id, g, m.scheme.labels[level], CorpusKind::anglish});
    const double f0 = tones[level] * (1.0 + 0.04 * (rng.uniform() - 0.5));
    const double pitch = g == Gender::female ? 220.0 : 120.0;
    for (std::size_t r = 0; r < per_speaker; ++r) {
      AudioClip clip;
      clip.sample_rate = 16000;
      const auto n = static_cast<Index>(std::llround(seconds * clip.sample_rate));
      clip.samples.resize(n);
      for (Index t = 0; t < n; ++t) {
        const double x = double(t) / clip.sample_rate;
        clip.samples[t] = static_cast<float>(0.3 * std::sin(2 * M_PI * f0 * x) + 0.1 * std::sin(2 * M_PI * pitch * x) +
                                             0.02 * rng.normal());
      }
      const std::string rid = std::string(id) + "_r" + std::to_string(r + 1);
      write_wav((fs::path(dir) / "audio" / (rid + ".wav")).string(), clip);
      Recording rec;
      rec.id = rid;
      rec.speaker_id = id;
      rec.path = "audio/" + rid + ".wav";
      rec.duration_s = seconds;
      rec.kind = RecordingKind::monologue;
      m.items.push_back(rec);
    }
  }
  validate(m);
  const std::string p = (fs::path(dir) / "manifest.jsonl").string();
  save_manifest(m, p);
  return p;
}

json smoke_config(const std::string& manifest_path) {
  json blocks = json::array();
  for (int c : {4, 4, 8, 8}) blocks.push_back({{"out_channels", c}, {"dropout_p", 0.1}});
  return {{"name", "smoke"},
          {"seed", 7},
          {"corpus", {{"manifest", manifest_path}}},
          {"preprocess", {{"segment_seconds", 1.0}, {"fbank", {{"n_mels", 40}}}, {"normalize", "per-utterance"}}},
          {"split", {{"protocol", "kfold"}, {"k", 3}, {"fold", 0}}},
          {"model", {{"architecture", "cnn2d"}, {"blocks", blocks}}},
          {"schedule", {{"preset", "cnn"}, {"max_epochs", 3}}},
          {"report", {{"title", "Smoke run"}}}};
}

}  // namespace l2prof
