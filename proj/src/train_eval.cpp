// train_eval.cpp

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

#include "l2prof/train_eval.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace l2prof {

using nlohmann::json;

void TrainSchedule::validate() const {
  if (max_epochs <= 0) throw InvalidArgument("schedule: max_epochs must be positive");
  if (batch_size <= 0) throw InvalidArgument("schedule: batch_size must be positive");
  if (!(lr_start > 0) || !(lr_end > 0)) throw InvalidArgument("schedule: learning rates must be positive");
  if (lr_end > lr_start) throw InvalidArgument("schedule: lr_end must not exceed lr_start");
  if (patience < 0) throw InvalidArgument("schedule: patience must be >= 0");
  if (weight_decay < 0) throw InvalidArgument("schedule: weight_decay must be >= 0");
}

json TrainSchedule::to_json() const {
  return {{"name", name},
          {"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"optimizer", nn::to_string(optimizer)},
          {"lr_start", lr_start},
          {"lr_end", lr_end},
          {"decay", "linear"},
          {"weight_decay", weight_decay},
          {"early_stop_patience", patience},
          {"seed", seed}};
}

TrainSchedule TrainSchedule::from_json(const json& j) {
  TrainSchedule s = j.contains("preset") ? preset(j["preset"].get<std::string>()) : TrainSchedule{};
  s.name = j.value("name", s.name);
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  if (j.contains("optimizer")) s.optimizer = nn::parse_optimizer(j["optimizer"].get<std::string>());
  s.lr_start = j.value("lr_start", s.lr_start);
  s.lr_end = j.value("lr_end", s.lr_end);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.patience = j.value("early_stop_patience", s.patience);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

TrainSchedule TrainSchedule::preset(const std::string& name) {
  TrainSchedule s;
  s.name = name;
  s.optimizer = nn::OptimizerKind::adam;
  s.weight_decay = 1e-4;
  if (name == "cnn" || name == "freq-cnn") {
    s.max_epochs = 200, s.batch_size = 8, s.lr_start = 1e-3, s.lr_end = 1e-4, s.patience = 10;
  } else if (name == "resnet" || name == "private-cnn" || name == "private-resnet") {
    s.max_epochs = 100, s.batch_size = 16, s.lr_start = 1e-3, s.lr_end = 1e-4, s.patience = 10;
  } else if (name == "speech-encoder-anglish") {
    // classifier lr; the encoder group runs at 1e-5 (see group_lrs).
    s.max_epochs = 5, s.batch_size = 16, s.lr_start = s.lr_end = 1e-4, s.patience = 5;
  } else if (name == "speech-encoder-private") {
    s.max_epochs = 20, s.batch_size = 4, s.lr_start = s.lr_end = 1e-5, s.patience = 20;
    s.optimizer = nn::OptimizerKind::adamw;
  } else if (name == "mlp") {
    s.max_epochs = 300, s.batch_size = 32, s.lr_start = s.lr_end = 1e-5, s.patience = 10;
  } else if (name == "finetuned-text") {
    s.max_epochs = 30, s.batch_size = 16, s.lr_start = s.lr_end = 1e-5, s.patience = 2;
  } else if (name == "bilstm") {
    s.max_epochs = 120, s.batch_size = 16, s.lr_start = s.lr_end = 1e-3, s.patience = 10;
    s.weight_decay = 0.01;
  } else {
    throw InvalidArgument("unknown schedule preset '" + name + "'");
  }
  return s;
}

std::vector<std::string> TrainSchedule::preset_names() {
  return {"bilstm", "cnn", "finetuned-text", "freq-cnn", "mlp", "private-cnn", "private-resnet",
          "resnet", "speech-encoder-anglish", "speech-encoder-private"};
}

double linear_lr(double start, double end, int epoch, int max_epochs) {
  if (max_epochs <= 1) return start;
  const double t = double(epoch) / double(max_epochs - 1);
  return (1.0 - t) * start + t * end;
}

double multitask_loss(const MatrixX<double>& level_logp, const MatrixX<double>& gender_logp,
                      const std::vector<int>& level_target, const std::vector<int>& gender_target,
                      const MultiTaskWeights& w) {
  if (w.level_weight < 0 || w.gender_weight < 0) throw InvalidArgument("multitask weights must be >= 0");
  return w.level_weight * nn::nll_loss<double>(level_logp, level_target) +
         w.gender_weight * nn::nll_loss<double>(gender_logp, gender_target);
}

json Metrics::to_json() const {
  return {{"accuracy", accuracy},
          {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},
          {"macro_f1", macro_f1},
          {"confusion", confusion},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1}};
}

Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size())
    throw InvalidArgument("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw InvalidArgument("evaluate: empty input");
  if (num_classes < 1) throw InvalidArgument("evaluate: num_classes must be positive");
  const auto K = static_cast<std::size_t>(num_classes);
  Metrics m;
  m.confusion.assign(K, std::vector<long>(K, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || t >= num_classes) throw InvalidArgument("evaluate: unknown label " + std::to_string(t));
    if (p < 0 || p >= num_classes) throw InvalidArgument("evaluate: unknown prediction " + std::to_string(p));
    ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  long trace = 0;
  for (std::size_t k = 0; k < K; ++k) {
    trace += m.confusion[k][k];
    long col = 0, row = 0;
    for (std::size_t j = 0; j < K; ++j) {
      col += m.confusion[j][k];
      row += m.confusion[k][j];
    }
    const double tp = double(m.confusion[k][k]);
    const double p = col > 0 ? tp / double(col) : 0.0;
    const double r = row > 0 ? tp / double(row) : 0.0;
    const double f = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
  }
  m.accuracy = double(trace) / double(labels.size());
  for (std::size_t k = 0; k < K; ++k) {
    m.macro_precision += m.precision[k];
    m.macro_recall += m.recall[k];
    m.macro_f1 += m.f1[k];
  }
  m.macro_precision /= double(K);
  m.macro_recall /= double(K);
  m.macro_f1 /= double(K);
  return m;
}

Metrics evaluate(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                 const LevelScheme& scheme) {
  auto index = [&](const std::string& s) {
    for (std::size_t i = 0; i < scheme.labels.size(); ++i)
      if (scheme.labels[i] == s) return static_cast<int>(i);
    throw InvalidArgument("evaluate: label '" + s + "' not in scheme " + scheme.name);
  };
  std::vector<int> p, l;
  for (const auto& s : predictions) p.push_back(index(s));
  for (const auto& s : labels) l.push_back(index(s));
  return evaluate(p, l, static_cast<int>(scheme.labels.size()));
}

bool EarlyStopping::observe(int epoch, double val_loss) {
  improved_ = val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
  }
  return epoch > best_epoch_ && epoch - best_epoch_ >= patience_;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_acc,lr\n";
  char buf[256];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr);
    out += buf;
  }
  return out;
}

json TrainHistory::to_json() const {
  json e = json::array();
  for (const auto& r : epochs)
    e.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"val_acc", r.val_acc}, {"lr", r.lr}});
  return {{"epochs", e}, {"best_epoch", best_epoch}, {"best_val_loss", best_val_loss}, {"early_stopped", early_stopped}};
}

namespace {

constexpr char kCheckpointMagic[4] = {'L', '2', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamList<double>& params,
                     const nn::BufferList<double>& buffers, const json& config) {
  json tensors = json::array();
  std::string blob;
  auto add = [&](const std::string& name, const MatrixX<double>& v, const char* kind, bool frozen) {
    tensors.push_back({{"name", name}, {"kind", kind}, {"rows", v.rows()}, {"cols", v.cols()}, {"frozen", frozen}});
    blob.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  };
  for (const auto* p : params) add(p->name, p->value, "param", p->frozen);
  for (const auto& b : buffers) add(b.name, *b.value, "buffer", false);
  const std::string header = json{{"config", config}, {"dtype", "float64"}, {"tensors", tensors}}.dump();
  std::string out(kCheckpointMagic, 4);
  const std::uint32_t ver = kCheckpointVersion;
  const std::uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&ver), sizeof ver);
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += header;
  out += blob;
  write_file(path, out);
}

json load_checkpoint(const std::string& path, const nn::ParamList<double>& params,
                     const nn::BufferList<double>& buffers) {
  const std::string data = read_file(path);
  if (data.size() < 16 || std::memcmp(data.data(), kCheckpointMagic, 4) != 0)
    throw ParseError(path + ": not a checkpoint");
  std::uint32_t ver;
  std::uint64_t len;
  std::memcpy(&ver, data.data() + 4, sizeof ver);
  std::memcpy(&len, data.data() + 8, sizeof len);
  if (ver != kCheckpointVersion) throw ParseError(path + ": unsupported checkpoint version");
  if (16 + len > data.size()) throw ParseError(path + ": truncated header");
  const json header = json::parse(data.substr(16, len));
  std::size_t off = 16 + len;
  std::map<std::string, MatrixX<double>*> targets;
  for (auto* p : params) targets[p->name] = &p->value;
  for (const auto& b : buffers) targets[b.name] = b.value;
  std::size_t loaded = 0;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Index>(), cols = t.at("cols").get<Index>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (off + bytes > data.size()) throw ParseError(path + ": truncated data");
    auto it = targets.find(t.at("name").get<std::string>());
    if (it == targets.end()) throw IntegrityError(path + ": unexpected tensor " + t["name"].get<std::string>());
    if (it->second->rows() != rows || it->second->cols() != cols)
      throw ShapeError(path + ": shape mismatch for " + it->first);
    std::memcpy(it->second->data(), data.data() + off, bytes);
    off += bytes;
    ++loaded;
  }
  if (loaded != targets.size()) throw IntegrityError(path + ": checkpoint is missing tensors");
  return header.at("config");
}

}  // namespace l2prof
