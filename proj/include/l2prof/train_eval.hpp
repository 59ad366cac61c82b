// l2prof/train_eval.hpp

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

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/corpus.hpp"
#include "l2prof/nn/layers.hpp"
#include "l2prof/nn/optim.hpp"

namespace l2prof {

struct TrainSchedule {
  std::string name = "custom";
  int max_epochs = 10;
  int batch_size = 8;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double lr_start = 1e-3, lr_end = 1e-3;
  double weight_decay = 1e-4;
  int patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSchedule from_json(const nlohmann::json& j);

  /// Named settings: cnn, freq-cnn, resnet, speech-encoder-anglish,
  /// private-cnn, private-resnet, speech-encoder-private, mlp,
  /// finetuned-text, bilstm.
  static TrainSchedule preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

/// lr(e) = start + (end - start) * e / (epochs - 1), e zero-based.
double linear_lr(double start, double end, int epoch, int max_epochs);

struct MultiTaskWeights {
  double level_weight = 3.0;
  double gender_weight = 1.0;
};

/// level_weight * NLL(level) + gender_weight * NLL(gender), batch means.
double multitask_loss(const MatrixX<double>& level_logp, const MatrixX<double>& gender_logp,
                      const std::vector<int>& level_target, const std::vector<int>& gender_target,
                      const MultiTaskWeights& w = {});

struct Metrics {
  double accuracy = 0, macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  std::vector<std::vector<long>> confusion;  // rows = true class
  std::vector<double> precision, recall, f1;

  nlohmann::json to_json() const;
};

/// Labels and predictions are class indices in [0, num_classes).
Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);
Metrics evaluate(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                 const LevelScheme& scheme);

/// Tracks the best (strictly lowest) validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 0) throw InvalidArgument("patience must be >= 0");
  }
  /// Feeds the loss of epoch `epoch` (1-based); true when training should
  /// stop after this epoch.
  bool observe(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, val_loss = 0, val_acc = 0, lr = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool early_stopped = false;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

template <typename Sample>
struct Example {
  std::string id;
  Sample x;
  std::vector<int> targets;  // one per head
};

struct TrainOptions {
  /// Loss weight per head; missing entries weigh 1.
  std::vector<double> head_weights;
  /// Per-group (start, end) learning rates overriding the schedule.
  std::map<std::string, std::pair<double, double>> group_lrs;
};

/// Parameter and buffer values of a model at one point in time.
struct Snapshot {
  std::vector<MatrixX<double>> params, buffers;
};

template <typename Model>
Snapshot take_snapshot(Model& m) {
  Snapshot s;
  for (auto* p : m.parameters()) s.params.push_back(p->value);
  for (auto& b : m.buffers()) s.buffers.push_back(*b.value);
  return s;
}

template <typename Model>
void restore_snapshot(Model& m, const Snapshot& s) {
  auto ps = m.parameters();
  auto bs = m.buffers();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.params.at(i);
  for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].value = s.buffers.at(i);
}

namespace detail {

template <typename Model, typename Sample>
typename Model::Input make_batch(const std::vector<Example<Sample>>& data,
                                 const std::vector<std::size_t>& idx) {
  std::vector<const Sample*> xs;
  for (auto i : idx) xs.push_back(&data[i].x);
  return Model::collate(xs);
}

/// Batches of `size` over `order`; a trailing batch of one is folded into
/// the previous batch so batch statistics stay defined.
inline std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, int size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(size))
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(order.size(), i + static_cast<std::size_t>(size))));
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

inline int argmax_row(const MatrixX<double>& m, Index r) {
  Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace detail

/// Weighted NLL over heads; fills per-head gradients when asked.
template <typename Sample>
double weighted_nll(const std::vector<MatrixX<double>>& logps, const std::vector<Example<Sample>>& data,
                    const std::vector<std::size_t>& idx, const std::vector<double>& weights,
                    std::vector<MatrixX<double>>* grads) {
  double loss = 0;
  if (grads) grads->assign(logps.size(), MatrixX<double>());
  for (std::size_t h = 0; h < logps.size(); ++h) {
    if (logps[h].size() == 0) continue;
    const double w = h < weights.size() ? weights[h] : 1.0;
    std::vector<int> t;
    for (auto i : idx) t.push_back(data[i].targets.at(h));
    loss += w * nn::nll_loss<double>(logps[h], t, w, grads ? &(*grads)[h] : nullptr);
  }
  return loss;
}

/// Evaluation-mode predictions (argmax) for every head, in data order.
template <typename Model, typename Sample>
std::vector<std::vector<int>> predict(Model& model, const std::vector<Example<Sample>>& data, int batch_size = 32) {
  std::vector<std::vector<int>> out(model.num_heads());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx(order.begin() + static_cast<long>(s),
                                 order.begin() + static_cast<long>(std::min(order.size(), s + static_cast<std::size_t>(batch_size))));
    const auto logps = model.forward(detail::make_batch<Model>(data, idx), nn::Mode::eval);
    for (std::size_t h = 0; h < logps.size(); ++h)
      for (Index r = 0; r < logps[h].rows(); ++r) out[h].push_back(detail::argmax_row(logps[h], r));
  }
  return out;
}

/// Mean weighted loss and head-0 accuracy in evaluation mode.
template <typename Model, typename Sample>
std::pair<double, double> evaluate_loss(Model& model, const std::vector<Example<Sample>>& data,
                                        const std::vector<double>& weights, int batch_size) {
  double loss = 0;
  long correct = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx(order.begin() + static_cast<long>(s),
                                 order.begin() + static_cast<long>(std::min(order.size(), s + static_cast<std::size_t>(batch_size))));
    const auto logps = model.forward(detail::make_batch<Model>(data, idx), nn::Mode::eval);
    loss += weighted_nll(logps, data, idx, weights, nullptr) * double(idx.size());
    for (Index r = 0; r < logps[0].rows(); ++r)
      correct += detail::argmax_row(logps[0], r) == data[idx[static_cast<std::size_t>(r)]].targets[0];
  }
  return {loss / double(data.size()), double(correct) / double(data.size())};
}

/// Mini-batch training with one optimizer per parameter group, per-epoch
/// linear learning-rate decay and early stopping on validation loss. The
/// best-validation parameters are restored before returning.
template <typename Model, typename Sample>
TrainHistory train(Model& model, const std::vector<Example<Sample>>& train_set,
                   const std::vector<Example<Sample>>& val_set, const TrainSchedule& schedule,
                   const TrainOptions& opts = {}) {
  schedule.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  if (val_set.empty()) throw InvalidArgument("train: empty validation set");
  struct Group {
    std::string name;
    nn::Optimizer<double> opt;
    double start, end;
  };
  std::vector<Group> groups;
  for (auto& [name, params] : model.param_groups()) {
    auto it = opts.group_lrs.find(name);
    const double s = it != opts.group_lrs.end() ? it->second.first : schedule.lr_start;
    const double e = it != opts.group_lrs.end() ? it->second.second : schedule.lr_end;
    groups.push_back({name, nn::Optimizer<double>(schedule.optimizer, params, schedule.weight_decay), s, e});
  }
  TrainHistory hist;
  EarlyStopping stopper(schedule.patience);
  Snapshot best = take_snapshot(model);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  for (int e = 0; e < schedule.max_epochs; ++e) {
    Rng rng(derive_seed(schedule.seed, static_cast<std::uint64_t>(e)));
    rng.shuffle(order);
    double total = 0;
    for (const auto& idx : detail::batches(order, schedule.batch_size)) {
      for (auto& g : groups) g.opt.zero_grad();
      const auto logps = model.forward(detail::make_batch<Model>(train_set, idx), nn::Mode::train);
      std::vector<MatrixX<double>> grads;
      const double loss = weighted_nll(logps, train_set, idx, opts.head_weights, &grads);
      if (!std::isfinite(loss)) {
        std::string ids;
        for (auto i : idx) ids += (ids.empty() ? "" : ",") + train_set[i].id;
        throw Error("non-finite loss at epoch " + std::to_string(e + 1) + " in batch [" + ids + "]");
      }
      model.backward(grads);
      for (auto& g : groups) g.opt.step(linear_lr(g.start, g.end, e, schedule.max_epochs));
      total += loss * double(idx.size());
    }
    const auto [vl, va] = evaluate_loss(model, val_set, opts.head_weights, std::max(schedule.batch_size, 32));
    EpochRecord rec{e + 1, total / double(train_set.size()), vl, va,
                    linear_lr(groups.front().start, groups.front().end, e, schedule.max_epochs)};
    hist.epochs.push_back(rec);
    const bool stop = stopper.observe(e + 1, vl);
    if (stopper.improved()) best = take_snapshot(model);
    if (stop) {
      hist.early_stopped = true;
      break;
    }
  }
  restore_snapshot(model, best);
  hist.best_epoch = stopper.best_epoch();
  hist.best_val_loss = stopper.best_loss();
  return hist;
}

/// Binary parameter blob with a JSON header (config echo, tensor names,
/// shapes and frozen flags).
void save_checkpoint(const std::string& path, const nn::ParamList<double>& params,
                     const nn::BufferList<double>& buffers, const nlohmann::json& config);
/// Loads values by name and shape; returns the config echo.
nlohmann::json load_checkpoint(const std::string& path, const nn::ParamList<double>& params,
                               const nn::BufferList<double>& buffers);

}  // namespace l2prof
