// sweep.cpp

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

#include "l2prof/sweep.hpp"

#include <algorithm>

#include "l2prof/work_queue.hpp"

namespace l2prof {

using nlohmann::json;

json SweepResult::to_json() const {
  json rows = json::array();
  for (std::size_t f = 0; f < families.size(); ++f) rows.push_back({{"family", families[f]}, {"accuracy", accuracy[f]}});
  return {{"lengths", lengths}, {"rows", rows}};
}

namespace {

std::vector<models::TokenIds> encode_all(const models::TextEncoder<double>& enc, const TextSplit& s,
                                         std::size_t max_tokens) {
  std::vector<models::TokenIds> out;
  for (const auto& t : s.texts) out.push_back(enc.encode(t, max_tokens));
  return out;
}

MatrixX<double> pooled_all(const models::TextEncoder<double>& enc, const std::vector<models::TokenIds>& ids) {
  MatrixX<double> m(static_cast<Index>(ids.size()), enc.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) m.row(static_cast<Index>(i)) = enc.pooled(ids[i]).transpose();
  return m;
}

template <typename Sample>
std::vector<Example<Sample>> examples(const TextSplit& s, std::vector<Sample> xs) {
  std::vector<Example<Sample>> out;
  for (std::size_t i = 0; i < xs.size(); ++i)
    out.push_back({i < s.ids.size() ? s.ids[i] : std::to_string(i), std::move(xs[i]), {s.labels[i]}});
  return out;
}

std::vector<VectorX<double>> rows_of(const MatrixX<double>& m) {
  std::vector<VectorX<double>> v;
  for (Index i = 0; i < m.rows(); ++i) v.push_back(m.row(i).transpose());
  return v;
}

}  // namespace

double text_family_accuracy(const TextEncoderFactory& factory, const std::string& family, const SweepData& data,
                            const SweepSettings& settings, std::size_t max_tokens) {
  auto enc = factory();
  if (!enc) throw AdapterError("text encoder factory returned null");
  const auto tr = encode_all(*enc, data.train, max_tokens);
  const auto va = encode_all(*enc, data.val, max_tokens);
  const auto te = encode_all(*enc, data.test, max_tokens);
  models::MlpConfig mlp = settings.mlp;
  mlp.layer_sizes.back() = data.num_classes;
  if (family == "svm") {
    models::Svm svm(settings.svm);
    svm.fit(pooled_all(*enc, tr), data.train.labels);
    return evaluate(svm.predict(pooled_all(*enc, te)), data.test.labels, data.num_classes).accuracy;
  }
  if (family == "mlp") {
    auto model = models::make_mlp<double>(mlp);
    const auto train_set = examples(data.train, rows_of(pooled_all(*enc, tr)));
    const auto val_set = examples(data.val, rows_of(pooled_all(*enc, va)));
    const auto test_set = examples(data.test, rows_of(pooled_all(*enc, te)));
    train(model, train_set, val_set, settings.mlp_schedule);
    return evaluate(predict(model, test_set)[0], data.test.labels, data.num_classes).accuracy;
  }
  if (family == "finetuned") {
    std::vector<bool> mask = settings.finetune_mask;
    if (mask.empty()) {
      mask.assign(static_cast<std::size_t>(enc->num_layers()), false);
      if (!mask.empty()) mask.back() = true;
    }
    auto model = models::make_finetuned_text<double>(enc, mask, mlp);
    const auto train_set = examples(data.train, tr);
    const auto val_set = examples(data.val, va);
    const auto test_set = examples(data.test, te);
    train(model, train_set, val_set, settings.finetune_schedule);
    return evaluate(predict(model, test_set)[0], data.test.labels, data.num_classes).accuracy;
  }
  throw InvalidArgument("unknown sweep family '" + family + "'");
}

SweepResult token_length_sweep(const TextEncoderFactory& factory, const std::vector<std::string>& families,
                               const SweepData& data, const SweepSettings& settings,
                               const std::vector<std::size_t>& lengths) {
  if (lengths != token_length_grid()) throw InvalidArgument("sweep grid must be exactly {10, 20, ..., 90}");
  if (families.empty()) throw InvalidArgument("sweep: no model families");
  for (const auto& f : families)
    if (std::find(sweep_families().begin(), sweep_families().end(), f) == sweep_families().end())
      throw InvalidArgument("sweep: unknown family '" + f + "'");
  SweepResult r;
  r.lengths = lengths;
  r.families = families;
  r.accuracy.assign(families.size(), std::vector<double>(lengths.size(), 0.0));
  const std::size_t cells = families.size() * lengths.size();
  const auto outcomes = run_bounded(cells, static_cast<std::size_t>(std::max(1, settings.jobs)), 0,
                                    [&](std::size_t c, std::size_t) {
                                      const std::size_t f = c / lengths.size(), l = c % lengths.size();
                                      r.accuracy[f][l] =
                                          text_family_accuracy(factory, families[f], data, settings, lengths[l]);
                                    });
  for (std::size_t c = 0; c < cells; ++c)
    if (!outcomes[c].ok)
      throw Error("sweep cell " + families[c / lengths.size()] + "@" + std::to_string(lengths[c % lengths.size()]) +
                  " failed: " + outcomes[c].error);
  return r;
}

SweepSettings planted_sweep_settings(Index encoder_dim, std::uint64_t seed, int jobs) {
  SweepSettings s;
  s.jobs = jobs;
  s.svm.mode = models::SvmMode::linear;
  s.svm.seed = seed;
  s.mlp.layer_sizes = {encoder_dim, 32, 2};
  s.mlp.dropout_p = 0.1;
  s.mlp.seed = seed;
  s.mlp_schedule.lr_start = s.mlp_schedule.lr_end = 1e-3;
  s.mlp_schedule.max_epochs = 200;
  s.mlp_schedule.patience = 30;
  s.mlp_schedule.seed = seed;
  s.finetune_schedule.lr_start = s.finetune_schedule.lr_end = 1e-3;
  s.finetune_schedule.seed = seed;
  return s;
}

SweepData planted_marker_default(std::uint64_t seed) { return planted_marker_corpus(400, 100, 200, 100, 15, seed); }

SweepData planted_marker_corpus(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::size_t words,
                                std::size_t marker_position, std::uint64_t seed) {
  static const std::vector<std::string> filler = {"the",  "cat",  "sat",  "on",   "a",    "mat",  "we",
                                                  "go",   "to",   "town", "and",  "see",  "many", "old",
                                                  "trees","by",   "river","in",   "warm", "sun"};
  static const std::string markers[2] = {"alpha", "omega"};
  if (marker_position == 0 || marker_position > words)
    throw InvalidArgument("marker position must lie inside the essay");
  Rng rng(seed);
  SweepData d;
  d.num_classes = 2;
  auto fill = [&](TextSplit& s, std::size_t n, const std::string& prefix) {
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % 2);
      std::string text;
      for (std::size_t w = 1; w <= words; ++w) {
        if (!text.empty()) text += ' ';
        text += w == marker_position ? markers[label] : filler[rng.bounded(filler.size())];
      }
      s.ids.push_back(prefix + std::to_string(i));
      s.texts.push_back(std::move(text));
      s.labels.push_back(label);
    }
  };
  fill(d.train, n_train, "train");
  fill(d.val, n_val, "val");
  fill(d.test, n_test, "test");
  return d;
}

}  // namespace l2prof
