// tests/toy_models.hpp

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

// Toy-size instances of every architecture (each under 2,000 parameters)
// and random inputs for them. Dropout is off so finite differences are
// well defined.

#pragma once

#include <memory>
#include <vector>

#include "l2prof/models/conv.hpp"
#include "l2prof/models/speech.hpp"
#include "l2prof/models/text.hpp"
#include "l2prof/train_eval.hpp"

namespace toy {

using namespace l2prof;

inline models::Cnn2dConfig cnn_config(std::uint64_t seed = 1) {
  models::Cnn2dConfig c;
  c.frames = 16, c.n_mels = 16;
  c.blocks = {{2, 3, 3, 1, 1, 0.0}, {2, 3, 3, 1, 1, 0.0}, {3, 3, 3, 1, 1, 0.0}, {3, 3, 3, 1, 1, 0.0}};
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

inline models::FreqCnnConfig freq_cnn_config(std::uint64_t seed = 2) {
  models::FreqCnnConfig c;
  c.frames = 5, c.n_mels = 16;
  c.blocks = {{2, 1, 3, 1, 1, 0.0}, {2, 1, 3, 1, 1, 0.0}, {3, 1, 3, 1, 1, 0.0}, {3, 1, 3, 1, 1, 0.0}};
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

inline models::ResNetConfig resnet_config(std::uint64_t seed = 3) {
  models::ResNetConfig c;
  c.frames = 16, c.n_mels = 16;
  c.channels = {2, 2, 2, 2, 2};
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

inline models::MlpConfig mlp_config(std::uint64_t seed = 4) {
  models::MlpConfig c;
  c.layer_sizes = {8, 6, 3};
  c.dropout_p = 0.0;
  c.seed = seed;
  return c;
}

inline models::BilstmAttnConfig bilstm_config(std::uint64_t seed = 5) {
  models::BilstmAttnConfig c;
  c.input_dim = 3, c.hidden = 2, c.attention_dim = 3, c.num_classes = 3, c.seed = seed;
  return c;
}

inline models::SpeechClassifier<double> speech(std::uint64_t seed = 6, bool frozen = false) {
  typename models::ToySpeechEncoder<double>::Options o;
  o.dim = 4, o.feature_dim = 3, o.window = 20, o.hop = 16, o.seed = seed;
  models::SpeechEncoderConfig c;
  c.encoder_dim = 4;
  c.feature_extractor_frozen = frozen;
  c.heads = {{"level", 3, 3}, {"gender", 2, 3}};
  c.seed = seed;
  return models::make_speech_classifier<double>(c, std::make_unique<models::ToySpeechEncoder<double>>(o));
}

inline std::shared_ptr<models::HashingTextEncoder<double>> text_encoder(std::uint64_t seed = 7) {
  typename models::HashingTextEncoder<double>::Options o;
  o.dim = 6, o.layers = 2, o.seed = seed;
  return std::make_shared<models::HashingTextEncoder<double>>(o);
}

inline models::FinetunedTextClassifier<double> finetuned(std::vector<bool> mask = {true, true},
                                                         std::uint64_t seed = 7) {
  models::MlpConfig m;
  m.layer_sizes = {6, 4, 3};
  m.dropout_p = 0.0;
  m.seed = seed;
  return models::make_finetuned_text<double>(text_encoder(seed), mask, m);
}

inline RowMatrixX<double> random_map(Index t, Index f, Rng& rng) {
  RowMatrixX<double> m(t, f);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

template <typename Model>
typename Model::Input collate(const std::vector<typename Model::Sample>& xs) {
  std::vector<const typename Model::Sample*> p;
  for (const auto& x : xs) p.push_back(&x);
  return Model::collate(p);
}

inline std::vector<RowMatrixX<double>> maps(std::size_t n, Index t, Index f, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RowMatrixX<double>> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(random_map(t, f, rng));
  return v;
}

inline std::vector<VectorX<double>> vectors(std::size_t n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VectorX<double>> v;
  for (std::size_t i = 0; i < n; ++i) {
    VectorX<double> x(d);
    for (Index j = 0; j < d; ++j) x[j] = rng.normal();
    v.push_back(x);
  }
  return v;
}

/// Variable-length (L x D) sequences.
inline std::vector<MatrixX<double>> sequences(const std::vector<Index>& lengths, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatrixX<double>> v;
  for (Index L : lengths) {
    MatrixX<double> m(L, d);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    v.push_back(m);
  }
  return v;
}

inline std::vector<VectorX<double>> waves(std::size_t n, Index len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VectorX<double>> v;
  for (std::size_t i = 0; i < n; ++i) {
    VectorX<double> w(len);
    for (Index j = 0; j < len; ++j) w[j] = 0.5 * rng.normal();
    v.push_back(w);
  }
  return v;
}

inline std::vector<models::TokenIds> token_batches(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<models::TokenIds> v;
  for (std::size_t i = 0; i < n; ++i) {
    models::TokenIds ids{1};
    const auto len = 3 + rng.bounded(4);
    for (std::size_t t = 0; t < len; ++t) ids.push_back(static_cast<int>(3 + rng.bounded(50)));
    ids.push_back(2);
    v.push_back(ids);
  }
  return v;
}

// 16 linearly separable samples per input type; class = index mod 3.

inline std::vector<Example<RowMatrixX<double>>> separable_maps(Index t, Index f) {
  Rng rng(50);
  std::vector<Example<RowMatrixX<double>>> out;
  for (int i = 0; i < 16; ++i) {
    const int c = i % 3;
    RowMatrixX<double> x = 0.5 * random_map(t, f, rng);
    x.middleCols(c * f / 3, f / 3).array() += 2.0;  // lift a band of mel bins
    out.push_back({std::to_string(i), x, {c}});
  }
  return out;
}

inline std::vector<Example<VectorX<double>>> separable_vectors(Index d) {
  Rng rng(51);
  std::vector<Example<VectorX<double>>> out;
  for (int i = 0; i < 16; ++i) {
    VectorX<double> x(d);
    for (Index j = 0; j < d; ++j) x[j] = 0.5 * rng.normal();
    x[i % 3] += 3.0;
    out.push_back({std::to_string(i), x, {i % 3}});
  }
  return out;
}

inline std::vector<Example<MatrixX<double>>> separable_sequences(Index d) {
  Rng rng(52);
  std::vector<Example<MatrixX<double>>> out;
  for (int i = 0; i < 16; ++i) {
    MatrixX<double> x(2 + static_cast<Index>(rng.bounded(4)), d);
    for (Index j = 0; j < x.size(); ++j) x.data()[j] = 0.5 * rng.normal();
    x.col(i % 3).array() += 2.0;
    out.push_back({std::to_string(i), x, {i % 3}});
  }
  return out;
}

/// DC offset per level class; gender target alternates in threes.
inline std::vector<Example<VectorX<double>>> separable_waves(Index len) {
  Rng rng(53);
  std::vector<Example<VectorX<double>>> out;
  for (int i = 0; i < 16; ++i) {
    VectorX<double> w(len);
    for (Index j = 0; j < len; ++j) w[j] = 0.1 * rng.normal() + 0.3 * (i % 3 - 1);
    out.push_back({std::to_string(i), w, {i % 3, (i / 3) % 2}});
  }
  return out;
}

/// Class token right after [CLS], then random filler.
inline std::vector<Example<models::TokenIds>> separable_tokens() {
  Rng rng(54);
  std::vector<Example<models::TokenIds>> out;
  for (int i = 0; i < 16; ++i) {
    models::TokenIds ids{SubwordTokenizer::kCls, 10 + i % 3};
    for (int t = 0; t < 3; ++t) ids.push_back(static_cast<int>(20 + rng.bounded(30)));
    ids.push_back(SubwordTokenizer::kSep);
    out.push_back({std::to_string(i), ids, {i % 3}});
  }
  return out;
}

/// No early stop, no decay; 200 epochs at 1e-2.
inline TrainSchedule overfit_schedule() {
  TrainSchedule s;
  s.max_epochs = 200;
  s.batch_size = 4;
  s.lr_start = s.lr_end = 1e-2;
  s.weight_decay = 0;
  s.patience = 200;
  s.seed = 1;
  return s;
}

/// Training accuracy on the level head after fitting `data`.
template <typename Model, typename Sample>
double overfit_accuracy(Model& m, const std::vector<Example<Sample>>& data) {
  train(m, data, data, overfit_schedule());
  std::vector<int> truth;
  for (const auto& e : data) truth.push_back(e.targets[0]);
  return evaluate(predict(m, data)[0], truth, 3).accuracy;
}

}  // namespace toy
