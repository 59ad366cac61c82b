// l2prof/sweep.hpp

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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2prof/models/svm.hpp"
#include "l2prof/models/text.hpp"
#include "l2prof/train_eval.hpp"

namespace l2prof {

struct TextSplit {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<int> labels;
};

struct SweepData {
  TextSplit train, val, test;
  int num_classes = 2;
};

struct SweepSettings {
  models::SvmConfig svm;
  models::MlpConfig mlp;  // layer_sizes.front() must equal the encoder dim
  TrainSchedule mlp_schedule = TrainSchedule::preset("mlp");
  TrainSchedule finetune_schedule = TrainSchedule::preset("finetuned-text");
  /// Trainable encoder layers for the fine-tuned family; empty = last only.
  std::vector<bool> finetune_mask;
  int jobs = 1;
};

using TextEncoderFactory = std::function<std::shared_ptr<models::TextEncoder<double>>()>;

struct SweepResult {
  std::vector<std::size_t> lengths;
  std::vector<std::string> families;
  std::vector<std::vector<double>> accuracy;  // [family][length]

  nlohmann::json to_json() const;
};

inline const std::vector<std::string>& sweep_families() {
  static const std::vector<std::string> f = {"svm", "mlp", "finetuned"};
  return f;
}

/// Test accuracy of one family at one truncation length. Each call starts
/// from a fresh encoder from `factory`.
double text_family_accuracy(const TextEncoderFactory& factory, const std::string& family, const SweepData& data,
                            const SweepSettings& settings, std::size_t max_tokens);

/// Accuracy grid over families x lengths; `lengths` must equal the
/// standard grid {10, ..., 90}. Cells run on up to settings.jobs threads.
SweepResult token_length_sweep(const TextEncoderFactory& factory, const std::vector<std::string>& families,
                               const SweepData& data, const SweepSettings& settings,
                               const std::vector<std::size_t>& lengths = token_length_grid());

/// Synthetic essays whose class is carried only by the word at token
/// position `marker_position` ([CLS] is position 0); every other word is
/// label-independent filler.
/// Settings for the planted-marker check: a linear SVM, an MLP with room
/// to get past the filler-word plateau, and fine-tuning at 1e-3 so a
/// freshly initialized encoder moves within 30 epochs.
SweepSettings planted_sweep_settings(Index encoder_dim, std::uint64_t seed, int jobs = 1);

/// Planted-marker corpus at the sizes used by `sweep --planted`.
SweepData planted_marker_default(std::uint64_t seed);

SweepData planted_marker_corpus(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::size_t words,
                                std::size_t marker_position, std::uint64_t seed);

}  // namespace l2prof
