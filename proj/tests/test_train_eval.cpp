// tests/test_train_eval.cpp

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

#include <cmath>

#include "l2prof/sweep.hpp"
#include "l2prof/train_eval.hpp"
#include "oracles.hpp"
#include "toy_models.hpp"

using namespace l2prof;
using namespace l2prof::models;

namespace {

MatrixX<double> random_logp(Index n, Index k, Rng& rng) {
  MatrixX<double> z(n, k);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = 3 * rng.normal();
  for (Index i = 0; i < n; ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i).array() -= mx + std::log((z.row(i).array() - mx).exp().sum());
  }
  return z;
}

std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rng.bounded(static_cast<std::size_t>(k)));
  return v;
}

}  // namespace

TEST(Loss, MultitaskIsLinearInTheHeadLosses) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.bounded(20));
    const auto lv = random_logp(n, 3, rng), gd = random_logp(n, 2, rng);
    const auto tl = random_labels(static_cast<std::size_t>(n), 3, rng);
    const auto tg = random_labels(static_cast<std::size_t>(n), 2, rng);
    double l_level = 0, l_gender = 0;
    for (Index i = 0; i < n; ++i) {
      l_level -= lv(i, tl[static_cast<std::size_t>(i)]);
      l_gender -= gd(i, tg[static_cast<std::size_t>(i)]);
    }
    l_level /= double(n), l_gender /= double(n);
    EXPECT_NEAR(multitask_loss(lv, gd, tl, tg), 3 * l_level + l_gender, 1e-9);
    EXPECT_NEAR(multitask_loss(lv, gd, tl, tg, {0.5, 2.0}), 0.5 * l_level + 2 * l_gender, 1e-9);
  }
  EXPECT_THROW(multitask_loss(random_logp(2, 3, rng), random_logp(2, 2, rng), {0, 1}, {0, 1}, {-1, 1}),
               InvalidArgument);
}

TEST(Loss, UniformPredictionGivesThreeLnThreePlusLnTwo) {
  const MatrixX<double> lv = MatrixX<double>::Constant(6, 3, -std::log(3.0));
  const MatrixX<double> gd = MatrixX<double>::Constant(6, 2, -std::log(2.0));
  EXPECT_NEAR(multitask_loss(lv, gd, {0, 1, 2, 0, 1, 2}, {0, 1, 0, 1, 0, 1}), 3 * std::log(3.0) + std::log(2.0),
              1e-6);
}

TEST(Metrics, AllClassZeroOnBalancedThreeClassSet) {
  const auto m = evaluate(std::vector<int>(9, 0), {0, 0, 0, 1, 1, 1, 2, 2, 2}, 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0 / 3.0);
  // Class 0: P = 1/3, R = 1, F1 = 1/2; others 0.
  EXPECT_NEAR(m.macro_f1, 0.1667, 5e-5);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.macro_precision, 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(m.macro_recall, 1.0 / 3.0);
  EXPECT_EQ(m.confusion[1][0], 3);
}

TEST(Metrics, MatchesCountingOracleOnRandomCases) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.bounded(5));
    const std::size_t n = 1 + rng.bounded(60);
    const auto truth = random_labels(n, k, rng);
    auto pred = random_labels(n, k, rng);
    if (trial % 4 == 0) pred = truth;
    const auto got = evaluate(pred, truth, k);
    const auto want = oracle::metrics(pred, truth, k);
    EXPECT_EQ(got.accuracy, want.accuracy);
    EXPECT_EQ(got.macro_precision, want.precision);
    EXPECT_EQ(got.macro_recall, want.recall);
    EXPECT_EQ(got.macro_f1, want.f1);
  }
}

TEST(Metrics, LabelsAndErrors) {
  const auto m = evaluate(std::vector<std::string>{"NES", "FR1"}, {"NES", "FR2"}, LevelScheme::anglish());
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.confusion[2][1], 1);
  EXPECT_THROW(evaluate({0}, {0, 1}, 2), InvalidArgument);
  EXPECT_THROW(evaluate({3}, {0}, 2), InvalidArgument);
  EXPECT_THROW(evaluate(std::vector<std::string>{"C1"}, {"NES"}, LevelScheme::anglish()), InvalidArgument);
}

TEST(Schedule, LinearLrEndpoints) {
  EXPECT_DOUBLE_EQ(linear_lr(1e-3, 1e-4, 0, 200), 1e-3);
  EXPECT_DOUBLE_EQ(linear_lr(1e-3, 1e-4, 199, 200), 1e-4);
  EXPECT_NEAR(linear_lr(1.0, 0.0, 50, 101), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(linear_lr(2.0, 1.0, 0, 1), 2.0);
}

TEST(Schedule, PresetsAndJson) {
  for (const auto& name : TrainSchedule::preset_names()) {
    const auto s = TrainSchedule::preset(name);
    EXPECT_NO_THROW(s.validate()) << name;
    EXPECT_EQ(TrainSchedule::from_json(s.to_json()).to_json(), s.to_json()) << name;
  }
  const auto cnn = TrainSchedule::preset("cnn");
  EXPECT_EQ(cnn.max_epochs, 200);
  EXPECT_EQ(cnn.batch_size, 8);
  EXPECT_DOUBLE_EQ(cnn.lr_start, 1e-3);
  EXPECT_DOUBLE_EQ(cnn.lr_end, 1e-4);
  EXPECT_THROW(TrainSchedule::preset("nope"), InvalidArgument);
}

TEST(EarlyStop, PatienceCountsEpochsWithoutImprovement) {
  EarlyStopping es(2);
  EXPECT_FALSE(es.observe(1, 1.0));
  EXPECT_FALSE(es.observe(2, 0.5));
  EXPECT_FALSE(es.observe(3, 0.6));
  EXPECT_TRUE(es.observe(4, 0.5));  // a tie is not an improvement
  EXPECT_EQ(es.best_epoch(), 2);
  EXPECT_DOUBLE_EQ(es.best_loss(), 0.5);
  EXPECT_THROW(EarlyStopping(-1), InvalidArgument);
}

TEST(Batches, TrailingSingletonIsFolded) {
  std::vector<std::size_t> order(17);
  std::iota(order.begin(), order.end(), std::size_t(0));
  const auto b = l2prof::detail::batches(order, 8);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].size(), 9u);
  order.resize(18);
  order[17] = 17;
  EXPECT_EQ(l2prof::detail::batches(order, 8).back().size(), 2u);
  EXPECT_EQ(l2prof::detail::batches({0}, 8).size(), 1u);
}

TEST(Train, RestoresTheBestEpochAndRecordsHistory) {
  auto m = make_mlp<double>(toy::mlp_config());
  // Validation labels are the training labels shifted by one class, so
  // fitting the training set drives validation loss up.
  Rng rng(60);
  std::vector<Example<VectorX<double>>> tr, va;
  for (int i = 0; i < 12; ++i) {
    VectorX<double> x(8);
    for (Index j = 0; j < 8; ++j) x[j] = 0.3 * rng.normal();
    x[i % 3] += 3.0;
    tr.push_back({std::to_string(i), x, {i % 3}});
    va.push_back({"v" + std::to_string(i), x, {(i + 1) % 3}});
  }
  TrainSchedule s = toy::overfit_schedule();
  s.max_epochs = 60;
  s.patience = 3;
  const auto h = train(m, tr, va, s);
  ASSERT_FALSE(h.epochs.empty());
  EXPECT_TRUE(h.early_stopped);
  EXPECT_EQ(static_cast<int>(h.epochs.size()), h.best_epoch + 3);
  double best = INFINITY;
  for (const auto& e : h.epochs) best = std::min(best, e.val_loss);
  EXPECT_EQ(h.best_val_loss, best);
  EXPECT_NEAR(evaluate_loss(m, va, {}, 32).first, h.best_val_loss, 1e-12);
  EXPECT_NE(h.to_csv().find("epoch,train_loss,val_loss,val_acc,lr"), std::string::npos);
  EXPECT_THROW(train(m, {}, va, s), InvalidArgument);
}

TEST(Overfit, Cnn2d) {
  auto m = make_cnn2d<double>(toy::cnn_config());
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_maps(16, 16)), 1.0);
}

TEST(Overfit, FreqCnn) {
  auto m = make_freq_cnn<double>(toy::freq_cnn_config());
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_maps(5, 16)), 1.0);
}

TEST(Overfit, ResNet) {
  auto m = make_resnet<double>(toy::resnet_config());
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_maps(16, 16)), 1.0);
}

TEST(Overfit, Mlp) {
  auto m = make_mlp<double>(toy::mlp_config());
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_vectors(8)), 1.0);
}

TEST(Overfit, BilstmAttention) {
  auto m = make_bilstm_attn<double>(toy::bilstm_config());
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_sequences(3)), 1.0);
}

TEST(Overfit, SpeechEncoderTwoHeads) {
  auto m = toy::speech(53, false);
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_waves(100)), 1.0);
}

TEST(Overfit, FinetunedText) {
  auto m = toy::finetuned({true, true}, 54);
  EXPECT_EQ(toy::overfit_accuracy(m, toy::separable_tokens()), 1.0);
}

TEST(Sweep, GridIsExactlyTenToNinety) {
  EXPECT_EQ(token_length_grid(), (std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90}));
  const auto d = planted_marker_corpus(4, 2, 2, 30, 15, 1);
  SweepSettings s;
  TextEncoderFactory f = [] { return std::shared_ptr<TextEncoder<double>>(toy::text_encoder()); };
  EXPECT_THROW(token_length_sweep(f, {"svm"}, d, s, {10, 20}), InvalidArgument);
  EXPECT_THROW(token_length_sweep(f, {"svm", "cnn"}, d, s), InvalidArgument);
}

TEST(Sweep, PlantedMarkerIsInvisibleBelowItsPosition) {
  const auto d = planted_marker_corpus(200, 50, 200, 40, 15, 3);
  EXPECT_EQ(d.train.texts[0].find("alpha") == std::string::npos, d.train.labels[0] == 1);
  SweepSettings s;
  s.svm.mode = SvmMode::linear;
  TextEncoderFactory f = [] {
    typename HashingTextEncoder<double>::Options o;
    o.dim = 64, o.seed = 9;
    return std::make_shared<HashingTextEncoder<double>>(o);
  };
  const double short_acc = text_family_accuracy(f, "svm", d, s, 10);
  const double long_acc = text_family_accuracy(f, "svm", d, s, 20);
  EXPECT_LT(std::abs(short_acc - 0.5), 0.15);
  EXPECT_GE(long_acc, 0.95);
}
