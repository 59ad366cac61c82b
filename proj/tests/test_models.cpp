// tests/test_models.cpp

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
#include <filesystem>

#include "gradcheck.hpp"
#include "l2prof/models/svm.hpp"
#include "l2prof/train_eval.hpp"
#include "oracles.hpp"
#include "toy_models.hpp"

using namespace l2prof;
using namespace l2prof::models;

namespace {

template <typename Model>
void expect_gradcheck(Model& m, const typename Model::Input& x, std::uint64_t seed = 11) {
  const auto r = gradcheck::run(m, x, seed);
  EXPECT_GT(r.checked, 0);
  EXPECT_LE(r.max_rel_error, gradcheck::kTolerance) << "worst tensor: " << r.worst;
}

template <typename Model>
void expect_rows_normalized(Model& m, const typename Model::Input& x) {
  for (const auto& lp : m.forward(x, nn::Mode::eval)) {
    ASSERT_GT(lp.size(), 0);
    for (Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-6);
  }
}

nn::Tensor<double> random_tensor(nn::Shape s, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = rng.normal();
  return t;
}

}  // namespace

TEST(Gradients, Cnn2d) {
  auto m = make_cnn2d<double>(toy::cnn_config());
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::maps(4, 16, 16, 1)));
}

TEST(Gradients, FreqCnn) {
  auto m = make_freq_cnn<double>(toy::freq_cnn_config());
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::maps(4, 5, 16, 2)));
}

TEST(Gradients, ResNet) {
  auto m = make_resnet<double>(toy::resnet_config());
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::maps(4, 16, 16, 3)));
}

TEST(Gradients, ResidualBlockAlone) {
  Rng rng(9);
  auto block = residual_block<double>("b", 2, 3, 3, 2, rng);
  const auto x = random_tensor({4, 2, 6, 6}, 10);
  const auto y0 = block->forward(x, nn::Mode::train);
  const auto R = random_tensor(y0.shape, 12);
  nn::ParamList<double> ps;
  block->collect(ps);
  for (auto* p : ps) p->zero_grad();
  block->forward(x, nn::Mode::train);
  block->backward(R);
  auto loss = [&] { return block->forward(x, nn::Mode::train).data.dot(R.data); };
  double worst = 0;
  for (auto* p : ps) {
    MatrixX<double> num(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      double& v = p->value.data()[i];
      const double keep = v;
      v = keep + gradcheck::kStep;
      const double lp = loss();
      v = keep - gradcheck::kStep;
      const double lm = loss();
      v = keep;
      num.data()[i] = (lp - lm) / (2 * gradcheck::kStep);
    }
    const double d = std::max(p->grad.norm(), num.norm());
    if (d >= gradcheck::kZeroNorm) worst = std::max(worst, (p->grad - num).norm() / d);
  }
  EXPECT_LE(worst, gradcheck::kTolerance);
}

TEST(Gradients, Mlp) {
  auto m = make_mlp<double>(toy::mlp_config());
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::vectors(4, 8, 4)));
}

TEST(Gradients, BilstmAttention) {
  auto m = make_bilstm_attn<double>(toy::bilstm_config());
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::sequences({4, 2, 3}, 3, 5)));
}

TEST(Gradients, SpeechEncoderTwoHeads) {
  auto m = toy::speech(6, false);
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::waves(4, 100, 6)));
}

TEST(Gradients, FinetunedText) {
  auto m = toy::finetuned({true, true});
  expect_gradcheck(m, toy::collate<decltype(m)>(toy::token_batches(4, 7)));
}

TEST(Gradients, ToyModelsStaySmall) {
  auto count = [](auto& m) {
    long n = 0;
    for (auto* p : m.parameters()) n += p->value.size();
    return n;
  };
  auto a = make_cnn2d<double>(toy::cnn_config());
  auto b = make_freq_cnn<double>(toy::freq_cnn_config());
  auto c = make_resnet<double>(toy::resnet_config());
  auto d = make_mlp<double>(toy::mlp_config());
  auto e = make_bilstm_attn<double>(toy::bilstm_config());
  auto f = toy::speech();
  auto g = toy::finetuned();
  for (long n : {count(a), count(b), count(c), count(d), count(e), count(f), count(g)}) EXPECT_LT(n, 2000);
}

TEST(LogSoftmax, RowsSumToOne) {
  auto a = make_cnn2d<double>(toy::cnn_config());
  expect_rows_normalized(a, toy::collate<decltype(a)>(toy::maps(3, 16, 16, 21)));
  auto b = make_freq_cnn<double>(toy::freq_cnn_config());
  expect_rows_normalized(b, toy::collate<decltype(b)>(toy::maps(3, 5, 16, 22)));
  auto c = make_resnet<double>(toy::resnet_config());
  expect_rows_normalized(c, toy::collate<decltype(c)>(toy::maps(3, 16, 16, 23)));
  auto d = make_mlp<double>(toy::mlp_config());
  expect_rows_normalized(d, toy::collate<decltype(d)>(toy::vectors(3, 8, 24)));
  auto e = make_bilstm_attn<double>(toy::bilstm_config());
  expect_rows_normalized(e, toy::collate<decltype(e)>(toy::sequences({5, 1}, 3, 25)));
  auto f = toy::speech();
  expect_rows_normalized(f, toy::collate<decltype(f)>(toy::waves(3, 64, 26)));
  auto g = toy::finetuned();
  expect_rows_normalized(g, toy::collate<decltype(g)>(toy::token_batches(3, 27)));
}

TEST(LogSoftmax, LargeLogitsStayFinite) {
  nn::LogSoftmax<double> ls;
  MatrixX<double> z(2, 3);
  z << 1000, 0, -1000, -5000, -5000, -5000;
  const auto y = ls.forward(nn::Tensor<double>::from_matrix(z), nn::Mode::eval).to_matrix();
  EXPECT_TRUE(y.allFinite());
  EXPECT_NEAR(y.row(0).array().exp().sum(), 1.0, 1e-12);
  EXPECT_NEAR(y(1, 0), -std::log(3.0), 1e-12);
}

TEST(Residual, ZeroBranchIsExactlyTheShortcut) {
  Rng rng(3);
  auto block = residual_block<double>("b", 2, 4, 3, 2, rng);
  nn::ParamList<double> ps;
  block->branch().collect(ps);
  for (auto* p : ps)
    if (p->name.find("conv2") != std::string::npos) p->value.setZero();
  const auto x = random_tensor({2, 2, 7, 5}, 4);
  for (auto mode : {nn::Mode::eval, nn::Mode::train}) {
    const auto y = block->forward(x, mode);
    const auto s = block->shortcut().forward(x, mode);
    ASSERT_EQ(y.shape, s.shape);
    for (Index i = 0; i < y.size(); ++i) EXPECT_EQ(y.data[i], s.data[i]);
  }
}

TEST(Shapes, ResNetDefaultChainEndsAt25x2x512) {
  ResNetConfig cfg;
  const auto chain = resnet_shape_chain(cfg);
  ASSERT_EQ(chain.size(), 6u);
  EXPECT_EQ(chain.back(), (std::array<Index, 3>{25, 2, 512}));
  const std::vector<std::array<Index, 3>> expect = {
      {798, 40, 1}, {399, 20, 128}, {200, 10, 128}, {100, 5, 256}, {50, 3, 256}, {25, 2, 512}};
  EXPECT_EQ(chain, expect);
  auto m = make_resnet<float>(cfg);
  EXPECT_EQ(m.trunk().feature_shape(), (nn::Shape{1, 512, 25, 2}));
  EXPECT_EQ(m.trunk().output_dim(), 512);
}

TEST(Shapes, Cnn2dDefaultHalvesFourTimes) {
  auto m = make_cnn2d<float>(Cnn2dConfig{});
  EXPECT_EQ(m.trunk().feature_shape(), (nn::Shape{1, 256, 49, 2}));
  EXPECT_EQ(m.trunk().output_dim(), 256 * 49 * 2);
}

TEST(Shapes, FreqCnnKeepsEveryFrame) {
  auto m = make_freq_cnn<float>(FreqCnnConfig{});
  EXPECT_EQ(m.trunk().feature_shape(), (nn::Shape{1, 256, 798, 2}));
  EXPECT_EQ(m.trunk().output_dim(), 256 * 2);
}

TEST(Shapes, WrongInputShapeIsRejected) {
  auto m = make_cnn2d<double>(toy::cnn_config());
  EXPECT_THROW(m.forward(toy::collate<decltype(m)>(toy::maps(2, 15, 16, 1)), nn::Mode::eval), ShapeError);
  Cnn2dConfig bad = toy::cnn_config();
  bad.blocks.pop_back();
  EXPECT_THROW(make_cnn2d<double>(bad), InvalidArgument);
}

TEST(FreqCnn, TimeStepsAreProcessedIndependently) {
  auto m = make_freq_cnn<double>(toy::freq_cnn_config());
  const auto xs = toy::maps(2, 5, 16, 30);
  auto shifted = xs;
  for (auto& s : shifted) {
    RowMatrixX<double> r(s.rows(), s.cols());
    for (Index t = 0; t < s.rows(); ++t) r.row((t + 2) % s.rows()) = s.row(t);
    s = r;
  }
  using M = decltype(m);
  const auto f0 = m.trunk().features(toy::collate<M>(xs), nn::Mode::eval);
  const auto f1 = m.trunk().features(toy::collate<M>(shifted), nn::Mode::eval);
  ASSERT_EQ(f0.shape, f1.shape);
  EXPECT_EQ(f0.h(), 5);
  for (Index n = 0; n < f0.n(); ++n)
    for (Index c = 0; c < f0.c(); ++c)
      for (Index t = 0; t < f0.h(); ++t)
        for (Index w = 0; w < f0.w(); ++w)
          EXPECT_NEAR(f1.at(n, c, (t + 2) % 5, w), f0.at(n, c, t, w), 1e-12);
  const auto o0 = m.forward(toy::collate<M>(xs), nn::Mode::eval)[0];
  const auto o1 = m.forward(toy::collate<M>(shifted), nn::Mode::eval)[0];
  EXPECT_LT((o0 - o1).cwiseAbs().maxCoeff(), 1e-12);
}

namespace {

template <typename Model, typename Sample>
void train_steps(Model& m, const std::vector<Sample>& xs, int steps) {
  std::vector<Example<Sample>> data;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<int> t(m.num_heads());
    for (std::size_t h = 0; h < t.size(); ++h) t[h] = static_cast<int>(i % 2);
    data.push_back({"s" + std::to_string(i), xs[i], t});
  }
  TrainSchedule s;
  s.max_epochs = steps;
  s.batch_size = static_cast<int>(xs.size());
  s.lr_start = s.lr_end = 1e-2;
  s.patience = steps;
  s.weight_decay = 1e-2;
  train(m, data, data, s);
}

nn::ParamList<double> frozen_of(nn::ParamList<double> ps, bool frozen) {
  nn::ParamList<double> out;
  for (auto* p : ps)
    if (p->frozen == frozen) out.push_back(p);
  return out;
}

}  // namespace

TEST(Freezing, FeatureExtractorChecksumInvariant) {
  auto m = toy::speech(6, true);
  const auto frozen = frozen_of(m.parameters(), true);
  ASSERT_EQ(frozen.size(), 2u);
  const auto before = nn::checksum(frozen);
  const auto trainable_before = nn::checksum(frozen_of(m.parameters(), false));
  const auto xs = toy::waves(4, 100, 40);
  using M = decltype(m);
  nn::Optimizer<double> opt(nn::OptimizerKind::adam, m.parameters(), 1e-2);
  for (int step = 0; step < 10; ++step) {
    opt.zero_grad();
    const auto out = m.forward(toy::collate<M>(xs), nn::Mode::train);
    std::vector<MatrixX<double>> g;
    for (const auto& o : out) g.push_back(MatrixX<double>::Constant(o.rows(), o.cols(), 0.1));
    m.backward(g);
    opt.step(1e-2);
    EXPECT_EQ(nn::checksum(frozen), before) << "step " << step;
  }
  EXPECT_NE(nn::checksum(frozen_of(m.parameters(), false)), trainable_before);
}

TEST(Freezing, FinetuneMaskTrainsOnlyTheLastLayer) {
  auto m = toy::finetuned({false, true});
  nn::ParamList<double> layer1, layer2;
  for (auto* p : m.parameters()) {
    if (p->name.rfind("text.layer1", 0) == 0) layer1.push_back(p);
    if (p->name.rfind("text.layer2", 0) == 0) layer2.push_back(p);
  }
  ASSERT_EQ(layer1.size(), 3u);
  ASSERT_EQ(layer2.size(), 3u);
  for (auto* p : layer1) EXPECT_TRUE(p->frozen);
  for (auto* p : layer2) EXPECT_FALSE(p->frozen);
  const auto c1 = nn::checksum(layer1), c2 = nn::checksum(layer2);
  using M = decltype(m);
  const auto xs = toy::token_batches(4, 41);
  nn::Optimizer<double> opt(nn::OptimizerKind::adam, m.parameters(), 0.0);
  for (int step = 0; step < 10; ++step) {
    opt.zero_grad();
    const auto out = m.forward(toy::collate<M>(xs), nn::Mode::train);
    m.backward({MatrixX<double>::Constant(out[0].rows(), out[0].cols(), 0.3)});
    opt.step(1e-2);
    EXPECT_EQ(nn::checksum(layer1), c1);
  }
  EXPECT_NE(nn::checksum(layer2), c2);
}

TEST(Freezing, TrainLoopLeavesFrozenTensorsAlone) {
  auto m = toy::speech(8, true);
  const auto frozen = frozen_of(m.parameters(), true);
  const auto before = nn::checksum(frozen);
  train_steps(m, toy::waves(8, 100, 42), 10);
  EXPECT_EQ(nn::checksum(frozen), before);
}

TEST(Finetune, UnsupportedEncoderRefusesTrainableMask) {
  MlpConfig mlp{{4, 3}, 0.0, 0};
  class Fixed : public TextEncoder<double> {
   public:
    EncoderDescriptor descriptor() const override { return {"fixed", "1", 4, {}}; }
    const SubwordTokenizer& tokenizer() const override { return tok_; }
    Index dim() const override { return 4; }
    Index num_layers() const override { return 1; }
    void set_trainable_layers(const std::vector<bool>&) override {}
    std::vector<bool> trainable_layers() const override { return {false}; }
    MatrixX<double> sequence_output(const TokenIds& ids) const override {
      return MatrixX<double>::Ones(static_cast<Index>(ids.size()), 4);
    }
    MatrixX<double> forward_pooled(const std::vector<TokenIds>& batch, nn::Mode) override {
      return MatrixX<double>::Ones(static_cast<Index>(batch.size()), 4);
    }

   private:
    SubwordTokenizer tok_;
  };
  EXPECT_THROW(make_finetuned_text<double>(std::make_shared<Fixed>(), {true}, mlp), AdapterError);
  EXPECT_NO_THROW(make_finetuned_text<double>(std::make_shared<Fixed>(), {false}, mlp));
}

TEST(Multitask, DisabledHeadMatchesSingleTaskModel) {
  auto two = toy::speech(12, false);
  SpeechEncoderConfig one_cfg;
  one_cfg.encoder_dim = 4;
  one_cfg.feature_extractor_frozen = false;
  one_cfg.heads = {{"level", 3, 3}};
  one_cfg.seed = 12;
  typename ToySpeechEncoder<double>::Options o;
  o.dim = 4, o.feature_dim = 3, o.window = 20, o.hop = 16, o.seed = 12;
  auto one = make_speech_classifier<double>(one_cfg, std::make_unique<ToySpeechEncoder<double>>(o));
  ASSERT_EQ(two.num_heads(), 2u);
  EXPECT_EQ(two.head(1).name, "gender");
  two.set_head_enabled(1, false);

  using M = decltype(two);
  const auto x = toy::collate<M>(toy::waves(4, 100, 13));
  const auto a = two.forward(x, nn::Mode::train);
  const auto b = one.forward(x, nn::Mode::train);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].size(), 0);
  EXPECT_EQ(a[0], b[0]);

  for (auto* p : two.parameters()) p->zero_grad();
  for (auto* p : one.parameters()) p->zero_grad();
  MatrixX<double> g = MatrixX<double>::Constant(4, 3, 0.25);
  two.backward({g, MatrixX<double>()});
  one.backward({g});
  std::map<std::string, MatrixX<double>> ga;
  for (auto* p : two.parameters()) ga[p->name] = p->grad;
  for (auto* p : one.parameters()) {
    ASSERT_TRUE(ga.count(p->name)) << p->name;
    EXPECT_EQ(ga[p->name], p->grad) << p->name;
  }
}

TEST(Multitask, ParamGroupsSplitEncoderAndClassifier) {
  auto m = toy::speech();
  const auto groups = m.param_groups();
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].first, "encoder");
  EXPECT_EQ(groups[1].first, "classifier");
  for (auto* p : groups[0].second) EXPECT_EQ(p->name.rfind("encoder.", 0), 0u) << p->name;
}

TEST(Pooling, ConstantEncoderPoolsToItsValue) {
  VectorX<double> v(3);
  v << 0.5, -1.0, 2.0;
  SpeechEncoderConfig c;
  c.encoder_dim = 3;
  c.heads = {{"level", 3, 4}};
  auto m = make_speech_classifier<double>(c, std::make_unique<ConstantEncoder<double>>(v));
  std::vector<VectorX<double>> w{VectorX<double>::Zero(3200), VectorX<double>::Ones(16000)};
  const auto z = m.trunk().forward(w, nn::Mode::eval).to_matrix();
  ASSERT_EQ(z.rows(), 2);
  for (Index r = 0; r < 2; ++r) EXPECT_EQ(z.row(r), v.transpose());
}

TEST(Pooling, MeanStdConcatenatesStatistics) {
  MatrixX<double> seq(3, 2);
  seq << 1, 4, 2, 4, 6, 4;
  SpeechEncoderConfig c;
  c.encoder_dim = 2;
  c.std_pooling = true;
  c.heads = {{"level", 3, 4}};
  auto m = make_speech_classifier<double>(
      c, std::make_unique<ScriptedEncoder<double>>(2, [&](const VectorX<double>&) { return seq; }));
  EXPECT_EQ(m.trunk().output_dim(), 4);
  const auto z = m.trunk().forward({VectorX<double>::Zero(10)}, nn::Mode::eval).to_matrix();
  EXPECT_NEAR(z(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(z(0, 1), 4.0, 1e-12);
  EXPECT_NEAR(z(0, 2), std::sqrt(14.0 / 3.0), 1e-9);
  EXPECT_NEAR(z(0, 3), 0.0, 1e-4);
}

TEST(Pooling, AdapterContractViolationsAreNamed) {
  SpeechEncoderConfig c;
  c.encoder_dim = 2;
  c.heads = {{"level", 3, 4}};
  auto empty = make_speech_classifier<double>(
      c, std::make_unique<ScriptedEncoder<double>>(2, [](const VectorX<double>&) { return MatrixX<double>(0, 2); }));
  EXPECT_THROW(empty.forward({VectorX<double>::Zero(10)}, nn::Mode::eval), AdapterError);
  auto wide = make_speech_classifier<double>(
      c, std::make_unique<ScriptedEncoder<double>>(2, [](const VectorX<double>&) { return MatrixX<double>::Ones(2, 5); }));
  EXPECT_THROW(wide.forward({VectorX<double>::Zero(10)}, nn::Mode::eval), AdapterError);
  EXPECT_THROW(make_speech_classifier<double>(c, std::make_unique<ConstantEncoder<double>>(VectorX<double>::Ones(3))),
               ShapeError);
}

TEST(Attention, SingleTokenGetsAllWeightAndPaddingNone) {
  auto m = make_bilstm_attn<double>(toy::bilstm_config());
  using M = decltype(m);
  const auto seqs = toy::sequences({1, 4, 2}, 3, 50);
  m.forward(toy::collate<M>(seqs), nn::Mode::eval);
  const auto& a = m.trunk().attention();
  ASSERT_EQ(a.size(), 3u);
  ASSERT_EQ(a[0].size(), 4);
  EXPECT_EQ(a[0][0], 1.0);
  for (Index i = 1; i < 4; ++i) EXPECT_EQ(a[0][i], 0.0);
  EXPECT_NEAR(a[1].sum(), 1.0, 1e-12);
  EXPECT_EQ(a[2][2], 0.0);
  EXPECT_EQ(a[2][3], 0.0);
  EXPECT_NEAR(a[2].sum(), 1.0, 1e-12);
}

TEST(Attention, PaddingDoesNotChangeTheOutput) {
  auto m = make_bilstm_attn<double>(toy::bilstm_config());
  using M = decltype(m);
  const auto seqs = toy::sequences({2, 6}, 3, 51);
  const auto together = m.forward(toy::collate<M>(seqs), nn::Mode::eval)[0];
  const auto alone = m.forward(toy::collate<M>({seqs[0]}), nn::Mode::eval)[0];
  EXPECT_LT((together.row(0) - alone.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Truncation, KeepsPrefixAndClosingSeparator) {
  const std::vector<int> wrapped{1, 10, 11, 12, 13, 2};
  EXPECT_EQ(truncate_tokens(wrapped, 4), (std::vector<int>{1, 10, 11, 2}));
  EXPECT_EQ(truncate_tokens(wrapped, 6), wrapped);
  EXPECT_EQ(truncate_tokens(wrapped, 99), wrapped);
  EXPECT_EQ(truncate_tokens({5, 6, 7, 8}, 2), (std::vector<int>{5, 6}));
  EXPECT_THROW(truncate_tokens(wrapped, 0), InvalidArgument);
  SubwordTokenizer tok;
  const auto ids = truncate_tokens(tok.encode("one two three four five six seven"), 5);
  ASSERT_EQ(ids.size(), 5u);
  EXPECT_EQ(ids.front(), SubwordTokenizer::kCls);
  EXPECT_EQ(ids.back(), SubwordTokenizer::kSep);
}

TEST(Svm, SeparatesBlobs) {
  Rng rng(60);
  MatrixX<double> x(60, 2);
  std::vector<int> y;
  for (Index i = 0; i < 60; ++i) {
    const int c = static_cast<int>(i % 3);
    x(i, 0) = 4.0 * c + 0.3 * rng.normal();
    x(i, 1) = (c == 1 ? 4.0 : 0.0) + 0.3 * rng.normal();
    y.push_back(c);
  }
  for (auto mode : {SvmMode::rbf, SvmMode::linear}) {
    SvmConfig cfg;
    cfg.mode = mode;
    cfg.gamma = 0.5;
    cfg.epochs = 200;
    Svm svm(cfg);
    svm.fit(x, y);
    EXPECT_EQ(svm.predict(x), y) << (mode == SvmMode::rbf ? "rbf" : "linear");
  }
}

TEST(Svm, XorMatchesReferenceDualSolution) {
  std::vector<std::vector<double>> pts;
  std::vector<int> yb, y;
  Rng rng(61);
  for (int i = 0; i < 24; ++i) {
    const double a = (i & 1) ? 1.0 : -1.0, b = (i & 2) ? 1.0 : -1.0;
    pts.push_back({a + 0.2 * rng.normal(), b + 0.2 * rng.normal()});
    yb.push_back(a * b > 0 ? 1 : -1);
    y.push_back(a * b > 0 ? 1 : 0);
  }
  MatrixX<double> x(24, 2);
  for (Index i = 0; i < 24; ++i) x.row(i) << pts[i][0], pts[i][1];
  SvmConfig cfg;
  cfg.gamma = 1.0;
  cfg.C = 10.0;
  Svm svm(cfg);
  svm.fit(x, y);
  const auto ref = oracle::kernel_svm_train_predictions(pts, yb, 1.0, 10.0);
  const auto got = svm.predict(x);
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(got[i] == 1 ? 1 : -1, ref[i]) << i;
  EXPECT_EQ(got, y);
}

TEST(Svm, ConflictingDuplicatesTerminate) {
  MatrixX<double> x(4, 1);
  x << 0.0, 0.0, 1.0, 1.0;
  Svm svm;
  svm.fit(x, {0, 1, 1, 1});
  const auto p = svm.predict(x);
  EXPECT_EQ(p[2], 1);
  EXPECT_TRUE(p[0] == 0 || p[0] == 1);
}

TEST(Svm, JsonRoundTripPreservesDecisions) {
  MatrixX<double> x(12, 2);
  std::vector<int> y;
  Rng rng(62);
  for (Index i = 0; i < 12; ++i) {
    x.row(i) << rng.normal() + (i % 2) * 3, rng.normal();
    y.push_back(static_cast<int>(i % 2));
  }
  Svm svm;
  svm.fit(x, y);
  const Svm back = Svm::from_json(nlohmann::json::parse(svm.to_json().dump()));
  EXPECT_LT((svm.decision_function(x) - back.decision_function(x)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(Svm().predict(x), Error);
}

TEST(Checkpoint, RoundTripRestoresEvalOutputs) {
  auto m = make_cnn2d<double>(toy::cnn_config(70));
  using M = decltype(m);
  const auto x = toy::collate<M>(toy::maps(4, 16, 16, 71));
  m.forward(x, nn::Mode::train);  // moves BN running statistics
  const auto path = (std::filesystem::temp_directory_path() / "l2prof_ckpt_test.bin").string();
  save_checkpoint(path, m.parameters(), m.buffers(), {{"arch", "cnn2d"}});
  auto fresh = make_cnn2d<double>(toy::cnn_config(99));
  EXPECT_NE(fresh.forward(x, nn::Mode::eval)[0], m.forward(x, nn::Mode::eval)[0]);
  const auto meta = load_checkpoint(path, fresh.parameters(), fresh.buffers());
  EXPECT_EQ(meta["arch"], "cnn2d");
  EXPECT_EQ(fresh.forward(x, nn::Mode::eval)[0], m.forward(x, nn::Mode::eval)[0]);
  auto other = make_mlp<double>(toy::mlp_config());
  EXPECT_THROW(load_checkpoint(path, other.parameters(), other.buffers()), Error);
  std::filesystem::remove(path);
}

TEST(Determinism, EvalModeIgnoresDropoutAndRepeats) {
  Cnn2dConfig c = toy::cnn_config(80);
  for (auto& b : c.blocks) b.dropout_p = 0.5;
  auto m = make_cnn2d<double>(c);
  using M = decltype(m);
  const auto x = toy::collate<M>(toy::maps(3, 16, 16, 81));
  const auto a = m.forward(x, nn::Mode::eval)[0];
  m.forward(x, nn::Mode::train);
  const auto b = m.forward(x, nn::Mode::eval)[0];
  EXPECT_EQ(a.rows(), 3);
  auto m2 = make_cnn2d<double>(c);
  EXPECT_EQ(m2.forward(x, nn::Mode::eval)[0], make_cnn2d<double>(c).forward(x, nn::Mode::eval)[0]);
  // Train-mode BN statistics update running buffers, so b may differ from
  // a; two eval passes in a row must not.
  EXPECT_EQ(m.forward(x, nn::Mode::eval)[0], b);
}
