// l2prof/models/text.hpp

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

#include <memory>
#include <string>
#include <vector>

#include "l2prof/models/classifier.hpp"
#include "l2prof/models/speech.hpp"
#include "l2prof/nn/recurrent.hpp"
#include "l2prof/tokenizer.hpp"

namespace l2prof::models {

using TokenIds = std::vector<int>;

/// Pretrained text encoder behind a tokenizer. Evaluation-mode outputs
/// are deterministic; layers outside the trainable mask are frozen.
template <typename Scalar>
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual EncoderDescriptor descriptor() const = 0;
  virtual const SubwordTokenizer& tokenizer() const = 0;
  virtual Index dim() const = 0;
  virtual Index num_layers() const = 0;
  virtual bool supports_finetuning() const { return false; }
  virtual void set_trainable_layers(const std::vector<bool>& mask) = 0;
  virtual std::vector<bool> trainable_layers() const = 0;

  /// T x dim contextual outputs.
  virtual MatrixX<Scalar> sequence_output(const TokenIds& ids) const = 0;
  /// Sequence-level vector (mean of the sequence outputs).
  virtual VectorX<Scalar> pooled(const TokenIds& ids) const {
    return sequence_output(ids).colwise().mean().transpose();
  }

  /// Batched pooled forward that keeps caches for backward_pooled().
  virtual MatrixX<Scalar> forward_pooled(const std::vector<TokenIds>& batch, Mode mode) = 0;
  virtual void backward_pooled(const MatrixX<Scalar>&) {
    throw AdapterError(descriptor().id + " does not support fine-tuning");
  }
  virtual void collect(nn::ParamList<Scalar>&) {}

  /// [CLS] pieces [SEP], truncated to max_tokens.
  TokenIds encode(const std::string& text, std::size_t max_tokens) const {
    return truncate_tokens(tokenizer().encode(text), max_tokens);
  }
};

/// In-process encoder: hashed subword embeddings (fixed pseudo-random
/// vectors per id) followed by L residual mixing layers
///   h' = h + tanh(W h_t + U mean(h) + b).
template <typename Scalar>
class HashingTextEncoder : public TextEncoder<Scalar> {
 public:
  struct Options {
    Index dim = 768;
    Index layers = 2;
    std::uint64_t seed = 0;
  };

  explicit HashingTextEncoder(Options o) : o_(o) {
    Rng rng(derive_seed(o.seed, 3));
    const double bound = 0.5 * std::sqrt(3.0 / double(o.dim));
    for (Index l = 0; l < o.layers; ++l) {
      const std::string n = "text.layer" + std::to_string(l + 1);
      layers_.push_back({nn::Parameter<Scalar>(n + ".w", nn::uniform_init<Scalar>(o.dim, o.dim, bound, rng)),
                         nn::Parameter<Scalar>(n + ".u", nn::uniform_init<Scalar>(o.dim, o.dim, bound, rng)),
                         nn::Parameter<Scalar>(n + ".b", MatrixX<Scalar>::Zero(o.dim, 1))});
    }
    set_trainable_layers(std::vector<bool>(static_cast<std::size_t>(o.layers), false));
  }

  EncoderDescriptor descriptor() const override { return {"hashing-text-encoder", "1", o_.dim, {}}; }
  const SubwordTokenizer& tokenizer() const override { return tok_; }
  Index dim() const override { return o_.dim; }
  Index num_layers() const override { return o_.layers; }
  bool supports_finetuning() const override { return true; }

  void set_trainable_layers(const std::vector<bool>& mask) override {
    if (mask.size() != layers_.size())
      throw InvalidArgument("layer mask has " + std::to_string(mask.size()) + " entries for " +
                            std::to_string(layers_.size()) + " layers");
    for (std::size_t l = 0; l < layers_.size(); ++l)
      layers_[l].w.frozen = layers_[l].u.frozen = layers_[l].b.frozen = !mask[l];
  }
  std::vector<bool> trainable_layers() const override {
    std::vector<bool> m;
    for (const auto& l : layers_) m.push_back(!l.w.frozen);
    return m;
  }

  /// Fixed embedding of one token id.
  VectorX<Scalar> embedding(int id) const {
    Rng r(derive_seed(o_.seed ^ 0x5eed5eedULL, static_cast<std::uint64_t>(id)));
    VectorX<Scalar> e(o_.dim);
    for (Index i = 0; i < o_.dim; ++i) e[i] = static_cast<Scalar>(r.normal());
    return e;
  }

  MatrixX<Scalar> sequence_output(const TokenIds& ids) const override {
    return run(ids, nullptr).transpose();
  }

  MatrixX<Scalar> forward_pooled(const std::vector<TokenIds>& batch, Mode mode) override {
    MatrixX<Scalar> out(static_cast<Index>(batch.size()), o_.dim);
    if (mode == Mode::train) cache_.assign(batch.size(), {});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const MatrixX<Scalar> h = run(batch[i], mode == Mode::train ? &cache_[i] : nullptr);
      out.row(static_cast<Index>(i)) = h.rowwise().mean().transpose();
    }
    return out;
  }

  void backward_pooled(const MatrixX<Scalar>& grad) override {
    if (static_cast<std::size_t>(grad.rows()) != cache_.size())
      throw Error("text encoder: backward without a train-mode forward");
    Index lowest = o_.layers;
    for (Index l = o_.layers - 1; l >= 0; --l)
      if (!layers_[static_cast<std::size_t>(l)].w.frozen) lowest = l;
    for (std::size_t i = 0; i < cache_.size(); ++i) {
      const auto& c = cache_[i];
      const Index T = c.inputs.front().cols();
      MatrixX<Scalar> g(o_.dim, T);
      g.colwise() = grad.row(static_cast<Index>(i)).transpose() / Scalar(T);
      for (Index l = o_.layers - 1; l >= lowest; --l) {
        auto& L = layers_[static_cast<std::size_t>(l)];
        const MatrixX<Scalar>& h = c.inputs[static_cast<std::size_t>(l)];
        const MatrixX<Scalar>& a = c.acts[static_cast<std::size_t>(l)];
        const VectorX<Scalar> m = h.rowwise().mean();
        const MatrixX<Scalar> d = g.cwiseProduct(MatrixX<Scalar>::Ones(a.rows(), a.cols()) - a.cwiseAbs2());
        const VectorX<Scalar> dsum = d.rowwise().sum();
        if (!L.w.frozen) {
          L.w.grad.noalias() += d * h.transpose();
          L.u.grad.noalias() += dsum * m.transpose();
          L.b.grad.col(0) += dsum;
        }
        if (l == lowest) break;
        MatrixX<Scalar> gin = g + L.w.value.transpose() * d;
        gin.colwise() += L.u.value.transpose() * dsum / Scalar(T);
        g = std::move(gin);
      }
    }
  }

  void collect(nn::ParamList<Scalar>& out) override {
    for (auto& l : layers_) {
      out.push_back(&l.w);
      out.push_back(&l.u);
      out.push_back(&l.b);
    }
  }

  nn::ParamList<Scalar> layer_params(std::size_t l) {
    return {&layers_.at(l).w, &layers_.at(l).u, &layers_.at(l).b};
  }

 private:
  struct MixLayer {
    nn::Parameter<Scalar> w, u, b;
  };
  struct Cache {
    std::vector<MatrixX<Scalar>> inputs, acts;  // dim x T per layer
  };

  /// dim x T final hidden states.
  MatrixX<Scalar> run(const TokenIds& ids, Cache* cache) const {
    if (ids.empty()) throw InvalidArgument("text encoder: empty token sequence");
    MatrixX<Scalar> h(o_.dim, static_cast<Index>(ids.size()));
    for (std::size_t t = 0; t < ids.size(); ++t) h.col(static_cast<Index>(t)) = embedding(ids[t]);
    for (const auto& L : layers_) {
      const VectorX<Scalar> m = h.rowwise().mean();
      MatrixX<Scalar> a = ((L.w.value * h).colwise() + (L.u.value * m + L.b.value.col(0)))
                              .unaryExpr([](Scalar v) { return std::tanh(v); });
      if (cache) {
        cache->inputs.push_back(h);
        cache->acts.push_back(a);
      }
      h += a;
    }
    return h;
  }

  Options o_;
  SubwordTokenizer tok_;
  std::vector<MixLayer> layers_;
  std::vector<Cache> cache_;
};

/// Fine-tuning trunk: token ids -> encoder pooled output.
template <typename Scalar>
class TextTrunk {
 public:
  using Sample = TokenIds;
  using Input = std::vector<TokenIds>;

  explicit TextTrunk(std::shared_ptr<TextEncoder<Scalar>> enc) : enc_(std::move(enc)) {
    bool any = false;
    for (bool b : enc_->trainable_layers()) any = any || b;
    if (any && !enc_->supports_finetuning())
      throw AdapterError(enc_->descriptor().id + " does not support fine-tuning");
  }

  static Input collate(const std::vector<const Sample*>& xs) {
    Input in;
    for (const auto* x : xs) in.push_back(*x);
    return in;
  }

  Tensor<Scalar> forward(const Input& x, Mode mode) {
    return Tensor<Scalar>::from_matrix(enc_->forward_pooled(x, mode));
  }
  void backward(const Tensor<Scalar>& g) {
    bool any = false;
    for (bool b : enc_->trainable_layers()) any = any || b;
    if (any) enc_->backward_pooled(g.to_matrix());
  }
  void collect(nn::ParamList<Scalar>& out) { enc_->collect(out); }
  void collect_buffers(nn::BufferList<Scalar>&) {}
  Index output_dim() const { return enc_->dim(); }
  std::string group() const { return "encoder"; }
  TextEncoder<Scalar>& encoder() { return *enc_; }

 private:
  std::shared_ptr<TextEncoder<Scalar>> enc_;
};

template <typename Scalar>
using FinetunedTextClassifier = Classifier<Scalar, TextTrunk<Scalar>>;

/// Encoder (layers per mask) feeding an MLP head.
template <typename Scalar>
FinetunedTextClassifier<Scalar> make_finetuned_text(std::shared_ptr<TextEncoder<Scalar>> enc,
                                                    const std::vector<bool>& trainable_mask,
                                                    const MlpConfig& mlp) {
  bool any = false;
  for (bool b : trainable_mask) any = any || b;
  if (any && !enc->supports_finetuning())
    throw AdapterError(enc->descriptor().id + " does not support fine-tuning");
  if (mlp.layer_sizes.front() != enc->dim())
    throw ShapeError("mlp input " + std::to_string(mlp.layer_sizes.front()) + " != encoder dim " +
                     std::to_string(enc->dim()));
  enc->set_trainable_layers(trainable_mask);
  Rng rng(derive_seed(mlp.seed, 1));
  FinetunedTextClassifier<Scalar> m(TextTrunk<Scalar>(std::move(enc)));
  m.add_head("level", mlp.layer_sizes.back(), mlp_layers<Scalar>("mlp", mlp, rng));
  return m;
}

/// Zero-padded sequences with their valid lengths.
template <typename Scalar>
struct SequenceBatch {
  std::vector<MatrixX<Scalar>> seqs;  // each max_len x D
  std::vector<Index> lengths;
};

struct BilstmAttnConfig {
  Index input_dim = 768;
  Index hidden = 64;
  Index attention_dim = 64;
  Index num_classes = 3;
  std::uint64_t seed = 0;
};

/// BiLSTM over (frozen) token embeddings, additive self-attention pooling.
template <typename Scalar>
class BilstmAttnTrunk {
 public:
  using Sample = MatrixX<Scalar>;
  using Input = SequenceBatch<Scalar>;

  explicit BilstmAttnTrunk(const BilstmAttnConfig& cfg)
      : cfg_(cfg),
        rng_(derive_seed(cfg.seed, 5)),
        fwd_("bilstm.fwd", cfg.input_dim, cfg.hidden, false, rng_),
        bwd_("bilstm.bwd", cfg.input_dim, cfg.hidden, true, rng_),
        attn_("attention", 2 * cfg.hidden, cfg.attention_dim, rng_) {}

  static Input collate(const std::vector<const Sample*>& xs) {
    if (xs.empty()) throw InvalidArgument("empty batch");
    Index L = 0;
    for (const auto* x : xs) L = std::max(L, x->rows());
    Input in;
    for (const auto* x : xs) {
      MatrixX<Scalar> p = MatrixX<Scalar>::Zero(L, x->cols());
      p.topRows(x->rows()) = *x;
      in.seqs.push_back(std::move(p));
      in.lengths.push_back(x->rows());
    }
    return in;
  }

  Tensor<Scalar> forward(const Input& x, Mode mode) {
    if (x.seqs.size() != x.lengths.size()) throw ShapeError("sequence batch lengths mismatch");
    const Index H = cfg_.hidden;
    MatrixX<Scalar> out(static_cast<Index>(x.seqs.size()), 2 * H);
    attention_.assign(x.seqs.size(), {});
    if (mode == Mode::train) cache_.assign(x.seqs.size(), {});
    for (std::size_t i = 0; i < x.seqs.size(); ++i) {
      const Index len = x.lengths[i];
      if (len <= 0) throw InvalidArgument("bilstm: all positions masked");
      if (x.seqs[i].cols() != cfg_.input_dim)
        throw ShapeError("bilstm: input dim " + std::to_string(x.seqs[i].cols()) + " != " +
                         std::to_string(cfg_.input_dim));
      const MatrixX<Scalar> xv = x.seqs[i].topRows(len);
      Item* c = mode == Mode::train ? &cache_[i] : nullptr;
      MatrixX<Scalar> h(len, 2 * H);
      h.leftCols(H) = fwd_.forward(xv, c ? &c->f : nullptr);
      h.rightCols(H) = bwd_.forward(xv, c ? &c->b : nullptr);
      MatrixX<Scalar> hp = MatrixX<Scalar>::Zero(x.seqs[i].rows(), 2 * H);
      hp.topRows(len) = h;
      out.row(static_cast<Index>(i)) =
          attn_.forward(hp, len, c ? &c->a : nullptr, &attention_[i]).transpose();
    }
    return Tensor<Scalar>::from_matrix(out);
  }

  void backward(const Tensor<Scalar>& g) {
    const Index H = cfg_.hidden;
    for (std::size_t i = 0; i < cache_.size(); ++i) {
      const MatrixX<Scalar> dh = attn_.backward(g.rows().row(static_cast<Index>(i)).transpose(), cache_[i].a);
      fwd_.backward(dh.leftCols(H), cache_[i].f);
      bwd_.backward(dh.rightCols(H), cache_[i].b);
    }
  }

  void collect(nn::ParamList<Scalar>& out) {
    fwd_.collect(out);
    bwd_.collect(out);
    attn_.collect(out);
  }
  void collect_buffers(nn::BufferList<Scalar>&) {}
  Index output_dim() const { return 2 * cfg_.hidden; }
  std::string group() const { return "trunk"; }

  /// Attention weights of the last forward, zero-padded to max length.
  const std::vector<VectorX<Scalar>>& attention() const { return attention_; }

 private:
  struct Item {
    typename nn::Lstm<Scalar>::Cache f, b;
    typename nn::AdditiveAttention<Scalar>::Cache a;
  };
  BilstmAttnConfig cfg_;
  Rng rng_;
  nn::Lstm<Scalar> fwd_, bwd_;
  nn::AdditiveAttention<Scalar> attn_;
  std::vector<Item> cache_;
  std::vector<VectorX<Scalar>> attention_;
};

template <typename Scalar>
using BilstmAttnClassifier = Classifier<Scalar, BilstmAttnTrunk<Scalar>>;

template <typename Scalar>
BilstmAttnClassifier<Scalar> make_bilstm_attn(const BilstmAttnConfig& cfg) {
  BilstmAttnClassifier<Scalar> m{BilstmAttnTrunk<Scalar>(cfg)};
  Rng rng(derive_seed(cfg.seed, 1));
  m.add_head("level", cfg.num_classes, linear_head<Scalar>("dense", 2 * cfg.hidden, cfg.num_classes, rng));
  return m;
}

}  // namespace l2prof::models
