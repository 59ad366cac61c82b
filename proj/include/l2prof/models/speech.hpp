// l2prof/models/speech.hpp

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

#include "l2prof/models/classifier.hpp"

namespace l2prof::models {

struct EncoderDescriptor {
  std::string id;
  std::string version;
  Index dim = 0;
  /// Environment variables the adapter reads (paths, credentials).
  std::vector<std::string> env;
};

/// Pretrained waveform encoder: 16 kHz samples -> T x dim contextual
/// outputs. Implementations hold per-batch caches for backward().
template <typename Scalar>
class SpeechEncoder {
 public:
  virtual ~SpeechEncoder() = default;
  virtual EncoderDescriptor descriptor() const = 0;
  virtual Index dim() const = 0;
  virtual std::vector<MatrixX<Scalar>> encode(const std::vector<VectorX<Scalar>>& waves, Mode mode) = 0;
  /// Gradients w.r.t. each encode() output of the last train-mode call.
  virtual void backward(const std::vector<MatrixX<Scalar>>&) {}
  virtual void collect(nn::ParamList<Scalar>&) {}
  virtual void set_feature_extractor_frozen(bool) {}
};

/// Emits a fixed vector at every 20 ms step.
template <typename Scalar>
class ConstantEncoder : public SpeechEncoder<Scalar> {
 public:
  explicit ConstantEncoder(VectorX<Scalar> value, Index hop = 320) : value_(std::move(value)), hop_(hop) {}

  EncoderDescriptor descriptor() const override { return {"constant-encoder", "1", dim(), {}}; }
  Index dim() const override { return value_.size(); }

  std::vector<MatrixX<Scalar>> encode(const std::vector<VectorX<Scalar>>& waves, Mode) override {
    std::vector<MatrixX<Scalar>> out;
    for (const auto& w : waves) {
      MatrixX<Scalar> m(w.size() / hop_, value_.size());
      m.rowwise() = value_.transpose();
      out.push_back(std::move(m));
    }
    return out;
  }

 private:
  VectorX<Scalar> value_;
  Index hop_;
};

/// Test double returning whatever a callback produces.
template <typename Scalar>
class ScriptedEncoder : public SpeechEncoder<Scalar> {
 public:
  using Fn = std::function<MatrixX<Scalar>(const VectorX<Scalar>&)>;
  ScriptedEncoder(Index dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  EncoderDescriptor descriptor() const override { return {"scripted-encoder", "1", dim_, {}}; }
  Index dim() const override { return dim_; }
  std::vector<MatrixX<Scalar>> encode(const std::vector<VectorX<Scalar>>& waves, Mode) override {
    std::vector<MatrixX<Scalar>> out;
    for (const auto& w : waves) out.push_back(fn_(w));
    return out;
  }

 private:
  Index dim_;
  Fn fn_;
};

/// Small in-process stand-in for a pretrained encoder: a framing
/// projection (400-sample windows, 320 hop) acting as the convolutional
/// feature extractor, then a trainable context layer.
///   z_t = tanh(P x_t + p),  h_t = U z_t + tanh(W z_t + b)
template <typename Scalar>
class ToySpeechEncoder : public SpeechEncoder<Scalar> {
 public:
  struct Options {
    Index dim = 768;
    Index feature_dim = 64;
    Index window = 400, hop = 320;
    std::uint64_t seed = 0;
  };

  explicit ToySpeechEncoder(Options o)
      : o_(o), rng_(derive_seed(o.seed, 7)),
        proj_("encoder.feature.proj", nn::uniform_init<Scalar>(o.feature_dim, o.window, 3.0 / std::sqrt(double(o.window)), rng_)),
        proj_b_("encoder.feature.bias", MatrixX<Scalar>::Zero(o.feature_dim, 1)),
        up_("encoder.context.up", nn::uniform_init<Scalar>(o.dim, o.feature_dim, 1.0 / std::sqrt(double(o.feature_dim)), rng_)),
        w_("encoder.context.w", nn::uniform_init<Scalar>(o.dim, o.feature_dim, 1.0 / std::sqrt(double(o.feature_dim)), rng_)),
        b_("encoder.context.b", MatrixX<Scalar>::Zero(o.dim, 1)) {
    set_feature_extractor_frozen(true);
  }

  EncoderDescriptor descriptor() const override { return {"toy-speech-encoder", "1", o_.dim, {}}; }
  Index dim() const override { return o_.dim; }

  void set_feature_extractor_frozen(bool f) override {
    proj_.frozen = f;
    proj_b_.frozen = f;
  }

  std::vector<MatrixX<Scalar>> encode(const std::vector<VectorX<Scalar>>& waves, Mode mode) override {
    std::vector<MatrixX<Scalar>> out;
    if (mode == Mode::train) cache_.clear();
    for (const auto& w : waves) {
      const Index T = w.size() < o_.window ? 0 : (w.size() - o_.window) / o_.hop + 1;
      MatrixX<Scalar> frames(o_.window, T);
      for (Index t = 0; t < T; ++t) frames.col(t) = w.segment(t * o_.hop, o_.window);
      MatrixX<Scalar> z = ((proj_.value * frames).colwise() + proj_b_.value.col(0))
                              .unaryExpr([](Scalar v) { return std::tanh(v); });
      MatrixX<Scalar> a = ((w_.value * z).colwise() + b_.value.col(0))
                              .unaryExpr([](Scalar v) { return std::tanh(v); });
      MatrixX<Scalar> h = up_.value * z + a;
      out.push_back(h.transpose());
      if (mode == Mode::train) cache_.push_back({std::move(frames), std::move(z), std::move(a)});
    }
    return out;
  }

  void backward(const std::vector<MatrixX<Scalar>>& grads) override {
    if (grads.size() != cache_.size()) throw Error("toy encoder: backward without a train-mode encode");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const auto& c = cache_[i];
      const MatrixX<Scalar> gh = grads[i].transpose();  // dim x T
      const MatrixX<Scalar> da = gh.cwiseProduct(MatrixX<Scalar>::Ones(c.a.rows(), c.a.cols()) - c.a.cwiseAbs2());
      up_.grad.noalias() += gh * c.z.transpose();
      w_.grad.noalias() += da * c.z.transpose();
      b_.grad.col(0) += da.rowwise().sum();
      if (proj_.frozen) continue;
      const MatrixX<Scalar> gz = (up_.value.transpose() * gh + w_.value.transpose() * da)
                                     .cwiseProduct(MatrixX<Scalar>::Ones(c.z.rows(), c.z.cols()) - c.z.cwiseAbs2());
      proj_.grad.noalias() += gz * c.frames.transpose();
      proj_b_.grad.col(0) += gz.rowwise().sum();
    }
  }

  void collect(nn::ParamList<Scalar>& out) override {
    out.push_back(&proj_);
    out.push_back(&proj_b_);
    out.push_back(&up_);
    out.push_back(&w_);
    out.push_back(&b_);
  }

  nn::ParamList<Scalar> feature_extractor() { return {&proj_, &proj_b_}; }

 private:
  struct Cache {
    MatrixX<Scalar> frames, z, a;
  };
  Options o_;
  Rng rng_;
  nn::Parameter<Scalar> proj_, proj_b_, up_, w_, b_;
  std::vector<Cache> cache_;
};

struct HeadSpec {
  std::string name;
  Index num_classes = 3;
  Index hidden = 128;
};

struct SpeechEncoderConfig {
  std::string encoder = "toy-speech-encoder";
  bool feature_extractor_frozen = true;
  Index encoder_dim = 768;
  /// Concatenate the per-dimension std to the mean (ablation only).
  bool std_pooling = false;
  std::vector<HeadSpec> heads{{"level", 3, 128}, {"gender", 2, 128}};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SpeechEncoderConfig from_json(const nlohmann::json& j);
};

/// Encoder followed by statistics pooling over time.
template <typename Scalar>
class SpeechTrunk {
 public:
  using Sample = VectorX<Scalar>;
  using Input = std::vector<VectorX<Scalar>>;

  SpeechTrunk(std::unique_ptr<SpeechEncoder<Scalar>> enc, bool std_pooling)
      : enc_(std::move(enc)), std_pooling_(std_pooling) {}

  static Input collate(const std::vector<const Sample*>& xs) {
    Input in;
    for (const auto* x : xs) in.push_back(*x);
    return in;
  }

  /// N x dim (or N x 2 dim with std pooling).
  MatrixX<Scalar> pool(const std::vector<MatrixX<Scalar>>& seqs) {
    const Index d = enc_->dim();
    MatrixX<Scalar> out(static_cast<Index>(seqs.size()), std_pooling_ ? 2 * d : d);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto& s = seqs[i];
      if (s.rows() == 0) throw AdapterError("speech encoder produced a zero-length output");
      if (s.cols() != d) throw AdapterError("speech encoder output dim " + std::to_string(s.cols()) + " != " + std::to_string(d));
      const VectorX<Scalar> mean = s.colwise().mean().transpose();
      out.row(static_cast<Index>(i)).head(d) = mean.transpose();
      if (std_pooling_)
        out.row(static_cast<Index>(i)).tail(d) =
            ((s.rowwise() - mean.transpose()).cwiseAbs2().colwise().mean().array() + Scalar(1e-10)).sqrt().matrix();
    }
    return out;
  }

  Tensor<Scalar> forward(const Input& x, Mode mode) {
    std::vector<MatrixX<Scalar>> seqs;
    try {
      seqs = enc_->encode(x, mode);
    } catch (const AdapterError&) {
      throw;
    } catch (const std::exception& e) {
      throw AdapterError(std::string("speech encoder failed: ") + e.what());
    }
    if (seqs.size() != x.size()) throw AdapterError("speech encoder returned the wrong batch size");
    if (mode == Mode::train) seqs_ = seqs;
    return Tensor<Scalar>::from_matrix(pool(seqs));
  }

  void backward(const Tensor<Scalar>& g) {
    const Index d = enc_->dim();
    std::vector<MatrixX<Scalar>> grads;
    for (std::size_t i = 0; i < seqs_.size(); ++i) {
      const auto& s = seqs_[i];
      const Index T = s.rows();
      const VectorX<Scalar> gm = g.rows().row(static_cast<Index>(i)).head(d).transpose();
      MatrixX<Scalar> gs(T, d);
      gs.rowwise() = (gm / Scalar(T)).transpose();
      if (std_pooling_) {
        const VectorX<Scalar> mean = s.colwise().mean().transpose();
        const MatrixX<Scalar> c = s.rowwise() - mean.transpose();
        const VectorX<Scalar> sd = (c.cwiseAbs2().colwise().mean().array() + Scalar(1e-10)).sqrt().matrix().transpose();
        const VectorX<Scalar> gsd = g.rows().row(static_cast<Index>(i)).tail(d).transpose();
        const VectorX<Scalar> k = gsd.cwiseQuotient(sd) / Scalar(T);
        gs += c * k.asDiagonal();
      }
      grads.push_back(std::move(gs));
    }
    enc_->backward(grads);
  }

  void collect(nn::ParamList<Scalar>& out) { enc_->collect(out); }
  void collect_buffers(nn::BufferList<Scalar>&) {}
  Index output_dim() const { return std_pooling_ ? 2 * enc_->dim() : enc_->dim(); }
  std::string group() const { return "encoder"; }
  SpeechEncoder<Scalar>& encoder() { return *enc_; }

 private:
  std::unique_ptr<SpeechEncoder<Scalar>> enc_;
  bool std_pooling_;
  std::vector<MatrixX<Scalar>> seqs_;
};

template <typename Scalar>
using SpeechClassifier = Classifier<Scalar, SpeechTrunk<Scalar>>;

/// Encoder + pooling + one dual-layer head per HeadSpec (level first).
template <typename Scalar>
SpeechClassifier<Scalar> make_speech_classifier(const SpeechEncoderConfig& cfg,
                                                std::unique_ptr<SpeechEncoder<Scalar>> enc) {
  if (enc->dim() != cfg.encoder_dim)
    throw ShapeError("encoder dim " + std::to_string(enc->dim()) + " does not match config " +
                     std::to_string(cfg.encoder_dim));
  enc->set_feature_extractor_frozen(cfg.feature_extractor_frozen);
  Rng rng(derive_seed(cfg.seed, 1));
  SpeechClassifier<Scalar> m(SpeechTrunk<Scalar>(std::move(enc), cfg.std_pooling));
  const Index in = m.trunk().output_dim();
  for (const auto& h : cfg.heads)
    m.add_head(h.name, h.num_classes, dnn_head<Scalar>(h.name, in, h.hidden, h.num_classes, rng));
  return m;
}

}  // namespace l2prof::models
