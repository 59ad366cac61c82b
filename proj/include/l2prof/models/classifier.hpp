// l2prof/models/classifier.hpp

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

#include <string>
#include <utility>
#include <vector>

#include "l2prof/nn/layers.hpp"

namespace l2prof::models {

using nn::Mode;
using nn::Tensor;

/// Linear -> LeakyReLU -> BatchNorm -> Linear -> LogSoftmax.
template <typename Scalar>
nn::Sequential<Scalar> dnn_head(const std::string& name, Index in, Index hidden, Index classes,
                                Rng& rng) {
  nn::Sequential<Scalar> s;
  s.template emplace<nn::Linear<Scalar>>(name + ".fc1", in, hidden, rng);
  s.template emplace<nn::LeakyReLU<Scalar>>(0.01);
  s.template emplace<nn::BatchNorm<Scalar>>(name + ".bn", hidden);
  s.template emplace<nn::Linear<Scalar>>(name + ".fc2", hidden, classes, rng);
  s.template emplace<nn::LogSoftmax<Scalar>>();
  return s;
}

/// Linear -> LogSoftmax.
template <typename Scalar>
nn::Sequential<Scalar> linear_head(const std::string& name, Index in, Index classes, Rng& rng) {
  nn::Sequential<Scalar> s;
  s.template emplace<nn::Linear<Scalar>>(name + ".fc", in, classes, rng);
  s.template emplace<nn::LogSoftmax<Scalar>>();
  return s;
}

/// Shared trunk plus one or more log-softmax heads. A trunk provides
/// Sample/Input types, collate(), forward(), backward(), collect(),
/// collect_buffers(), output_dim() and group().
template <typename Scalar, typename Trunk>
class Classifier {
 public:
  using Sample = typename Trunk::Sample;
  using Input = typename Trunk::Input;

  struct Head {
    std::string name;
    Index num_classes = 0;
    nn::Sequential<Scalar> layers;
    bool enabled = true;
  };

  explicit Classifier(Trunk trunk) : trunk_(std::move(trunk)) {}

  Head& add_head(std::string name, Index classes, nn::Sequential<Scalar> layers) {
    const Shape s = layers.output_shape({2, trunk_.output_dim(), 1, 1});
    if (s[1] != classes)
      throw ShapeError("head '" + name + "' produces " + std::to_string(s[1]) + " classes, expected " +
                       std::to_string(classes));
    heads_.push_back({std::move(name), classes, std::move(layers), true});
    return heads_.back();
  }

  static Input collate(const std::vector<const Sample*>& xs) { return Trunk::collate(xs); }

  /// One log-probability matrix per head; disabled heads yield an empty
  /// matrix and are skipped in backward.
  std::vector<MatrixX<Scalar>> forward(const Input& x, Mode mode) {
    Tensor<Scalar> z = trunk_.forward(x, mode);
    return forward_heads(z, mode);
  }

  std::vector<MatrixX<Scalar>> forward_heads(const Tensor<Scalar>& z, Mode mode) {
    if (z.per_sample() != trunk_.output_dim())
      throw ShapeError("head input " + nn::shape_string(z.shape) + " does not match trunk dim " +
                       std::to_string(trunk_.output_dim()));
    std::vector<MatrixX<Scalar>> out(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h)
      if (heads_[h].enabled) out[h] = heads_[h].layers.forward(z, mode).to_matrix();
    return out;
  }

  void backward(const std::vector<MatrixX<Scalar>>& grads) {
    if (grads.size() != heads_.size()) throw ShapeError("one gradient per head expected");
    Tensor<Scalar> dz;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      if (!heads_[h].enabled || grads[h].size() == 0) continue;
      Tensor<Scalar> d = heads_[h].layers.backward(Tensor<Scalar>::from_matrix(grads[h]));
      if (dz.size() == 0) dz = std::move(d);
      else dz.data += d.data;
    }
    if (dz.size() > 0) trunk_.backward(dz);
  }

  std::vector<std::pair<std::string, nn::ParamList<Scalar>>> param_groups() {
    nn::ParamList<Scalar> t, c;
    trunk_.collect(t);
    for (auto& h : heads_) h.layers.collect(c);
    std::vector<std::pair<std::string, nn::ParamList<Scalar>>> g;
    if (!t.empty()) g.emplace_back(trunk_.group(), std::move(t));
    g.emplace_back("classifier", std::move(c));
    return g;
  }

  nn::ParamList<Scalar> parameters() {
    nn::ParamList<Scalar> all;
    for (auto& [name, ps] : param_groups()) all.insert(all.end(), ps.begin(), ps.end());
    return all;
  }

  nn::BufferList<Scalar> buffers() {
    nn::BufferList<Scalar> b;
    trunk_.collect_buffers(b);
    for (auto& h : heads_) h.layers.collect_buffers(b);
    return b;
  }

  Trunk& trunk() { return trunk_; }
  const Trunk& trunk() const { return trunk_; }
  std::size_t num_heads() const { return heads_.size(); }
  Head& head(std::size_t i) { return heads_.at(i); }
  void set_head_enabled(std::size_t i, bool on) { heads_.at(i).enabled = on; }

 private:
  using Shape = nn::Shape;
  Trunk trunk_;
  std::vector<Head> heads_;
};

/// Pass-through trunk over precomputed vectors (N x D).
template <typename Scalar>
class EmbeddingTrunk {
 public:
  using Sample = VectorX<Scalar>;
  using Input = MatrixX<Scalar>;

  explicit EmbeddingTrunk(Index dim) : dim_(dim) {}

  static Input collate(const std::vector<const Sample*>& xs) {
    if (xs.empty()) throw InvalidArgument("empty batch");
    Input m(static_cast<Index>(xs.size()), xs.front()->size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i]->size() != m.cols()) throw ShapeError("embedding batch has mixed dimensions");
      m.row(static_cast<Index>(i)) = xs[i]->transpose();
    }
    return m;
  }

  Tensor<Scalar> forward(const Input& x, Mode) {
    if (x.cols() != dim_)
      throw ShapeError("embedding dim " + std::to_string(x.cols()) + " does not match " +
                       std::to_string(dim_));
    if (!x.allFinite()) throw InvalidArgument("non-finite embedding");
    return Tensor<Scalar>::from_matrix(x);
  }
  void backward(const Tensor<Scalar>&) {}
  void collect(nn::ParamList<Scalar>&) {}
  void collect_buffers(nn::BufferList<Scalar>&) {}
  Index output_dim() const { return dim_; }
  std::string group() const { return "trunk"; }

 private:
  Index dim_;
};

struct MlpConfig {
  std::vector<Index> layer_sizes{768, 128, 5};
  double dropout_p = 0.2;
  std::uint64_t seed = 0;
};

/// Linear -> ReLU -> Dropout per hidden layer, then Linear -> LogSoftmax.
template <typename Scalar>
nn::Sequential<Scalar> mlp_layers(const std::string& name, const MlpConfig& cfg, Rng& rng) {
  if (cfg.layer_sizes.size() < 2) throw InvalidArgument("mlp: need at least input and output sizes");
  nn::Sequential<Scalar> s;
  const std::size_t L = cfg.layer_sizes.size();
  for (std::size_t i = 0; i + 1 < L; ++i) {
    s.template emplace<nn::Linear<Scalar>>(name + ".fc" + std::to_string(i + 1), cfg.layer_sizes[i],
                                           cfg.layer_sizes[i + 1], rng);
    if (i + 2 < L) {
      s.template emplace<nn::ReLU<Scalar>>();
      s.template emplace<nn::Dropout<Scalar>>(cfg.dropout_p, derive_seed(cfg.seed, 100 + i));
    }
  }
  s.template emplace<nn::LogSoftmax<Scalar>>();
  return s;
}

template <typename Scalar>
Classifier<Scalar, EmbeddingTrunk<Scalar>> make_mlp(const MlpConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 1));
  Classifier<Scalar, EmbeddingTrunk<Scalar>> m(EmbeddingTrunk<Scalar>(cfg.layer_sizes.front()));
  m.add_head("level", cfg.layer_sizes.back(), mlp_layers<Scalar>("mlp", cfg, rng));
  return m;
}

}  // namespace l2prof::models
