// l2prof/models/conv.hpp

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

#include <nlohmann/json.hpp>

#include "l2prof/models/classifier.hpp"

namespace l2prof::models {

struct ConvBlockSpec {
  Index out_channels = 32;
  Index kh = 3, kw = 3;
  Index sh = 1, sw = 1;
  double dropout_p = 0.25;
};

/// Four blocks of conv -> ReLU -> batchnorm -> maxpool -> dropout, then a
/// fully connected head over the flattened map.
struct Cnn2dConfig {
  Index frames = 798, n_mels = 40;
  std::vector<ConvBlockSpec> blocks{{32}, {64}, {128}, {256}};
  bool use_batchnorm = true;
  Index pool_h = 2, pool_w = 2;
  Index num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static Cnn2dConfig from_json(const nlohmann::json& j);
};

/// Same block order with (1, k) kernels and (1, 2) pooling so the time
/// axis is untouched; time is averaged before the head.
struct FreqCnnConfig {
  Index frames = 798, n_mels = 40;
  std::vector<ConvBlockSpec> blocks{{32, 1, 3}, {64, 1, 3}, {128, 1, 3}, {256, 1, 3}};
  bool use_batchnorm = true;
  Index pool_h = 1, pool_w = 2;
  Index num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static FreqCnnConfig from_json(const nlohmann::json& j);
};

struct ResNetConfig {
  Index frames = 798, n_mels = 40;
  std::vector<Index> channels{128, 128, 256, 256, 512};
  Index kernel = 3, stride = 2;
  Index num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ResNetConfig from_json(const nlohmann::json& j);
};

/// Trunk over single-channel T x F feature maps.
template <typename Scalar>
class ConvTrunk {
 public:
  using Sample = RowMatrixX<Scalar>;
  using Input = Tensor<Scalar>;

  ConvTrunk(nn::Sequential<Scalar> features, std::unique_ptr<nn::Layer<Scalar>> aggregate,
            Index frames, Index n_mels)
      : features_(std::move(features)), aggregate_(std::move(aggregate)), frames_(frames), n_mels_(n_mels) {
    nn::Shape s = features_.output_shape({1, 1, frames, n_mels});
    feature_shape_ = s;
    if (aggregate_) s = aggregate_->output_shape(s);
    dim_ = s[1] * s[2] * s[3];
  }

  static Input collate(const std::vector<const Sample*>& xs) {
    if (xs.empty()) throw InvalidArgument("empty batch");
    const Index T = xs.front()->rows(), F = xs.front()->cols();
    Input t({static_cast<Index>(xs.size()), 1, T, F});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i]->rows() != T || xs[i]->cols() != F) throw ShapeError("feature batch has mixed shapes");
      t.sample(static_cast<Index>(i)).row(0) =
          Eigen::Map<const RowMatrixX<Scalar>>(xs[i]->data(), 1, T * F);
    }
    return t;
  }

  /// Activations before any time aggregation: (N, C, T', F').
  Tensor<Scalar> features(const Input& x, Mode mode) {
    check(x);
    return features_.forward(x, mode);
  }

  Tensor<Scalar> forward(const Input& x, Mode mode) {
    Tensor<Scalar> h = features(x, mode);
    return aggregate_ ? aggregate_->forward(h, mode) : h;
  }

  void backward(const Tensor<Scalar>& g) {
    features_.backward(aggregate_ ? aggregate_->backward(g) : g);
  }

  void collect(nn::ParamList<Scalar>& out) { features_.collect(out); }
  void collect_buffers(nn::BufferList<Scalar>& out) { features_.collect_buffers(out); }
  Index output_dim() const { return dim_; }
  std::string group() const { return "trunk"; }
  nn::Shape feature_shape() const { return feature_shape_; }
  nn::Sequential<Scalar>& layers() { return features_; }

 private:
  void check(const Input& x) const {
    if (x.c() != 1 || x.h() != frames_ || x.w() != n_mels_)
      throw ShapeError("expected (N,1," + std::to_string(frames_) + "," + std::to_string(n_mels_) +
                       ") input, got " + nn::shape_string(x.shape));
  }

  nn::Sequential<Scalar> features_;
  std::unique_ptr<nn::Layer<Scalar>> aggregate_;
  Index frames_, n_mels_, dim_ = 0;
  nn::Shape feature_shape_{};
};

template <typename Scalar>
using ConvClassifier = Classifier<Scalar, ConvTrunk<Scalar>>;

namespace detail {

template <typename Scalar, typename Cfg>
nn::Sequential<Scalar> conv_blocks(const Cfg& cfg, Rng& rng) {
  nn::Sequential<Scalar> s;
  Index in = 1;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& blk = cfg.blocks[b];
    const std::string name = "block" + std::to_string(b + 1);
    typename nn::Conv2d<Scalar>::Options o;
    o.in_channels = in;
    o.out_channels = blk.out_channels;
    o.kh = blk.kh;
    o.kw = blk.kw;
    o.sh = blk.sh;
    o.sw = blk.sw;
    o.ph = blk.kh / 2;
    o.pw = blk.kw / 2;
    s.template emplace<nn::Conv2d<Scalar>>(name + ".conv", o, rng);
    s.template emplace<nn::ReLU<Scalar>>();
    if (cfg.use_batchnorm) s.template emplace<nn::BatchNorm<Scalar>>(name + ".bn", blk.out_channels);
    s.template emplace<nn::MaxPool2d<Scalar>>(cfg.pool_h, cfg.pool_w);
    s.template emplace<nn::Dropout<Scalar>>(blk.dropout_p, derive_seed(cfg.seed, 10 + b));
    in = blk.out_channels;
  }
  return s;
}

}  // namespace detail

template <typename Scalar>
ConvClassifier<Scalar> make_cnn2d(const Cnn2dConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 1));
  ConvTrunk<Scalar> trunk(detail::conv_blocks<Scalar>(cfg, rng), nullptr, cfg.frames, cfg.n_mels);
  const Index dim = trunk.output_dim();
  ConvClassifier<Scalar> m(std::move(trunk));
  m.add_head("level", cfg.num_classes, linear_head<Scalar>("head", dim, cfg.num_classes, rng));
  return m;
}

template <typename Scalar>
ConvClassifier<Scalar> make_freq_cnn(const FreqCnnConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 1));
  ConvTrunk<Scalar> trunk(detail::conv_blocks<Scalar>(cfg, rng), std::make_unique<nn::TimeMean<Scalar>>(),
                          cfg.frames, cfg.n_mels);
  const Index dim = trunk.output_dim();
  ConvClassifier<Scalar> m(std::move(trunk));
  m.add_head("level", cfg.num_classes, linear_head<Scalar>("head", dim, cfg.num_classes, rng));
  return m;
}

/// Residual block: branch conv(k, s) -> BN -> ReLU -> conv(k, 1); shortcut
/// 1x1 projection with stride s; output is the sum.
template <typename Scalar>
std::unique_ptr<nn::Residual<Scalar>> residual_block(const std::string& name, Index in, Index out,
                                                     Index kernel, Index stride, Rng& rng) {
  auto branch = std::make_unique<nn::Sequential<Scalar>>();
  typename nn::Conv2d<Scalar>::Options a;
  a.in_channels = in;
  a.out_channels = out;
  a.kh = a.kw = kernel;
  a.sh = a.sw = stride;
  a.ph = a.pw = kernel / 2;
  branch->template emplace<nn::Conv2d<Scalar>>(name + ".conv1", a, rng);
  branch->template emplace<nn::BatchNorm<Scalar>>(name + ".bn1", out);
  branch->template emplace<nn::ReLU<Scalar>>();
  typename nn::Conv2d<Scalar>::Options b = a;
  b.in_channels = out;
  b.sh = b.sw = 1;
  branch->template emplace<nn::Conv2d<Scalar>>(name + ".conv2", b, rng);
  typename nn::Conv2d<Scalar>::Options p;
  p.in_channels = in;
  p.out_channels = out;
  p.kh = p.kw = 1;
  p.sh = p.sw = stride;
  auto shortcut = std::make_unique<nn::Conv2d<Scalar>>(name + ".proj", p, rng);
  return std::make_unique<nn::Residual<Scalar>>(std::move(branch), std::move(shortcut));
}

template <typename Scalar>
ConvClassifier<Scalar> make_resnet(const ResNetConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 1));
  nn::Sequential<Scalar> s;
  Index in = 1;
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    s.add(residual_block<Scalar>("block" + std::to_string(b + 1), in, cfg.channels[b], cfg.kernel,
                                 cfg.stride, rng));
    s.template emplace<nn::ReLU<Scalar>>();
    in = cfg.channels[b];
  }
  ConvTrunk<Scalar> trunk(std::move(s), std::make_unique<nn::GlobalAvgPool<Scalar>>(), cfg.frames,
                          cfg.n_mels);
  const Index dim = trunk.output_dim();
  ConvClassifier<Scalar> m(std::move(trunk));
  m.add_head("level", cfg.num_classes, linear_head<Scalar>("head", dim, cfg.num_classes, rng));
  return m;
}

/// Spatial shape (H, W, C) of the input, then after each residual stage.
std::vector<std::array<Index, 3>> resnet_shape_chain(const ResNetConfig& cfg);

}  // namespace l2prof::models
