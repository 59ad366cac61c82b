// l2prof/nn/layers.hpp

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

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "l2prof/nn/tensor.hpp"

namespace l2prof::nn {

/// Tensor-to-tensor layer. backward() consumes the cache of the last
/// train-mode forward(), accumulates parameter gradients and returns the
/// gradient with respect to the input.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) = 0;
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void collect(ParamList<Scalar>&) {}
  virtual void collect_buffers(BufferList<Scalar>&) {}
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  struct Options {
    Index in_channels = 1, out_channels = 1;
    Index kh = 3, kw = 3;
    Index sh = 1, sw = 1;
    Index ph = 0, pw = 0;
  };

  Conv2d(const std::string& name, Options o, Rng& rng)
      : o_(o),
        weight_(name + ".weight",
                he_uniform<Scalar>(o.out_channels, o.in_channels * o.kh * o.kw,
                                   o.in_channels * o.kh * o.kw, rng)),
        bias_(name + ".bias", MatrixX<Scalar>::Zero(o.out_channels, 1)) {}

  Shape output_shape(const Shape& in) const override {
    if (in[1] != o_.in_channels)
      throw ShapeError("conv2d: expected " + std::to_string(o_.in_channels) +
                       " input channels, got " + shape_string(in));
    const Index ho = (in[2] + 2 * o_.ph - o_.kh) / o_.sh + 1;
    const Index wo = (in[3] + 2 * o_.pw - o_.kw) / o_.sw + 1;
    if (in[2] + 2 * o_.ph < o_.kh || in[3] + 2 * o_.pw < o_.kw)
      throw ShapeError("conv2d: input " + shape_string(in) + " smaller than kernel");
    return {in[0], o_.out_channels, ho, wo};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    const Shape os = output_shape(x.shape);
    Tensor<Scalar> y(os);
    in_shape_ = x.shape;
    if (mode == Mode::train) cols_.assign(static_cast<std::size_t>(x.n()), {});
    else cols_.clear();
    for (Index n = 0; n < x.n(); ++n) {
      MatrixX<Scalar> cols = im2col(x, n, os);
      y.sample(n).noalias() = weight_.value * cols;
      y.sample(n).colwise() += bias_.value.col(0);
      if (mode == Mode::train) cols_[static_cast<std::size_t>(n)] = std::move(cols);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    if (cols_.size() != static_cast<std::size_t>(g.n()))
      throw Error("conv2d: backward without a train-mode forward");
    Tensor<Scalar> dx(in_shape_);
    for (Index n = 0; n < g.n(); ++n) {
      const MatrixX<Scalar> gy = g.sample(n);
      const auto& cols = cols_[static_cast<std::size_t>(n)];
      weight_.grad.noalias() += gy * cols.transpose();
      bias_.grad.col(0) += gy.rowwise().sum();
      const MatrixX<Scalar> dcols = weight_.value.transpose() * gy;
      col2im(dcols, dx, n, g.shape);
    }
    return dx;
  }

  void collect(ParamList<Scalar>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Options& options() const { return o_; }

 private:
  MatrixX<Scalar> im2col(const Tensor<Scalar>& x, Index n, const Shape& os) const {
    const Index ho = os[2], wo = os[3];
    MatrixX<Scalar> cols(o_.in_channels * o_.kh * o_.kw, ho * wo);
    for (Index c = 0; c < o_.in_channels; ++c)
      for (Index ki = 0; ki < o_.kh; ++ki)
        for (Index kj = 0; kj < o_.kw; ++kj) {
          const Index r = (c * o_.kh + ki) * o_.kw + kj;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * o_.sh - o_.ph + ki;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * o_.sw - o_.pw + kj;
              cols(r, oy * wo + ox) = (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w())
                                          ? x.at(n, c, iy, ix)
                                          : Scalar(0);
            }
          }
        }
    return cols;
  }

  void col2im(const MatrixX<Scalar>& dcols, Tensor<Scalar>& dx, Index n, const Shape& os) const {
    const Index ho = os[2], wo = os[3];
    for (Index c = 0; c < o_.in_channels; ++c)
      for (Index ki = 0; ki < o_.kh; ++ki)
        for (Index kj = 0; kj < o_.kw; ++kj) {
          const Index r = (c * o_.kh + ki) * o_.kw + kj;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * o_.sh - o_.ph + ki;
            if (iy < 0 || iy >= dx.h()) continue;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * o_.sw - o_.pw + kj;
              if (ix < 0 || ix >= dx.w()) continue;
              dx.at(n, c, iy, ix) += dcols(r, oy * wo + ox);
            }
          }
        }
  }

  Options o_;
  Parameter<Scalar> weight_, bias_;
  Shape in_shape_{};
  std::vector<MatrixX<Scalar>> cols_;
};

/// Per-channel batch normalization over (N, H, W); also serves 1-D
/// features shaped (N, C, 1, 1).
template <typename Scalar>
class BatchNorm : public Layer<Scalar> {
 public:
  BatchNorm(const std::string& name, Index channels, double momentum = 0.1, double eps = 1e-5)
      : gamma_(name + ".gamma", MatrixX<Scalar>::Ones(channels, 1)),
        beta_(name + ".beta", MatrixX<Scalar>::Zero(channels, 1)),
        running_mean_(MatrixX<Scalar>::Zero(channels, 1)),
        running_var_(MatrixX<Scalar>::Ones(channels, 1)),
        name_(name),
        momentum_(momentum),
        eps_(eps) {}

  Shape output_shape(const Shape& in) const override {
    if (in[1] != gamma_.value.rows())
      throw ShapeError("batchnorm: expected " + std::to_string(gamma_.value.rows()) +
                       " channels, got " + shape_string(in));
    return in;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    output_shape(x.shape);
    const Index C = x.c(), P = x.plane(), N = x.n();
    Tensor<Scalar> y(x.shape);
    if (mode == Mode::eval) {
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
          const Scalar inv = Scalar(1) / std::sqrt(running_var_(c, 0) + Scalar(eps_));
          y.sample(n).row(c) =
              ((x.sample(n).row(c).array() - running_mean_(c, 0)) * inv * gamma_.value(c, 0) +
               beta_.value(c, 0))
                  .matrix();
        }
      return y;
    }
    const Index M = N * P;
    if (M < 2) throw ShapeError("batchnorm: training needs more than one value per channel");
    xhat_ = Tensor<Scalar>(x.shape);
    inv_std_.resize(C);
    for (Index c = 0; c < C; ++c) {
      Scalar sum = 0;
      for (Index n = 0; n < N; ++n) sum += x.sample(n).row(c).sum();
      const Scalar mean = sum / Scalar(M);
      Scalar sq = 0;
      for (Index n = 0; n < N; ++n) sq += (x.sample(n).row(c).array() - mean).square().sum();
      const Scalar var = sq / Scalar(M);
      const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(eps_));
      inv_std_[c] = inv;
      for (Index n = 0; n < N; ++n) {
        xhat_.sample(n).row(c) = ((x.sample(n).row(c).array() - mean) * inv).matrix();
        y.sample(n).row(c) =
            (xhat_.sample(n).row(c).array() * gamma_.value(c, 0) + beta_.value(c, 0)).matrix();
      }
      const Scalar m = Scalar(momentum_);
      running_mean_(c, 0) = (Scalar(1) - m) * running_mean_(c, 0) + m * mean;
      running_var_(c, 0) =
          (Scalar(1) - m) * running_var_(c, 0) + m * var * Scalar(M) / Scalar(M - 1);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    if (g.shape != xhat_.shape) throw Error("batchnorm: backward without a train-mode forward");
    const Index C = g.c(), N = g.n();
    const Scalar M = Scalar(N * g.plane());
    Tensor<Scalar> dx(g.shape);
    for (Index c = 0; c < C; ++c) {
      Scalar sum_g = 0, sum_gx = 0;
      for (Index n = 0; n < N; ++n) {
        sum_g += g.sample(n).row(c).sum();
        sum_gx += g.sample(n).row(c).dot(xhat_.sample(n).row(c));
      }
      gamma_.grad(c, 0) += sum_gx;
      beta_.grad(c, 0) += sum_g;
      const Scalar k = gamma_.value(c, 0) * inv_std_[c] / M;
      for (Index n = 0; n < N; ++n)
        dx.sample(n).row(c) = (k * (M * g.sample(n).row(c).array() - sum_g -
                                    xhat_.sample(n).row(c).array() * sum_gx))
                                  .matrix();
    }
    return dx;
  }

  void collect(ParamList<Scalar>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(BufferList<Scalar>& out) override {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }

 private:
  Parameter<Scalar> gamma_, beta_;
  MatrixX<Scalar> running_mean_, running_var_;
  std::string name_;
  double momentum_, eps_;
  Tensor<Scalar> xhat_;
  VectorX<Scalar> inv_std_;
};

/// Non-overlapping max pooling; trailing rows/cols that do not fill a
/// window are dropped.
template <typename Scalar>
class MaxPool2d : public Layer<Scalar> {
 public:
  MaxPool2d(Index kh, Index kw) : kh_(kh), kw_(kw) {}

  Shape output_shape(const Shape& in) const override {
    if (in[2] < kh_ || in[3] < kw_)
      throw ShapeError("maxpool: input " + shape_string(in) + " smaller than window");
    return {in[0], in[1], in[2] / kh_, in[3] / kw_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    const Shape os = output_shape(x.shape);
    Tensor<Scalar> y(os);
    in_shape_ = x.shape;
    argmax_.assign(static_cast<std::size_t>(y.size()), 0);
    std::size_t o = 0;
    for (Index n = 0; n < os[0]; ++n)
      for (Index c = 0; c < os[1]; ++c)
        for (Index oy = 0; oy < os[2]; ++oy)
          for (Index ox = 0; ox < os[3]; ++ox, ++o) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            Index arg = 0;
            for (Index i = 0; i < kh_; ++i)
              for (Index j = 0; j < kw_; ++j) {
                const Index iy = oy * kh_ + i, ix = ox * kw_ + j;
                const Index flat = ((n * x.c() + c) * x.h() + iy) * x.w() + ix;
                if (x.data[flat] > best) {
                  best = x.data[flat];
                  arg = flat;
                }
              }
            y.data[static_cast<Index>(o)] = best;
            argmax_[o] = arg;
          }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(in_shape_);
    for (Index o = 0; o < g.size(); ++o) dx.data[argmax_[static_cast<std::size_t>(o)]] += g.data[o];
    return dx;
  }

 private:
  Index kh_, kw_;
  Shape in_shape_{};
  std::vector<Index> argmax_;
};

/// Inverted dropout with its own seeded stream; identity in eval mode.
template <typename Scalar>
class Dropout : public Layer<Scalar> {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("dropout: p must be in [0, 1)");
  }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    if (mode == Mode::eval || p_ == 0.0) {
      mask_ = VectorX<Scalar>();
      return x;
    }
    const Scalar keep = Scalar(1.0 / (1.0 - p_));
    mask_.resize(x.size());
    for (Index i = 0; i < x.size(); ++i) mask_[i] = rng_.uniform() < p_ ? Scalar(0) : keep;
    Tensor<Scalar> y = x;
    y.data.array() *= mask_.array();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    if (mask_.size() == 0) return g;
    Tensor<Scalar> dx = g;
    dx.data.array() *= mask_.array();
    return dx;
  }

 private:
  double p_;
  Rng rng_;
  VectorX<Scalar> mask_;
};

template <typename Scalar>
class LeakyReLU : public Layer<Scalar> {
 public:
  explicit LeakyReLU(double slope = 0.0) : slope_(Scalar(slope)) {}

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    x_ = x;
    Tensor<Scalar> y = x;
    y.data = x.data.unaryExpr([s = slope_](Scalar v) { return v > 0 ? v : s * v; });
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx = g;
    for (Index i = 0; i < g.size(); ++i)
      if (!(x_.data[i] > 0)) dx.data[i] *= slope_;
    return dx;
  }

 private:
  Scalar slope_;
  Tensor<Scalar> x_;
};

template <typename Scalar>
class ReLU : public LeakyReLU<Scalar> {
 public:
  ReLU() : LeakyReLU<Scalar>(0.0) {}
};

/// Affine map over the flattened per-sample features; output (N, out, 1, 1).
template <typename Scalar>
class Linear : public Layer<Scalar> {
 public:
  Linear(const std::string& name, Index in, Index out, Rng& rng)
      : weight_(name + ".weight", uniform_init<Scalar>(out, in, 1.0 / std::sqrt(double(in)), rng)),
        bias_(name + ".bias", uniform_init<Scalar>(out, 1, 1.0 / std::sqrt(double(in)), rng)) {}

  Shape output_shape(const Shape& in) const override {
    if (in[1] * in[2] * in[3] != weight_.value.cols())
      throw ShapeError("linear: expected " + std::to_string(weight_.value.cols()) +
                       " input features, got " + shape_string(in));
    return {in[0], weight_.value.rows(), 1, 1};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    Tensor<Scalar> y(output_shape(x.shape));
    x_ = x;
    y.rows().noalias() = x.rows() * weight_.value.transpose();
    y.rows().rowwise() += bias_.value.col(0).transpose();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    weight_.grad.noalias() += g.rows().transpose() * x_.rows();
    bias_.grad.col(0) += g.rows().colwise().sum().transpose();
    Tensor<Scalar> dx(x_.shape);
    dx.rows().noalias() = g.rows() * weight_.value;
    return dx;
  }

  void collect(ParamList<Scalar>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  Parameter<Scalar> weight_, bias_;
  Tensor<Scalar> x_;
};

/// Row-wise log-softmax over C; input must be (N, C, 1, 1).
template <typename Scalar>
class LogSoftmax : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override {
    if (in[2] != 1 || in[3] != 1) throw ShapeError("logsoftmax: expected (N,C,1,1), got " + shape_string(in));
    return in;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    output_shape(x.shape);
    Tensor<Scalar> y(x.shape);
    for (Index n = 0; n < x.n(); ++n) {
      const auto row = x.rows().row(n);
      const Scalar mx = row.maxCoeff();
      const Scalar lse = mx + std::log((row.array() - mx).exp().sum());
      y.rows().row(n) = (row.array() - lse).matrix();
    }
    y_ = y;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.shape);
    for (Index n = 0; n < g.n(); ++n) {
      const Scalar s = g.rows().row(n).sum();
      dx.rows().row(n) = (g.rows().row(n).array() - y_.rows().row(n).array().exp() * s).matrix();
    }
    return dx;
  }

 private:
  Tensor<Scalar> y_;
};

/// (N, C, H, W) -> (N, C, 1, 1) mean over all positions.
template <typename Scalar>
class GlobalAvgPool : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override { return {in[0], in[1], 1, 1}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    in_shape_ = x.shape;
    Tensor<Scalar> y(output_shape(x.shape));
    for (Index n = 0; n < x.n(); ++n) y.rows().row(n) = x.sample(n).rowwise().mean().transpose();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(in_shape_);
    const Scalar inv = Scalar(1) / Scalar(dx.plane());
    for (Index n = 0; n < dx.n(); ++n)
      dx.sample(n).colwise() = g.rows().row(n).transpose() * inv;
    return dx;
  }

 private:
  Shape in_shape_{};
};

/// (N, C, T, F) -> (N, C*F, 1, 1) mean over the time axis.
template <typename Scalar>
class TimeMean : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override { return {in[0], in[1] * in[3], 1, 1}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode) override {
    in_shape_ = x.shape;
    Tensor<Scalar> y(output_shape(x.shape));
    for (Index n = 0; n < x.n(); ++n)
      for (Index c = 0; c < x.c(); ++c)
        for (Index f = 0; f < x.w(); ++f) {
          Scalar s = 0;
          for (Index t = 0; t < x.h(); ++t) s += x.at(n, c, t, f);
          y.at(n, c * x.w() + f, 0, 0) = s / Scalar(x.h());
        }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(in_shape_);
    const Scalar inv = Scalar(1) / Scalar(dx.h());
    for (Index n = 0; n < dx.n(); ++n)
      for (Index c = 0; c < dx.c(); ++c)
        for (Index f = 0; f < dx.w(); ++f) {
          const Scalar v = g.at(n, c * dx.w() + f, 0, 0) * inv;
          for (Index t = 0; t < dx.h(); ++t) dx.at(n, c, t, f) = v;
        }
    return dx;
  }

 private:
  Shape in_shape_{};
};

template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;

  Sequential& add(LayerPtr<Scalar> l) {
    layers_.push_back(std::move(l));
    return *this;
  }
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  Shape output_shape(const Shape& in) const override {
    Shape s = in;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    Tensor<Scalar> h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  void collect(ParamList<Scalar>& out) override {
    for (auto& l : layers_) l->collect(out);
  }
  void collect_buffers(BufferList<Scalar>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

/// y = branch(x) + shortcut(x).
template <typename Scalar>
class Residual : public Layer<Scalar> {
 public:
  Residual(LayerPtr<Scalar> branch, LayerPtr<Scalar> shortcut)
      : branch_(std::move(branch)), shortcut_(std::move(shortcut)) {}

  Shape output_shape(const Shape& in) const override {
    const Shape a = branch_->output_shape(in), b = shortcut_->output_shape(in);
    if (a != b)
      throw ShapeError("residual: branch " + shape_string(a) + " vs shortcut " + shape_string(b));
    return a;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    Tensor<Scalar> y = branch_->forward(x, mode);
    const Tensor<Scalar> s = shortcut_->forward(x, mode);
    if (y.shape != s.shape)
      throw ShapeError("residual: branch " + shape_string(y.shape) + " vs shortcut " +
                       shape_string(s.shape));
    y.data += s.data;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx = branch_->backward(g);
    dx.data += shortcut_->backward(g).data;
    return dx;
  }

  void collect(ParamList<Scalar>& out) override {
    branch_->collect(out);
    shortcut_->collect(out);
  }
  void collect_buffers(BufferList<Scalar>& out) override {
    branch_->collect_buffers(out);
    shortcut_->collect_buffers(out);
  }

  Layer<Scalar>& branch() { return *branch_; }
  Layer<Scalar>& shortcut() { return *shortcut_; }

 private:
  LayerPtr<Scalar> branch_, shortcut_;
};

/// Mean negative log-likelihood of row-wise log-probabilities. Writes
/// d(loss)/d(logp) scaled by `weight` into *grad when given.
template <typename Scalar>
Scalar nll_loss(const MatrixX<Scalar>& logp, const std::vector<int>& targets, Scalar weight = 1,
                MatrixX<Scalar>* grad = nullptr) {
  if (static_cast<Index>(targets.size()) != logp.rows())
    throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logp.rows()) + " rows");
  if (logp.rows() == 0) throw InvalidArgument("nll: empty batch");
  if (grad) *grad = MatrixX<Scalar>::Zero(logp.rows(), logp.cols());
  Scalar loss = 0;
  const Scalar inv = Scalar(1) / Scalar(logp.rows());
  for (Index i = 0; i < logp.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logp.cols())
      throw InvalidArgument("nll: target " + std::to_string(t) + " out of range for " +
                            std::to_string(logp.cols()) + " classes");
    loss -= logp(i, t);
    if (grad) (*grad)(i, t) = -weight * inv;
  }
  return loss * inv;
}

}  // namespace l2prof::nn
