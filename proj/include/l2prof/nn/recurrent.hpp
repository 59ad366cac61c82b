// l2prof/nn/recurrent.hpp

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
#include <vector>

#include "l2prof/nn/tensor.hpp"

namespace l2prof::nn {

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// Single-direction LSTM over one sequence at a time. Sequences are
/// L x D; outputs are L x H in input order (a reverse LSTM reads from the
/// end). Gate rows are ordered input, forget, cell, output.
template <typename Scalar>
class Lstm {
 public:
  Lstm(const std::string& name, Index in, Index hidden, bool reverse, Rng& rng)
      : wx_(name + ".wx", uniform_init<Scalar>(4 * hidden, in, 1.0 / std::sqrt(double(hidden)), rng)),
        wh_(name + ".wh",
            uniform_init<Scalar>(4 * hidden, hidden, 1.0 / std::sqrt(double(hidden)), rng)),
        b_(name + ".b", MatrixX<Scalar>::Zero(4 * hidden, 1)),
        hidden_(hidden),
        reverse_(reverse) {
    b_.value.block(hidden, 0, hidden, 1).setOnes();  // forget-gate bias
  }

  struct Cache {
    MatrixX<Scalar> x;                          // L x D
    MatrixX<Scalar> gates, c, c_prev, h_prev;   // per step, columns
  };

  Index hidden() const { return hidden_; }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x, Cache* cache) const {
    const Index L = x.rows(), H = hidden_;
    MatrixX<Scalar> out(L, H);
    VectorX<Scalar> h = VectorX<Scalar>::Zero(H), c = VectorX<Scalar>::Zero(H);
    if (cache) {
      cache->x = x;
      cache->gates.resize(4 * H, L);
      cache->c.resize(H, L);
      cache->c_prev.resize(H, L);
      cache->h_prev.resize(H, L);
    }
    for (Index s = 0; s < L; ++s) {
      const Index t = reverse_ ? L - 1 - s : s;
      VectorX<Scalar> a = wx_.value * x.row(t).transpose() + wh_.value * h + b_.value.col(0);
      for (Index k = 0; k < H; ++k) {
        a[k] = sigmoid(a[k]);
        a[H + k] = sigmoid(a[H + k]);
        a[2 * H + k] = std::tanh(a[2 * H + k]);
        a[3 * H + k] = sigmoid(a[3 * H + k]);
      }
      if (cache) {
        cache->c_prev.col(s) = c;
        cache->h_prev.col(s) = h;
      }
      c = a.segment(H, H).cwiseProduct(c) + a.segment(0, H).cwiseProduct(a.segment(2 * H, H));
      h = a.segment(3 * H, H).cwiseProduct(c.unaryExpr([](Scalar v) { return std::tanh(v); }));
      if (cache) {
        cache->gates.col(s) = a;
        cache->c.col(s) = c;
      }
      out.row(t) = h.transpose();
    }
    return out;
  }

  /// Accumulates parameter gradients; returns dL/dx (L x D).
  MatrixX<Scalar> backward(const MatrixX<Scalar>& grad_out, const Cache& cache) {
    const Index L = cache.x.rows(), H = hidden_;
    MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(L, cache.x.cols());
    VectorX<Scalar> dh_next = VectorX<Scalar>::Zero(H), dc_next = VectorX<Scalar>::Zero(H);
    for (Index s = L - 1; s >= 0; --s) {
      const Index t = reverse_ ? L - 1 - s : s;
      const auto a = cache.gates.col(s);
      const VectorX<Scalar> i = a.segment(0, H), f = a.segment(H, H), g = a.segment(2 * H, H),
                            o = a.segment(3 * H, H);
      const VectorX<Scalar> tc = cache.c.col(s).unaryExpr([](Scalar v) { return std::tanh(v); });
      const VectorX<Scalar> dh = grad_out.row(t).transpose() + dh_next;
      const VectorX<Scalar> dc =
          dh.cwiseProduct(o).cwiseProduct((VectorX<Scalar>::Ones(H) - tc.cwiseAbs2())) + dc_next;
      VectorX<Scalar> da(4 * H);
      da.segment(0, H) = dc.cwiseProduct(g).cwiseProduct(i).cwiseProduct(VectorX<Scalar>::Ones(H) - i);
      da.segment(H, H) = dc.cwiseProduct(cache.c_prev.col(s)).cwiseProduct(f).cwiseProduct(
          VectorX<Scalar>::Ones(H) - f);
      da.segment(2 * H, H) = dc.cwiseProduct(i).cwiseProduct(VectorX<Scalar>::Ones(H) - g.cwiseAbs2());
      da.segment(3 * H, H) = dh.cwiseProduct(tc).cwiseProduct(o).cwiseProduct(VectorX<Scalar>::Ones(H) - o);
      wx_.grad.noalias() += da * cache.x.row(t);
      wh_.grad.noalias() += da * cache.h_prev.col(s).transpose();
      b_.grad.col(0) += da;
      dx.row(t) = (wx_.value.transpose() * da).transpose();
      dh_next = wh_.value.transpose() * da;
      dc_next = dc.cwiseProduct(f);
    }
    return dx;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&wx_);
    out.push_back(&wh_);
    out.push_back(&b_);
  }

 private:
  Parameter<Scalar> wx_, wh_, b_;
  Index hidden_;
  bool reverse_;
};

/// Additive self-attention pooling: e_t = v . tanh(W h_t + b), weights =
/// softmax over the first `length` positions, context = sum_t a_t h_t.
template <typename Scalar>
class AdditiveAttention {
 public:
  AdditiveAttention(const std::string& name, Index in, Index attn, Rng& rng)
      : w_(name + ".w", uniform_init<Scalar>(attn, in, 1.0 / std::sqrt(double(in)), rng)),
        b_(name + ".b", MatrixX<Scalar>::Zero(attn, 1)),
        v_(name + ".v", uniform_init<Scalar>(attn, 1, 1.0 / std::sqrt(double(attn)), rng)) {}

  struct Cache {
    MatrixX<Scalar> h;     // length x in (valid rows only)
    MatrixX<Scalar> u;     // attn x length
    VectorX<Scalar> alpha;
  };

  /// `h` holds at least `length` rows; rows past `length` are padding.
  VectorX<Scalar> forward(const MatrixX<Scalar>& h, Index length, Cache* cache,
                          VectorX<Scalar>* weights = nullptr) const {
    if (length <= 0) throw InvalidArgument("attention: all positions masked");
    const MatrixX<Scalar> hv = h.topRows(length);
    MatrixX<Scalar> u = (w_.value * hv.transpose()).colwise() + b_.value.col(0);
    u = u.unaryExpr([](Scalar x) { return std::tanh(x); });
    VectorX<Scalar> e = u.transpose() * v_.value.col(0);
    const Scalar mx = e.maxCoeff();
    VectorX<Scalar> alpha = (e.array() - mx).exp().matrix();
    alpha /= alpha.sum();
    if (weights) {
      *weights = VectorX<Scalar>::Zero(h.rows());
      weights->head(length) = alpha;
    }
    VectorX<Scalar> ctx = hv.transpose() * alpha;
    if (cache) {
      cache->h = hv;
      cache->u = std::move(u);
      cache->alpha = alpha;
    }
    return ctx;
  }

  /// Returns dL/dh for the valid rows (length x in).
  MatrixX<Scalar> backward(const VectorX<Scalar>& dctx, const Cache& cache) {
    const VectorX<Scalar> dalpha = cache.h * dctx;
    MatrixX<Scalar> dh = cache.alpha * dctx.transpose();
    const Scalar s = cache.alpha.dot(dalpha);
    const VectorX<Scalar> de = cache.alpha.cwiseProduct(dalpha.array().matrix() -
                                                        VectorX<Scalar>::Constant(dalpha.size(), s));
    v_.grad.col(0) += cache.u * de;
    const MatrixX<Scalar> dz =
        (v_.value.col(0) * de.transpose()).cwiseProduct(
            (MatrixX<Scalar>::Ones(cache.u.rows(), cache.u.cols()) - cache.u.cwiseAbs2()));
    w_.grad.noalias() += dz * cache.h;
    b_.grad.col(0) += dz.rowwise().sum();
    dh.noalias() += dz.transpose() * w_.value;
    return dh;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
    out.push_back(&v_);
  }

 private:
  Parameter<Scalar> w_, b_, v_;
};

}  // namespace l2prof::nn
