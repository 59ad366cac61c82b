// l2prof/nn/optim.hpp

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

enum class OptimizerKind { adam, adamw, sgd };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::sgd: return "sgd";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ParseError("unknown optimizer '" + s + "'");
}

/// One optimizer over one parameter group. Adam applies weight decay as
/// an L2 term on the gradient, AdamW decouples it; SGD is plain with L2.
/// Frozen parameters are skipped entirely.
template <typename Scalar>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, ParamList<Scalar> params, double weight_decay)
      : kind_(kind), params_(std::move(params)), wd_(weight_decay) {
    for (auto* p : params_) {
      m_.push_back(MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatrixX<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (p->frozen) continue;
      MatrixX<Scalar> g = p->grad;
      if (kind_ != OptimizerKind::adamw && wd_ != 0.0) g += Scalar(wd_) * p->value;
      if (kind_ == OptimizerKind::sgd) {
        p->value -= Scalar(lr) * g;
        continue;
      }
      if (kind_ == OptimizerKind::adamw && wd_ != 0.0) p->value *= Scalar(1.0 - lr * wd_);
      m_[i] = Scalar(b1) * m_[i] + Scalar(1 - b1) * g;
      v_[i] = Scalar(b2) * v_[i] + Scalar(1 - b2) * g.cwiseProduct(g);
      p->value.array() -= Scalar(lr) * (m_[i].array() / Scalar(c1)) /
                          ((v_[i].array() / Scalar(c2)).sqrt() + Scalar(eps));
    }
  }

  const ParamList<Scalar>& params() const { return params_; }

 private:
  OptimizerKind kind_;
  ParamList<Scalar> params_;
  double wd_;
  long t_ = 0;
  std::vector<MatrixX<Scalar>> m_, v_;
};

}  // namespace l2prof::nn
