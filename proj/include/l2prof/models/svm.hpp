// l2prof/models/svm.hpp

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

#include <nlohmann/json.hpp>

#include "l2prof/common.hpp"

namespace l2prof::models {

enum class SvmMode { rbf, linear };

struct SvmConfig {
  SvmMode mode = SvmMode::rbf;
  double C = 10.0;
  double gamma = 0.01;
  double l2 = 1e-3;       // linear mode
  int epochs = 50;        // linear mode
  double tolerance = 1e-3;
  long max_iterations = 1000000;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SvmConfig from_json(const nlohmann::json& j);
};

/// One-vs-rest soft-margin SVM. Kernel mode solves each binary dual with
/// SMO (maximal violating pair); linear mode runs hinge-loss SGD with an
/// L2 penalty.
class Svm {
 public:
  explicit Svm(SvmConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  void fit(const MatrixX<double>& x, const std::vector<int>& labels);
  /// N x K decision values.
  MatrixX<double> decision_function(const MatrixX<double>& x) const;
  std::vector<int> predict(const MatrixX<double>& x) const;

  int num_classes() const { return static_cast<int>(classes_.size()); }
  const SvmConfig& config() const { return cfg_; }
  nlohmann::json to_json() const;
  static Svm from_json(const nlohmann::json& j);

 private:
  struct Binary {
    VectorX<double> coef;  // alpha_i * y_i (kernel) or w (linear)
    double bias = 0.0;
    long iterations = 0;
  };
  Binary fit_smo(const MatrixX<double>& k, const VectorX<double>& y) const;
  Binary fit_sgd(const MatrixX<double>& x, const VectorX<double>& y, std::uint64_t seed) const;

  SvmConfig cfg_;
  std::vector<int> classes_;
  MatrixX<double> support_;  // training rows (kernel mode)
  std::vector<Binary> models_;
};

/// RBF Gram matrix exp(-gamma * |a_i - b_j|^2).
MatrixX<double> rbf_kernel(const MatrixX<double>& a, const MatrixX<double>& b, double gamma);

}  // namespace l2prof::models
