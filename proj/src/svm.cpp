// svm.cpp

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

#include "l2prof/models/svm.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

namespace l2prof::models {

void SvmConfig::validate() const {
  if (!(C > 0)) throw InvalidArgument("svm: C must be positive");
  if (!(gamma > 0)) throw InvalidArgument("svm: gamma must be positive");
  if (mode == SvmMode::linear && (!(l2 > 0) || epochs <= 0))
    throw InvalidArgument("svm: linear mode needs l2 > 0 and epochs > 0");
}

nlohmann::json SvmConfig::to_json() const {
  return {{"mode", mode == SvmMode::rbf ? "rbf" : "linear"},
          {"C", C},
          {"gamma", gamma},
          {"l2", l2},
          {"epochs", epochs},
          {"tolerance", tolerance},
          {"seed", seed}};
}

SvmConfig SvmConfig::from_json(const nlohmann::json& j) {
  SvmConfig c;
  const std::string mode = j.value("mode", std::string("rbf"));
  if (mode == "rbf") c.mode = SvmMode::rbf;
  else if (mode == "linear") c.mode = SvmMode::linear;
  else throw ParseError("svm: unknown mode '" + mode + "'");
  c.C = j.value("C", c.C);
  c.gamma = j.value("gamma", c.gamma);
  c.l2 = j.value("l2", c.l2);
  c.epochs = j.value("epochs", c.epochs);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

MatrixX<double> rbf_kernel(const MatrixX<double>& a, const MatrixX<double>& b, double gamma) {
  const VectorX<double> na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
  MatrixX<double> d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return (-gamma * d.array().max(0.0)).exp().matrix();
}

Svm::Binary Svm::fit_smo(const MatrixX<double>& k, const VectorX<double>& y) const {
  const Index n = y.size();
  const double C = cfg_.C, tau = 1e-12;
  VectorX<double> alpha = VectorX<double>::Zero(n);
  VectorX<double> g = VectorX<double>::Constant(n, -1.0);
  auto q = [&](Index i, Index j) { return y[i] * y[j] * k(i, j); };
  auto in_up = [&](Index t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  auto in_low = [&](Index t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };
  Binary out;
  for (; out.iterations < cfg_.max_iterations; ++out.iterations) {
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = gmax;
    Index i = -1, j = -1;
    for (Index t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * g[t] > gmax) {
        gmax = -y[t] * g[t];
        i = t;
      }
      if (in_low(t) && y[t] * g[t] > gmax2) {
        gmax2 = y[t] * g[t];
        j = t;
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < cfg_.tolerance) break;
    const double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = k(i, i) + k(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-g[i] - g[j]) / quad, diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (g[i] - g[j]) / quad, sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai, daj = alpha[j] - aj;
    for (Index t = 0; t < n; ++t) g[t] += q(t, i) * dai + q(t, j) * daj;
  }
  // Bias from free vectors, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  Index nfree = 0;
  for (Index t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (alpha[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++nfree;
      sum_free += yg;
    }
  }
  const double rho = nfree > 0 ? sum_free / double(nfree) : (ub + lb) / 2.0;
  out.coef = alpha.cwiseProduct(y);
  out.bias = -rho;
  return out;
}

Svm::Binary Svm::fit_sgd(const MatrixX<double>& x, const VectorX<double>& y, std::uint64_t seed) const {
  const Index n = x.rows();
  const double lambda = cfg_.l2;
  // Step size 1 / (lambda * (t0 + t)), t0 chosen so the first step is 0.1.
  const double t0 = 1.0 / (lambda * 0.1);
  Binary out;
  out.coef = VectorX<double>::Zero(x.cols());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng rng(seed);
  double t = 0;
  for (int e = 0; e < cfg_.epochs; ++e) {
    rng.shuffle(order);
    for (Index i : order) {
      const double eta = 1.0 / (lambda * (t0 + t));
      const double margin = y[i] * (x.row(i).dot(out.coef) + out.bias);
      out.coef *= (1.0 - eta * lambda);
      if (margin < 1.0) {
        out.coef += eta * y[i] * x.row(i).transpose();
        out.bias += eta * y[i];
      }
      t += 1;
    }
  }
  out.iterations = static_cast<long>(t);
  return out;
}

void Svm::fit(const MatrixX<double>& x, const std::vector<int>& labels) {
  if (x.rows() != static_cast<Index>(labels.size()))
    throw ShapeError("svm: " + std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) + " rows");
  if (!x.allFinite()) throw InvalidArgument("svm: non-finite embeddings");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw InvalidArgument("svm: training set has a single class");
  classes_.assign(distinct.begin(), distinct.end());
  models_.clear();
  MatrixX<double> k;
  if (cfg_.mode == SvmMode::rbf) {
    support_ = x;
    k = rbf_kernel(x, x, cfg_.gamma);
  }
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    VectorX<double> y(x.rows());
    for (Index i = 0; i < x.rows(); ++i) y[i] = labels[static_cast<std::size_t>(i)] == classes_[c] ? 1.0 : -1.0;
    models_.push_back(cfg_.mode == SvmMode::rbf ? fit_smo(k, y) : fit_sgd(x, y, derive_seed(cfg_.seed, c)));
  }
}

MatrixX<double> Svm::decision_function(const MatrixX<double>& x) const {
  if (models_.empty()) throw Error("svm: not fitted");
  if (!x.allFinite()) throw InvalidArgument("svm: non-finite embeddings");
  MatrixX<double> out(x.rows(), static_cast<Index>(models_.size()));
  if (cfg_.mode == SvmMode::rbf) {
    if (x.cols() != support_.cols()) throw ShapeError("svm: embedding dimension mismatch");
    const MatrixX<double> k = rbf_kernel(x, support_, cfg_.gamma);
    for (std::size_t c = 0; c < models_.size(); ++c)
      out.col(static_cast<Index>(c)) = (k * models_[c].coef).array() + models_[c].bias;
  } else {
    for (std::size_t c = 0; c < models_.size(); ++c) {
      if (x.cols() != models_[c].coef.size()) throw ShapeError("svm: embedding dimension mismatch");
      out.col(static_cast<Index>(c)) = (x * models_[c].coef).array() + models_[c].bias;
    }
  }
  return out;
}

std::vector<int> Svm::predict(const MatrixX<double>& x) const {
  const MatrixX<double> d = decision_function(x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < d.rows(); ++i) {
    Index best = 0;
    d.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = classes_[static_cast<std::size_t>(best)];
  }
  return out;
}

nlohmann::json Svm::to_json() const {
  nlohmann::json j = {{"config", cfg_.to_json()}, {"classes", classes_}};
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : models_)
    ms.push_back({{"coef", std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size())},
                  {"bias", m.bias},
                  {"iterations", m.iterations}});
  j["models"] = ms;
  nlohmann::json sup = nlohmann::json::array();
  for (Index r = 0; r < support_.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(support_.cols()));
    for (Index c = 0; c < support_.cols(); ++c) row[static_cast<std::size_t>(c)] = support_(r, c);
    sup.push_back(row);
  }
  j["support"] = sup;
  return j;
}

Svm Svm::from_json(const nlohmann::json& j) {
  Svm s(SvmConfig::from_json(j.at("config")));
  s.classes_ = j.at("classes").get<std::vector<int>>();
  for (const auto& m : j.at("models")) {
    const auto coef = m.at("coef").get<std::vector<double>>();
    Binary b;
    b.coef = Eigen::Map<const VectorX<double>>(coef.data(), static_cast<Index>(coef.size()));
    b.bias = m.at("bias").get<double>();
    b.iterations = m.at("iterations").get<long>();
    s.models_.push_back(std::move(b));
  }
  const auto& sup = j.at("support");
  if (!sup.empty()) {
    s.support_.resize(static_cast<Index>(sup.size()), static_cast<Index>(sup.front().size()));
    for (std::size_t r = 0; r < sup.size(); ++r)
      for (std::size_t c = 0; c < sup[r].size(); ++c)
        s.support_(static_cast<Index>(r), static_cast<Index>(c)) = sup[r][c].get<double>();
  }
  return s;
}

}  // namespace l2prof::models
