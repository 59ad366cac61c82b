// l2prof/nn/tensor.hpp

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

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "l2prof/common.hpp"

namespace l2prof::nn {

enum class Mode { train, eval };

using Shape = std::array<Index, 4>;  // N, C, H, W

inline std::string shape_string(const Shape& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
         std::to_string(s[2]) + "," + std::to_string(s[3]) + ")";
}

/// Dense NCHW activation; W varies fastest.
template <typename Scalar>
struct Tensor {
  Shape shape{0, 0, 0, 0};
  VectorX<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(VectorX<Scalar>::Zero(s[0] * s[1] * s[2] * s[3])) {}

  static Tensor from_matrix(const MatrixX<Scalar>& m) {
    Tensor t({m.rows(), m.cols(), 1, 1});
    Eigen::Map<RowMatrixX<Scalar>>(t.data.data(), m.rows(), m.cols()) = m;
    return t;
  }

  Index n() const { return shape[0]; }
  Index c() const { return shape[1]; }
  Index h() const { return shape[2]; }
  Index w() const { return shape[3]; }
  Index plane() const { return shape[2] * shape[3]; }
  Index per_sample() const { return shape[1] * shape[2] * shape[3]; }
  Index size() const { return data.size(); }

  Scalar& at(Index n, Index c, Index y, Index x) {
    return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  const Scalar& at(Index n, Index c, Index y, Index x) const {
    return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  /// Sample n as a C x (H*W) row-major block.
  Eigen::Map<RowMatrixX<Scalar>> sample(Index n) {
    return {data.data() + n * per_sample(), shape[1], plane()};
  }
  Eigen::Map<const RowMatrixX<Scalar>> sample(Index n) const {
    return {data.data() + n * per_sample(), shape[1], plane()};
  }

  /// N x (C*H*W) row-major view.
  Eigen::Map<RowMatrixX<Scalar>> rows() { return {data.data(), shape[0], per_sample()}; }
  Eigen::Map<const RowMatrixX<Scalar>> rows() const {
    return {data.data(), shape[0], per_sample()};
  }

  MatrixX<Scalar> to_matrix() const { return rows(); }
};

/// Trainable tensor with its gradient. Frozen parameters are never
/// modified by an optimizer.
template <typename Scalar>
struct Parameter {
  std::string name;
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, MatrixX<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(MatrixX<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

/// Non-trainable state saved with a checkpoint (e.g. batch-norm statistics).
template <typename Scalar>
struct Buffer {
  std::string name;
  MatrixX<Scalar>* value;
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;
template <typename Scalar>
using BufferList = std::vector<Buffer<Scalar>>;

/// He-uniform initialisation for a fan-in.
template <typename Scalar>
MatrixX<Scalar> he_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Index>(1, fan_in)));
  MatrixX<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

template <typename Scalar>
MatrixX<Scalar> uniform_init(Index rows, Index cols, double bound, Rng& rng) {
  MatrixX<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

/// Order-sensitive FNV-1a over the raw bytes of a set of parameters.
template <typename Scalar>
std::uint64_t checksum(const ParamList<Scalar>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : params)
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                               static_cast<std::size_t>(p->value.size()) * sizeof(Scalar)),
              h);
  return h;
}

}  // namespace l2prof::nn
