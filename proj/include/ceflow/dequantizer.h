/*
 * Copyright 2026 The CeFlow Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CEFLOW_DEQUANTIZER_H_
#define CEFLOW_DEQUANTIZER_H_

// Variational Gaussian dequantization of categorical codes.
//
// For codes x ∈ ∏_m {0..K_m-1} a conditional network predicts, per feature,
// a mean μ and a log-variance ℓ. Noise is u = sigmoid(μ + ε·exp(ℓ/2)) with
// ε ~ N(0, 1), so u ∈ (0, 1) and z = x + u keeps floor(z) == x. The density
// of u includes the sigmoid change of variables:
//
//   log q(u | x) = Σ_m [ log N(v_m; μ_m, e^{ℓ_m}) - log(u_m (1 - u_m)) ].

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ceflow/autodiff.h"
#include "ceflow/common.h"
#include "ceflow/data.h"

namespace ceflow {

struct DequantizedBatch {
  Matrix z;      // B × M
  Vector log_q;  // B
};

struct DequantizedTape {
  ad::Var z;      // B × M
  ad::Var log_q;  // B × 1
};

class Dequantizer {
 public:
  Dequantizer() = default;
  // `net` maps the joint one-hot encoding (Σ K_m) to 2M outputs: means then
  // log-variances.
  Dequantizer(std::vector<int> cardinalities, ad::DenseNet net);

  // Two relu hidden layers of `hidden_width`; the output layer starts at zero
  // so every feature begins with μ = 0, ℓ = 0. Empty when the schema has no
  // categorical features.
  static Dequantizer Create(const FeatureSchema& schema, int hidden_width,
                            Rng& rng);

  int num_features() const { return static_cast<int>(cardinalities_.size()); }
  bool empty() const { return cardinalities_.empty(); }
  const std::vector<int>& cardinalities() const { return cardinalities_; }
  const ad::DenseNet& net() const { return net_; }
  ad::DenseNet& mutable_net() { return net_; }

  Matrix OneHot(const IntMatrix& codes) const;

  // Standard-normal draws for `rows` samples, from `seed`.
  Matrix DrawNoise(Eigen::Index rows, std::uint64_t seed) const;

  // `noise` holds ε, one row per sample.
  DequantizedBatch Dequantize(const IntMatrix& codes, const Matrix& noise) const;
  std::pair<Vector, double> Dequantize(const IntVector& codes,
                                       std::uint64_t seed) const;

  DequantizedTape Dequantize(ad::Tape& tape, const IntMatrix& codes,
                             const Matrix& noise,
                             std::span<const ad::Var> bound) const;

 private:
  std::vector<int> cardinalities_;
  ad::DenseNet net_;
};

// code_m = clamp(floor(z_m), 0, K_m - 1).
IntVector Quantize(const Vector& z_cat, const FeatureSchema& schema);
IntMatrix Quantize(const Matrix& z_cat, const FeatureSchema& schema);

struct ElboEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

// Monte-Carlo estimate of E_q[log p(x + u) - log q(u | x)], a lower bound on
// the log-mass that `base_log_density` assigns to the unit cell of x.
ElboEstimate DequantElbo(const Dequantizer& deq, const IntVector& codes,
                         const std::function<double(const Vector&)>& base_log_density,
                         int samples, std::uint64_t seed);

// Full vector layout: categorical block, then continuous block.
Vector Merge(const Vector& z_cat, const Vector& x_con);
Matrix Merge(const Matrix& z_cat, const Matrix& x_con);
std::pair<Vector, Vector> Unmerge(const Vector& full, int num_categorical);
std::pair<Matrix, Matrix> Unmerge(const Matrix& full, int num_categorical);

}  // namespace ceflow

#endif  // CEFLOW_DEQUANTIZER_H_
