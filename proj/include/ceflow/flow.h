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

#ifndef CEFLOW_FLOW_H_
#define CEFLOW_FLOW_H_

// Affine-coupling normalizing flow f : R^D -> R^D with a Gaussian-mixture
// latent. Each coupling layer keeps the masked coordinates fixed and maps the
// rest through y = x·exp(s̃) + t, where s and t are functions of the masked
// coordinates and s̃ = c·tanh(s / c) bounds the per-layer expansion by e^c.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ceflow/autodiff.h"
#include "ceflow/common.h"

namespace ceflow {

struct CouplingLayer {
  // 1 marks conditioning coordinates, 0 marks transformed ones.
  Vector mask;
  ad::DenseNet scale_net;
  ad::DenseNet translate_net;
  double clamp = 2.0;

  int dim() const { return static_cast<int>(mask.size()); }

  // Rows of x are samples. Returns (y, per-row log|det J|).
  std::pair<Matrix, Vector> Forward(const Matrix& x) const;
  Matrix Inverse(const Matrix& y) const;
};

// Alternating even/odd masks; for D == 1 the single coordinate is
// transformed by an input-independent affine map.
Vector CouplingMask(int dim, int layer_index);

struct FlowConfig {
  int layers = 8;
  // 0 selects max(64, 8·D).
  int hidden_width = 0;
  double clamp = 2.0;
};

struct FlowTape {
  ad::Var z;       // B × D
  ad::Var logdet;  // B × 1
};

class FlowModel {
 public:
  FlowModel() = default;
  // Layers run in order; permutations[i] (possibly empty) is applied to the
  // output of layer i, mapping out[j] = in[perm[j]].
  FlowModel(int dim, std::vector<CouplingLayer> layers,
            std::vector<std::vector<int>> permutations);

  // Identity-initialized model: every scale/translate network ends in a zero
  // layer. A seeded fixed permutation follows every second layer.
  static FlowModel Create(int dim, const FlowConfig& config, Rng& rng);

  int dim() const { return dim_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& mutable_layers() { return layers_; }
  const std::vector<std::vector<int>>& permutations() const {
    return permutations_;
  }

  // Throws NumericalError naming the layer on non-finite output.
  std::pair<Matrix, Vector> Forward(const Matrix& x) const;
  Matrix Inverse(const Matrix& z) const;
  std::pair<Vector, double> Forward(const Vector& x) const;
  Vector Inverse(const Vector& z) const;

  std::vector<ad::Var> Bind(ad::Tape& tape) const;
  FlowTape Forward(ad::Tape& tape, ad::Var x, std::span<const ad::Var> bound) const;
  void CollectParameters(const std::string& prefix, ad::ParameterList& out);

 private:
  int dim_ = 0;
  std::vector<CouplingLayer> layers_;
  std::vector<std::vector<int>> permutations_;
};

// Latent mixture with identity covariances. Weights default to 1/C.
struct LatentGMM {
  Matrix means;  // C × D
  Vector weights;

  int num_classes() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }

  static LatentGMM Uniform(Matrix means);
  // log N(z; μ_k, I) for every row of z (B × C).
  Matrix ComponentLogDensities(const Matrix& z) const;
};

double GaussianLogDensity(const Vector& z, const Vector& mean);

// log N(f(x); μ_k, I) + log|det ∂f/∂x|, per row of x.
Vector LogProbConditional(const FlowModel& flow, const LatentGMM& gmm,
                          const Matrix& x, int k);
double LogProbConditional(const FlowModel& flow, const LatentGMM& gmm,
                          const Vector& x, int k);

// log Σ_k w_k N(f(x); μ_k, I) + log|det ∂f/∂x|, log-sum-exp stabilized.
Vector LogProbMarginal(const FlowModel& flow, const LatentGMM& gmm,
                       const Matrix& x);
double LogProbMarginal(const FlowModel& flow, const LatentGMM& gmm,
                       const Vector& x);

// Row-wise log Σ exp.
Vector LogSumExpRows(const Matrix& values);

}  // namespace ceflow

#endif  // CEFLOW_FLOW_H_
