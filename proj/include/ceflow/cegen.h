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

#ifndef CEFLOW_CEGEN_H_
#define CEFLOW_CEGEN_H_

// Counterfactual generation by latent translation:
//
//   x_cf = f⁻¹( f(x_org) + α · Δ ),   Δ = μ_{y_cf} - μ_{y_org}
//
// where μ_k is the mean latent code of the training rows the black box
// assigns to class k.

#include <cstdint>
#include <span>
#include <vector>

#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/dequantizer.h"
#include "ceflow/flow.h"

namespace ceflow {

struct ClassMeans {
  Matrix means;  // C × D
  std::vector<std::size_t> counts;
};

// Groups rows by the classifier's prediction and averages f(dequantize(x))
// per group; row r is dequantized with DeriveSeed(seed, r). Throws
// GenerationSetupError naming any class with no members.
ClassMeans ComputeClassMeans(const FlowModel& flow, const Dequantizer& deq,
                             const Classifier& clf, const Dataset& data,
                             std::uint64_t seed);

// signed: μ_{y_cf} - μ_{y_org}. Unsigned: |μ_{y_org} - μ_{y_cf}| elementwise.
Vector TranslationVector(const ClassMeans& means, int y_org, int y_cf,
                         bool signed_delta = true);

struct CounterfactualResult {
  Vector continuous_raw;
  Vector continuous;  // standardized
  IntVector categorical;
  Vector full;  // f⁻¹ output before quantization
  int y_org = 0;
  int y_cf = 0;
  double alpha = 0.0;
  bool success = false;
  double latent_shift = 0.0;
  double seconds = 0.0;
};

struct GeneratorOptions {
  bool signed_delta = true;
};

// 0.1, 0.2, ..., max (inclusive).
std::vector<double> AlphaGrid(double max = 2.0, double step = 0.1);

class CounterfactualGenerator {
 public:
  CounterfactualGenerator(const FlowModel& flow, const Dequantizer& deq,
                          const ClassMeans& means, const Classifier& clf,
                          const Standardizer& stats, GeneratorOptions options = {});

  // `continuous` is standardized. A query the classifier already assigns to
  // y_cf is returned unchanged with α = 0.
  CounterfactualResult Generate(const Vector& continuous,
                                const IntVector& categorical, int y_cf,
                                double alpha, std::uint64_t seed) const;

  // Smallest grid value whose counterfactual flips the classifier; the
  // largest value's result (success = false) when none does.
  CounterfactualResult AlphaSearch(const Vector& continuous,
                                   const IntVector& categorical, int y_cf,
                                   std::span<const double> grid,
                                   std::uint64_t seed) const;

 private:
  struct Encoded {
    Vector z;
    int y_org;
  };
  Encoded Encode(const Vector& continuous, const IntVector& categorical,
                 std::uint64_t seed) const;
  CounterfactualResult Decode(const Vector& z_cf) const;

  const FlowModel& flow_;
  const Dequantizer& deq_;
  const ClassMeans& means_;
  const Classifier& clf_;
  const Standardizer& stats_;
  GeneratorOptions options_;
};

}  // namespace ceflow

#endif  // CEFLOW_CEGEN_H_
