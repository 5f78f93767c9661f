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

#ifndef CEFLOW_METRICS_H_
#define CEFLOW_METRICS_H_

// Evaluation metrics for counterfactual methods, the two comparison
// baselines, and the benchmark harness that runs them side by side.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ceflow/cegen.h"
#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/dequantizer.h"
#include "ceflow/flow.h"

namespace ceflow {

// A query and the counterfactual produced for it.
struct EvaluatedCounterfactual {
  Vector original;  // standardized continuous
  Vector original_raw;
  IntVector original_categorical;
  CounterfactualResult result;
};

double SuccessRate(std::span<const EvaluatedCounterfactual> items);

// Σ_j |Δ standardized continuous_j| + #changed categorical codes.
double L1Distance(const EvaluatedCounterfactual& item);
// Population mean and variance of L1Distance.
std::pair<double, double> L1Stats(std::span<const EvaluatedCounterfactual> items);

// Mean fraction of unchanged categorical codes; nullopt when M == 0.
std::optional<double> ProximityCategorical(
    std::span<const EvaluatedCounterfactual> items);
// Mean of -(1/J) Σ_j |Δ raw_j| / mad_j; 0 when J == 0.
double ProximityContinuous(std::span<const EvaluatedCounterfactual> items,
                           const Vector& mad);

// Per-column median absolute deviation of raw values; columns whose MAD is 0
// fall back to the population std.
Vector MedianAbsoluteDeviation(const Matrix& raw);

// log p(x_cat, x_con) estimated by importance sampling over `k_mc`
// dequantization draws: log mean_k exp(log p_flow(z_k, x_con) - log q(u_k)).
double LogDensity(const FlowModel& flow, const LatentGMM& gmm,
                  const Dequantizer& deq, const Vector& continuous,
                  const IntVector& categorical, int k_mc, std::uint64_t seed);
// Mean LogDensity over the counterfactuals; item i uses DeriveSeed(seed, i).
double LogDensityMetric(const FlowModel& flow, const LatentGMM& gmm,
                        const Dequantizer& deq,
                        std::span<const EvaluatedCounterfactual> items,
                        int k_mc, std::uint64_t seed);

struct GrowingSpheresConfig {
  double initial_radius = 0.1;
  double step = 0.1;
  int samples = 100;
  double max_radius = 5.0;
};

// Samples uniformly in annuli [r, r + step) around the encoded query
// (standardized continuous + one-hot) with r growing from 0, decodes each
// categorical block to its largest coordinate and returns the first sample
// the classifier assigns to y_cf. Unsuccessful when r exceeds max_radius.
CounterfactualResult GrowingSpheres(const Classifier& clf,
                                    const Standardizer& stats,
                                    const Vector& continuous,
                                    const IntVector& categorical, int y_cf,
                                    const GrowingSpheresConfig& config,
                                    std::uint64_t seed);

struct RandomPerturbationConfig {
  double sigma = 1.0;
  int trials = 1000;
};

// Isotropic Gaussian perturbations of the encoded query; first flip wins.
CounterfactualResult RandomPerturbation(const Classifier& clf,
                                        const Standardizer& stats,
                                        const Vector& continuous,
                                        const IntVector& categorical, int y_cf,
                                        const RandomPerturbationConfig& config,
                                        std::uint64_t seed);

struct MetricsReport {
  std::string method;
  double success = 0.0;  // percent
  double l1_mean = 0.0;
  double l1_var = 0.0;
  double log_density = 0.0;
  std::optional<double> prox_cat;
  double prox_con = 0.0;
  double time_mean_s = 0.0;
  double time_std_s = 0.0;
  std::size_t n = 0;
  int repetitions = 1;
  // Standard deviation across repetitions of each averaged metric.
  double success_rep_std = 0.0;
  double l1_mean_rep_std = 0.0;
  double l1_var_rep_std = 0.0;
  double log_density_rep_std = 0.0;
};

// Computes a single-repetition report from evaluated counterfactuals.
MetricsReport Summarize(const std::string& method,
                        std::span<const EvaluatedCounterfactual> items,
                        const FlowModel& flow, const LatentGMM& gmm,
                        const Dequantizer& deq, const Vector& mad, int k_mc,
                        std::uint64_t seed);

struct AlphaMode {
  bool search = true;
  double fixed = 1.0;
  std::vector<double> grid = AlphaGrid();

  // "search" or "fixed:<value>".
  static AlphaMode Parse(const std::string& text);
  std::string ToString() const;
};

struct BenchmarkConfig {
  std::vector<std::string> methods = {"ceflow", "growing-spheres", "random"};
  AlphaMode alpha;
  bool signed_delta = true;
  GrowingSpheresConfig growing_spheres;
  RandomPerturbationConfig random;
  int repetitions = 10;
  std::size_t max_instances = 200;
  int k_mc_eval = 8;
};

struct Artifacts {
  const FlowModel& flow;
  const Dequantizer& dequantizer;
  const LatentGMM& gmm;
  const ClassMeans& class_means;
  const Classifier& classifier;
  const Standardizer& stats;
  Vector mad;
};

// Runs `method` over the first max_instances rows of `eval` (standardized)
// with target (prediction + 1) mod C. Row i of repetition r uses seed
// DeriveSeed(DeriveSeed(seed, r), i).
std::vector<EvaluatedCounterfactual> RunMethod(const std::string& method,
                                               const Dataset& eval,
                                               const Artifacts& artifacts,
                                               const BenchmarkConfig& config,
                                               std::uint64_t seed);

std::vector<MetricsReport> Benchmark(const Dataset& eval,
                                     const Artifacts& artifacts,
                                     const BenchmarkConfig& config,
                                     std::uint64_t seed);

// Success rate (percent) of CeFlow at each fixed α of `grid`.
std::vector<std::pair<double, double>> AlphaSweep(const Dataset& eval,
                                                  const Artifacts& artifacts,
                                                  std::span<const double> grid,
                                                  const BenchmarkConfig& config,
                                                  std::uint64_t seed);

std::string ReportCsv(std::span<const MetricsReport> reports);
std::string ReportMarkdown(std::span<const MetricsReport> reports);
std::string AlphaSweepCsv(std::span<const std::pair<double, double>> sweep);

}  // namespace ceflow

#endif  // CEFLOW_METRICS_H_
