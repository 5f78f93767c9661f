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

#include "ceflow/cegen.h"

#include <chrono>
#include <cmath>
#include <string>

namespace ceflow {

ClassMeans ComputeClassMeans(const FlowModel& flow, const Dequantizer& deq,
                             const Classifier& clf, const Dataset& data,
                             std::uint64_t seed) {
  if (data.size() == 0) throw GenerationSetupError("class means: empty dataset");
  const int C = data.schema.num_classes;
  const auto n = static_cast<Eigen::Index>(data.size());
  const std::vector<int> predicted = clf.Predict(data);

  Matrix z_cat(n, data.schema.num_categorical());
  for (Eigen::Index r = 0; r < n; ++r) {
    auto [z, log_q] = deq.Dequantize(IntVector(data.categorical.row(r).transpose()),
                                     DeriveSeed(seed, static_cast<std::uint64_t>(r)));
    (void)log_q;
    z_cat.row(r) = z.transpose();
  }
  const Matrix latent = flow.Forward(Merge(z_cat, data.continuous)).first;

  ClassMeans out;
  out.means = Matrix::Zero(C, flow.dim());
  out.counts.assign(C, 0);
  for (Eigen::Index r = 0; r < n; ++r) {
    out.means.row(predicted[r]) += latent.row(r);
    ++out.counts[predicted[r]];
  }
  for (int k = 0; k < C; ++k) {
    if (out.counts[k] == 0) {
      throw GenerationSetupError("class means: no training rows predicted as class " +
                                 std::to_string(k));
    }
    out.means.row(k) /= static_cast<double>(out.counts[k]);
  }
  return out;
}

Vector TranslationVector(const ClassMeans& means, int y_org, int y_cf,
                         bool signed_delta) {
  const auto C = static_cast<int>(means.means.rows());
  if (y_org < 0 || y_org >= C || y_cf < 0 || y_cf >= C) {
    throw ContractError("translation: class index out of range");
  }
  if (y_org == y_cf) {
    throw ContractError("translation: original and target class are both " +
                        std::to_string(y_org));
  }
  Vector delta = (means.means.row(y_cf) - means.means.row(y_org)).transpose();
  if (!signed_delta) delta = delta.cwiseAbs();
  return delta;
}

std::vector<double> AlphaGrid(double max, double step) {
  if (!(step > 0.0) || !(max > 0.0)) throw ContractError("alpha grid: bad range");
  std::vector<double> grid;
  const auto count = static_cast<int>(std::llround(max / step));
  // Rounded so 3 * 0.1 is stored as 0.3.
  for (int i = 1; i <= count; ++i) grid.push_back(std::round(step * i * 1e12) / 1e12);
  return grid;
}

CounterfactualGenerator::CounterfactualGenerator(
    const FlowModel& flow, const Dequantizer& deq, const ClassMeans& means,
    const Classifier& clf, const Standardizer& stats, GeneratorOptions options)
    : flow_(flow), deq_(deq), means_(means), clf_(clf), stats_(stats),
      options_(options) {
  if (means_.means.cols() != flow_.dim()) {
    throw ShapeError("generator: class means do not match flow dimension");
  }
}

CounterfactualGenerator::Encoded CounterfactualGenerator::Encode(
    const Vector& continuous, const IntVector& categorical,
    std::uint64_t seed) const {
  const FeatureSchema& schema = clf_.schema();
  if (continuous.size() != schema.num_continuous() ||
      categorical.size() != schema.num_categorical()) {
    throw ShapeError("generator: query does not match schema");
  }
  auto [z_cat, log_q] = deq_.Dequantize(categorical, seed);
  (void)log_q;
  return {flow_.Forward(Merge(z_cat, continuous)).first,
          clf_.Predict(continuous, categorical)};
}

CounterfactualResult CounterfactualGenerator::Decode(const Vector& z_cf) const {
  const FeatureSchema& schema = clf_.schema();
  CounterfactualResult r;
  r.full = flow_.Inverse(z_cf);
  auto [z_cat, x_con] = Unmerge(r.full, schema.num_categorical());
  r.categorical = Quantize(z_cat, schema);
  r.continuous = x_con;
  r.continuous_raw = stats_.InvertRow(x_con);
  return r;
}

CounterfactualResult CounterfactualGenerator::Generate(
    const Vector& continuous, const IntVector& categorical, int y_cf,
    double alpha, std::uint64_t seed) const {
  const double grid[] = {alpha};
  return AlphaSearch(continuous, categorical, y_cf, grid, seed);
}

CounterfactualResult CounterfactualGenerator::AlphaSearch(
    const Vector& continuous, const IntVector& categorical, int y_cf,
    std::span<const double> grid, std::uint64_t seed) const {
  if (grid.empty()) throw ContractError("alpha search: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && grid[i] < grid[i - 1])) {
      throw ContractError("alpha search: grid must be ascending and >= 0");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const Encoded enc = Encode(continuous, categorical, seed);

  CounterfactualResult result;
  if (enc.y_org == y_cf) {
    result = Decode(enc.z);
    result.alpha = 0.0;
    result.latent_shift = 0.0;
    result.success = clf_.Predict(result.continuous, result.categorical) == y_cf;
  } else {
    const Vector delta =
        TranslationVector(means_, enc.y_org, y_cf, options_.signed_delta);
    for (double alpha : grid) {
      result = Decode(enc.z + alpha * delta);
      result.alpha = alpha;
      result.latent_shift = alpha * delta.norm();
      result.success =
          clf_.Predict(result.continuous, result.categorical) == y_cf;
      if (result.success) break;
    }
  }
  result.y_org = enc.y_org;
  result.y_cf = y_cf;
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

}  // namespace ceflow
