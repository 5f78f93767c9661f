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

#ifndef CEFLOW_DATA_H_
#define CEFLOW_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ceflow/common.h"
#include "json.hpp"

namespace ceflow {

struct CategoricalFeature {
  std::string name;
  int cardinality = 0;

  bool operator==(const CategoricalFeature&) const = default;
};

// Declares which columns are continuous, which are categorical (and their
// cardinalities) and which holds the label. Never inferred from data.
struct FeatureSchema {
  std::vector<std::string> continuous;
  std::vector<CategoricalFeature> categorical;
  std::string target;
  int num_classes = 2;

  int num_continuous() const { return static_cast<int>(continuous.size()); }
  int num_categorical() const { return static_cast<int>(categorical.size()); }
  // Dimension of the flow's merged vector: categorical block then continuous.
  int full_dim() const { return num_categorical() + num_continuous(); }
  // Sum of cardinalities.
  int one_hot_dim() const;

  // Throws IngestionError on duplicate names, cardinality < 2, fewer than
  // two classes, or no features at all.
  void Validate() const;

  nlohmann::json ToJson() const;
  static FeatureSchema FromJson(const nlohmann::json& j);
  static FeatureSchema Load(const std::filesystem::path& path);

  bool operator==(const FeatureSchema&) const = default;
};

// Per-continuous-feature affine map to zero mean and unit (population) std.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer Identity(int dim);
  // Throws IngestionError naming the column when a std is zero.
  static Standardizer Fit(const Matrix& raw, const FeatureSchema& schema);

  Matrix Apply(const Matrix& raw) const;
  Matrix Invert(const Matrix& standardized) const;
  Vector ApplyRow(const Vector& raw) const;
  Vector InvertRow(const Vector& standardized) const;
};

// String level <-> integer code mappings, in first-appearance order.
struct LevelMap {
  std::vector<std::vector<std::string>> categorical;
  // Empty when the target column holds integer class ids.
  std::vector<std::string> target;

  bool operator==(const LevelMap&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  Matrix continuous;      // N × J
  IntMatrix categorical;  // N × M, codes in [0, K_m)
  std::vector<int> labels;
  Standardizer stats;
  bool standardized = false;
  LevelMap levels;
  std::size_t dropped_rows = 0;

  std::size_t size() const { return labels.size(); }
  Dataset Subset(std::span<const std::size_t> rows) const;
  Dataset Concat(const Dataset& other) const;
};

// RFC 4180 parsing: comma separated, double-quoted fields, "" escapes a quote.
std::vector<std::vector<std::string>> ParseCsv(std::istream& in);
std::string CsvEscape(const std::string& field);
// Shortest decimal form that round-trips a double.
std::string FormatDouble(double value);

// Reads a CSV whose header contains every schema column (in any order).
// Rows with missing or unparseable cells are dropped and counted. When
// `known_levels` is given, string levels are coded against it first and
// unseen levels are appended.
Dataset LoadCsv(const std::filesystem::path& path, const FeatureSchema& schema,
                const LevelMap* known_levels = nullptr);
Dataset ReadCsv(std::istream& in, const FeatureSchema& schema,
                const LevelMap* known_levels = nullptr);

// Writes raw-unit rows using the dataset's level names.
void WriteCsv(const Dataset& raw, std::ostream& out);

// Fits statistics on `dataset` itself and standardizes it.
Dataset Standardize(const Dataset& dataset);
// Standardizes with externally fitted statistics (e.g. from the train split).
Dataset ApplyStandardization(const Dataset& dataset, const Standardizer& stats);
Dataset Destandardize(const Dataset& dataset);

// Random disjoint partition; the test part has round(N * test_fraction) rows.
std::pair<Dataset, Dataset> Split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed);

struct SynthSpec {
  int continuous = 4;
  int categorical = 2;
  int cardinality = 3;
  int classes = 2;
  double separation = 6.0;
};

FeatureSchema SynthSchema(const SynthSpec& spec);

// Class-conditional mixed-type data in raw units. Class 0 continuous mean is
// the origin, class k ≥ 1 sits `separation` along axis (k-1) mod J, unit
// variance. Each class puts probability 0.7 on category (k + m) mod K of
// categorical feature m and spreads the rest uniformly. Labels cycle 0..C-1.
Dataset SynthGenerate(std::uint64_t seed, std::size_t n, const SynthSpec& spec);

}  // namespace ceflow

#endif  // CEFLOW_DATA_H_
